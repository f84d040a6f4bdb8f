#include <gtest/gtest.h>

#include <algorithm>

#include "absa/errors.hpp"
#include "absa/tape.hpp"
#include "support.hpp"

using namespace absa;
using absa::testing::check_gradients;

namespace {

using Builder = std::function<Var(Tape&, const ParameterStore&, const std::vector<ParamId>&)>;

// Random-input gradient check of one op wrapped in a random weighted sum.
void expect_op_gradients(const std::vector<Shape>& shapes, const Builder& op, int trials = 5) {
  std::vector<double> errors;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(100 + trial);
    ParameterStore store;
    std::vector<ParamId> ids;
    for (std::size_t i = 0; i < shapes.size(); ++i)
      ids.push_back(store.add("p" + std::to_string(i), Tensor::uniform(shapes[i], -1.5, 1.5, rng)));
    Tensor weights;
    bool sized = false;
    auto objective = [&](Tape& t) {
      const Var out = op(t, store, ids);
      if (!sized) {
        weights = Tensor::uniform(t.value(out).shape(), -1, 1, rng);
        sized = true;
      }
      return ag::weighted_sum(t, out, weights);
    };
    const auto r = check_gradients(store, objective);
    errors.insert(errors.end(), r.errors.begin(), r.errors.end());
  }
  ASSERT_FALSE(errors.empty());
  EXPECT_LE(absa::testing::percentile(errors, 0.95), 1e-4);
  EXPECT_LE(*std::max_element(errors.begin(), errors.end()), 1e-3);
}

Var p(Tape& t, const ParameterStore& s, ParamId id) { return t.param(s, id); }

}  // namespace

TEST(TapeGradients, Matmul) {
  expect_op_gradients({{3, 4}, {4, 2}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    return ag::matmul(t, p(t, s, id[0]), p(t, s, id[1]));
  });
}

TEST(TapeGradients, MatmulNt) {
  expect_op_gradients({{1, 5}, {3, 5}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    return ag::matmul_nt(t, p(t, s, id[0]), p(t, s, id[1]));
  });
}

TEST(TapeGradients, AddMulAndBias) {
  expect_op_gradients({{2, 3}, {2, 3}, {3}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    const Var a = p(t, s, id[0]);
    const Var b = p(t, s, id[1]);
    return ag::add_row_bias(t, ag::mul(t, ag::add(t, a, b), a), p(t, s, id[2]));
  });
}

TEST(TapeGradients, Nonlinearities) {
  expect_op_gradients({{2, 4}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    const Var x = p(t, s, id[0]);
    return ag::add(t, ag::add(t, ag::relu(t, x), ag::sigmoid(t, x)), ag::tanh(t, x));
  });
}

TEST(TapeGradients, ConcatSliceRowReshape) {
  expect_op_gradients({{3, 4}, {1, 2}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    const Var x = p(t, s, id[0]);
    const Var joined = ag::concat_cols(t, {ag::row(t, x, 2), p(t, s, id[1]), ag::row(t, x, 0)});
    return ag::reshape(t, ag::slice_cols(t, joined, 1, 8), 2, 4);
  });
}

TEST(TapeGradients, UnfoldAndMaxPool) {
  expect_op_gradients({{6, 3}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    return ag::max_rows(t, ag::unfold(t, p(t, s, id[0]), 3));
  });
}

TEST(TapeGradients, FrozenDropout) {
  expect_op_gradients({{3, 5}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    Rng rng(8);
    return ag::dropout(t, p(t, s, id[0]), 0.5, Mode::train, rng);
  });
}

TEST(TapeGradients, Softmax) {
  expect_op_gradients({{3, 4}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    return ag::softmax_rows(t, p(t, s, id[0]));
  });
}

TEST(TapeGradients, SoftmaxCrossEntropy) {
  expect_op_gradients({{3, 4}, {1, 1}}, [](Tape& t, const ParameterStore& s, const std::vector<ParamId>& id) {
    const Var probs = ag::softmax_rows(t, p(t, s, id[0]));
    const Var scalar = ag::weighted_sum(t, p(t, s, id[1]), Tensor::matrix(1, 1, {2.0}));
    return ag::sum(t, {ag::cross_entropy_rows(t, probs, {0, 3, 1}), scalar});
  });
}

TEST(Tape, ReluSubgradientConvention) {
  ParameterStore store;
  const ParamId x = store.add("x", Tensor::vector({-1, 3}));
  Tape t;
  const Var out = ag::weighted_sum(t, ag::relu(t, t.param(store, x)), Tensor::matrix(1, 2, {1, 1}));
  Gradients g(store);
  t.backward(out, g);
  EXPECT_EQ(g.dense(x), Tensor::vector({0, 1}));

  ParameterStore zero;
  const ParamId z = zero.add("z", Tensor::vector({0.0}));
  Tape t2;
  const Var out2 = ag::weighted_sum(t2, ag::relu(t2, t2.param(zero, z)), Tensor::matrix(1, 1, {1}));
  Gradients g2(zero);
  t2.backward(out2, g2);
  EXPECT_EQ(g2.dense(z)[0], 0.0);
}

TEST(Tape, BackwardVisitsInReverseOrder) {
  ParameterStore store;
  const ParamId a = store.add("a", Tensor::matrix(1, 2, {0.3, -0.2}));
  Tape t;
  const Var x = t.param(store, a);
  const Var y = ag::tanh(t, x);
  const Var z = ag::sigmoid(t, y);
  const Var loss = ag::weighted_sum(t, z, Tensor::matrix(1, 2, {1, 2}));
  Gradients g(store);
  t.backward(loss, g);
  const auto& order = t.backward_order();
  ASSERT_GE(order.size(), 3u);
  EXPECT_TRUE(std::is_sorted(order.rbegin(), order.rend()));
  EXPECT_EQ(order.front(), loss.id);
}

TEST(Tape, RowSparseParamsNotDirectlyReadable) {
  ParameterStore store;
  const ParamId e = store.add("emb", Tensor({4, 2}), true);
  Tape t;
  EXPECT_THROW(t.param(store, e), DimensionError);
}

TEST(Tape, OneStorePerTape) {
  ParameterStore a, b;
  const ParamId ia = a.add("x", Tensor::vector({1}));
  const ParamId ib = b.add("x", Tensor::vector({1}));
  Tape t;
  t.param(a, ia);
  EXPECT_THROW(t.param(b, ib), ConfigError);
}

TEST(Tape, InferenceTapeRefusesBackward) {
  ParameterStore store;
  const ParamId x = store.add("x", Tensor::vector({1}));
  Tape t(false);
  const Var v = ag::weighted_sum(t, t.param(store, x), Tensor::matrix(1, 1, {1}));
  Gradients g(store);
  EXPECT_THROW(t.backward(v, g), ConfigError);
}

TEST(Tape, InferDropoutIsBitExactIdentity) {
  Rng rng(3);
  Tape t(false);
  const Tensor x = Tensor::uniform({2, 6}, -1, 1, rng);
  const Var v = ag::dropout(t, t.constant(x), 0.5, Mode::infer, rng);
  EXPECT_EQ(t.value(v), x);
}
