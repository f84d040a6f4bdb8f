#include "absa/tape.hpp"

#include <algorithm>
#include <cmath>

namespace absa {

namespace {

Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  const std::size_t r = t.rows(), c = t.cols();
  return t.reshaped({r, c});
}

void accumulate(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::constant(Tensor value) { return record("constant", {}, as_matrix(std::move(value)), nullptr); }

void Tape::bind(const ParameterStore& store) {
  if (store_ != nullptr && store_ != &store) throw ConfigError("tape already records another parameter store");
  store_ = &store;
}

Var Tape::param(const ParameterStore& store, ParamId id) {
  bind(store);
  if (store.row_sparse(id)) throw DimensionError("row-sparse parameters are read through embedding lookups");
  Node node;
  node.op = "param";
  node.external = &store.value(id);
  if (node.external->rank() != 2) {
    // Tape values are matrices; a 1-D bias is viewed as a single row.
    node.owned = as_matrix(*node.external);
    node.external = nullptr;
  }
  if (record_grad_) {
    node.backward = [id](Tape& t, std::size_t self, Gradients& sink) { sink.add_dense(id, t.grad(self)); };
  }
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1};
}

Var Tape::record(std::string_view op, std::vector<std::size_t> inputs, Tensor value, Backward backward) {
  Node node;
  node.op = op;
  node.inputs = std::move(inputs);
  node.owned = std::move(value);
  if (record_grad_) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) {
    const Tensor& v = value(id);
    n.grad = Tensor(v.shape());
  }
  return n.grad;
}

void Tape::backward(Var loss, Gradients& sink) {
  if (!record_grad_) throw ConfigError("backward called on a tape that does not record gradients");
  if (value(loss).size() != 1) throw DimensionError("backward requires a scalar loss");
  visited_.clear();
  grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    visited_.push_back(i);
    n.backward(*this, i, sink);
  }
}

std::vector<std::string_view> Tape::ops() const {
  std::vector<std::string_view> out;
  out.reserve(nodes_.size());
  for (const auto& n : nodes_) out.push_back(n.op);
  return out;
}

namespace ag {

Var matmul(Tape& t, Var a, Var b) {
  Tensor out = ops::matmul(t.value(a), t.value(b));
  return t.record("matmul", {a.id, b.id}, std::move(out), [a, b](Tape& t, std::size_t self, Gradients&) {
    const Tensor& g = t.grad(self);
    accumulate(t.grad(a), ops::matmul_nt(g, t.value(b)));
    accumulate(t.grad(b), ops::matmul_tn(t.value(a), g));
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  Tensor out = ops::matmul_nt(t.value(a), t.value(b));
  return t.record("matmul_nt", {a.id, b.id}, std::move(out), [a, b](Tape& t, std::size_t self, Gradients&) {
    const Tensor& g = t.grad(self);
    accumulate(t.grad(a), ops::matmul(g, t.value(b)));
    accumulate(t.grad(b), ops::matmul_tn(g, t.value(a)));
  });
}

Var add(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.shape() != vb.shape()) {
    throw DimensionError("add: " + shape_string(va.shape()) + " vs " + shape_string(vb.shape()));
  }
  Tensor out = va;
  accumulate(out, vb);
  return t.record("add", {a.id, b.id}, std::move(out), [a, b](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    accumulate(t.grad(a), g);
    accumulate(t.grad(b), g);
  });
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  const Tensor& vx = t.value(x);
  const Tensor& vb = t.value(bias);
  if (vb.size() != vx.cols()) {
    throw DimensionError("add_row_bias: " + shape_string(vx.shape()) + " with bias " + shape_string(vb.shape()));
  }
  Tensor out = vx;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += vb[c];
  return t.record("add_row_bias", {x.id, bias.id}, std::move(out),
                  [x, bias](Tape& t, std::size_t self, Gradients&) {
                    const Tensor g = t.grad(self);
                    accumulate(t.grad(x), g);
                    Tensor& gb = t.grad(bias);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
                  });
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor& va = t.value(a);
  const Tensor& vb = t.value(b);
  if (va.shape() != vb.shape()) {
    throw DimensionError("mul: " + shape_string(va.shape()) + " vs " + shape_string(vb.shape()));
  }
  Tensor out = va;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
  return t.record("mul", {a.id, b.id}, std::move(out), [a, b](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    Tensor& ga = t.grad(a);
    const Tensor& vb = t.value(b);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    Tensor& gb = t.grad(b);
    const Tensor& va = t.value(a);
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
  });
}

Var relu(Tape& t, Var x) {
  Tensor out = ops::relu(t.value(x));
  return t.record("relu", {x.id}, std::move(out), [x](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    const Tensor& vx = t.value(x);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (vx[i] > 0.0) gx[i] += g[i];
  });
}

Var sigmoid(Tape& t, Var x) {
  Tensor out = t.value(x);
  for (auto& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  return t.record("sigmoid", {x.id}, std::move(out), [x](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    const Tensor y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var tanh(Tape& t, Var x) {
  Tensor out = t.value(x);
  for (auto& v : out.data()) v = std::tanh(v);
  return t.record("tanh", {x.id}, std::move(out), [x](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    const Tensor y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  std::size_t total = 0;
  std::vector<std::size_t> ids;
  for (Var p : parts) {
    if (t.value(p).rows() != 1) throw DimensionError("concat_cols expects 1 x n rows");
    total += t.value(p).size();
    ids.push_back(p.id);
  }
  Tensor out({1, total});
  std::size_t off = 0;
  for (Var p : parts) {
    const auto src = t.value(p).data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += src.size();
  }
  return t.record("concat_cols", ids, std::move(out), [parts](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    std::size_t off = 0;
    for (Var p : parts) {
      Tensor& gp = t.grad(p);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      off += gp.size();
    }
  });
}

Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count) {
  const Tensor& vx = t.value(x);
  if (begin + count > vx.cols()) throw DimensionError("slice_cols out of range for " + shape_string(vx.shape()));
  Tensor out({vx.rows(), count});
  for (std::size_t r = 0; r < vx.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out.at(r, c) = vx.at(r, begin + c);
  return t.record("slice_cols", {x.id}, std::move(out), [x, begin](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    Tensor& gx = t.grad(x);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx.at(r, begin + c) += g.at(r, c);
  });
}

Var row(Tape& t, Var x, std::size_t r) {
  const Tensor& vx = t.value(x);
  if (r >= vx.rows()) throw DimensionError("row index out of range for " + shape_string(vx.shape()));
  const auto src = vx.row(r);
  Tensor out({1, vx.cols()}, std::vector<double>(src.begin(), src.end()));
  return t.record("row", {x.id}, std::move(out), [x, r](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    auto dst = t.grad(x).row(r);
    for (std::size_t c = 0; c < g.size(); ++c) dst[c] += g[c];
  });
}

Var reshape(Tape& t, Var x, std::size_t rows, std::size_t cols) {
  Tensor out = t.value(x).reshaped({rows, cols});
  return t.record("reshape", {x.id}, std::move(out), [x](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    accumulate(t.grad(x), g);
  });
}

Var unfold(Tape& t, Var x, std::size_t width) {
  const Tensor& vx = t.value(x);
  const std::size_t len = vx.rows(), dim = vx.cols();
  if (width == 0 || width > len) {
    throw DimensionError("unfold: width " + std::to_string(width) + " exceeds " + std::to_string(len) + " rows");
  }
  const std::size_t positions = len - width + 1;
  Tensor out({positions, width * dim});
  for (std::size_t p = 0; p < positions; ++p) {
    // Rows p..p+width-1 are contiguous in row-major storage.
    const auto src = vx.data().subspan(p * dim, width * dim);
    std::copy(src.begin(), src.end(), out.row(p).begin());
  }
  return t.record("unfold", {x.id}, std::move(out), [x, dim](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    Tensor& gx = t.grad(x);
    for (std::size_t p = 0; p < g.rows(); ++p) {
      const auto src = g.row(p);
      for (std::size_t i = 0; i < src.size(); ++i) gx[p * dim + i] += src[i];
    }
  });
}

Var max_rows(Tape& t, Var x) {
  const Tensor& vx = t.value(x);
  const std::size_t rows = vx.rows(), cols = vx.cols();
  Tensor out({1, cols});
  std::vector<std::size_t> argmax(cols, 0);
  for (std::size_t c = 0; c < cols; ++c) {
    double best = vx.at(0, c);
    for (std::size_t r = 1; r < rows; ++r) {
      if (vx.at(r, c) > best) {
        best = vx.at(r, c);
        argmax[c] = r;
      }
    }
    out[c] = best;
  }
  return t.record("max_rows", {x.id}, std::move(out),
                  [x, argmax = std::move(argmax)](Tape& t, std::size_t self, Gradients&) {
                    const Tensor g = t.grad(self);
                    Tensor& gx = t.grad(x);
                    for (std::size_t c = 0; c < g.size(); ++c) gx.at(argmax[c], c) += g[c];
                  });
}

Var dropout(Tape& t, Var x, double rate, Mode mode, Rng& rng) {
  if (mode == Mode::infer || rate == 0.0) return x;
  Tensor mask = ops::dropout_mask(t.value(x).shape(), rate, rng);
  Tensor out = t.value(x);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return t.record("dropout", {x.id}, std::move(out),
                  [x, mask = std::move(mask)](Tape& t, std::size_t self, Gradients&) {
                    const Tensor g = t.grad(self);
                    Tensor& gx = t.grad(x);
                    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                  });
}

Var softmax_rows(Tape& t, Var x) {
  Tensor out = t.value(x);
  for (std::size_t r = 0; r < out.rows(); ++r) ops::softmax_inplace(out.row(r));
  return t.record("softmax_rows", {x.id}, std::move(out), [x](Tape& t, std::size_t self, Gradients&) {
    const Tensor g = t.grad(self);
    const Tensor y = t.value(self);
    Tensor& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

Var cross_entropy_rows(Tape& t, Var probs, const std::vector<std::size_t>& gold) {
  const Tensor& p = t.value(probs);
  if (gold.size() != p.rows()) {
    throw DimensionError("cross_entropy_rows: " + std::to_string(gold.size()) + " gold labels for " +
                         std::to_string(p.rows()) + " rows");
  }
  double loss = 0.0;
  for (std::size_t r = 0; r < p.rows(); ++r) loss += ops::cross_entropy(gold[r], p.row(r));
  return t.record("cross_entropy_rows", {probs.id}, Tensor({1, 1}, loss),
                  [probs, gold](Tape& t, std::size_t self, Gradients&) {
                    const double g = t.grad(self)[0];
                    const Tensor& p = t.value(probs);
                    Tensor& gp = t.grad(probs);
                    for (std::size_t r = 0; r < p.rows(); ++r) {
                      const double q = p.at(r, gold[r]);
                      // Clamped entries are constant in the loss.
                      if (q > ops::kLogClamp) gp.at(r, gold[r]) -= g / q;
                    }
                  });
}

Var weighted_sum(Tape& t, Var x, const Tensor& weights) {
  const Tensor& vx = t.value(x);
  if (vx.size() != weights.size()) throw DimensionError("weighted_sum: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < vx.size(); ++i) s += vx[i] * weights[i];
  return t.record("weighted_sum", {x.id}, Tensor({1, 1}, s), [x, weights](Tape& t, std::size_t self, Gradients&) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
  });
}

Var sum(Tape& t, const std::vector<Var>& scalars) {
  double s = 0.0;
  std::vector<std::size_t> ids;
  for (Var v : scalars) {
    if (t.value(v).size() != 1) throw DimensionError("sum expects scalar inputs");
    s += t.value(v)[0];
    ids.push_back(v.id);
  }
  return t.record("sum", ids, Tensor({1, 1}, s), [scalars](Tape& t, std::size_t self, Gradients&) {
    const double g = t.grad(self)[0];
    for (Var v : scalars) t.grad(v)[0] += g;
  });
}

}  // namespace ag
}  // namespace absa
