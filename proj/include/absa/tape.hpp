#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "absa/params.hpp"
#include "absa/tensor.hpp"

namespace absa {

struct Var {
  std::size_t id = 0;
};

// Records the forward pass as an ordered list of operations so that backward
// can replay their gradient rules in exact reverse order.
//
// Every value on the tape is 2-D; vectors are carried as 1 x n rows.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self, Gradients& sink)>;

  explicit Tape(bool record_grad = true) : record_grad_(record_grad) {}

  bool records_grad() const noexcept { return record_grad_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor value);
  // Leaf referencing a dense parameter. The store must outlive the tape, and
  // one tape may only read parameters of a single store.
  Var param(const ParameterStore& store, ParamId id);
  // Binds the tape to a store without reading a parameter.
  void bind(const ParameterStore& store);
  const ParameterStore* store() const noexcept { return store_; }

  // Appends a node. `inputs` are the node ids the op read; `backward` may be
  // empty for nodes without differentiable inputs.
  Var record(std::string_view op, std::vector<std::size_t> inputs, Tensor value, Backward backward);

  const Tensor& value(Var v) const { return value(v.id); }
  const Tensor& value(std::size_t id) const;
  // Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);
  Tensor& grad(Var v) { return grad(v.id); }
  bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule in reverse
  // order, accumulating parameter gradients into `sink`.
  void backward(Var loss, Gradients& sink);

  std::vector<std::string_view> ops() const;
  // Node ids in the order backward visited them during the last call.
  const std::vector<std::size_t>& backward_order() const noexcept { return visited_; }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
  };
  std::vector<Node> nodes_;
  std::vector<std::size_t> visited_;
  const ParameterStore* store_ = nullptr;
  bool record_grad_;
};

// Differentiable operations over tape values.
namespace ag {

Var matmul(Tape& t, Var a, Var b);
// a * b^T.
Var matmul_nt(Tape& t, Var a, Var b);
Var add(Tape& t, Var a, Var b);
// Adds a 1 x n bias row to every row of an m x n value.
Var add_row_bias(Tape& t, Var x, Var bias);
Var mul(Tape& t, Var a, Var b);
Var relu(Tape& t, Var x);
Var sigmoid(Tape& t, Var x);
Var tanh(Tape& t, Var x);
// Concatenates 1 x n rows into one row.
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, Var x, std::size_t begin, std::size_t count);
Var row(Tape& t, Var x, std::size_t r);
Var reshape(Tape& t, Var x, std::size_t rows, std::size_t cols);
// Stacks every `width` consecutive rows of a T x d value into one row of the
// (T - width + 1) x (width * d) result.
Var unfold(Tape& t, Var x, std::size_t width);
// Column-wise maximum over rows; the gradient flows to the first maximal row.
Var max_rows(Tape& t, Var x);
// Inverted dropout with a mask drawn from rng and frozen on the tape.
Var dropout(Tape& t, Var x, double rate, Mode mode, Rng& rng);
Var softmax_rows(Tape& t, Var x);
// Sum over rows of -log(p[r, gold[r]]), with the documented log clamp.
Var cross_entropy_rows(Tape& t, Var probs, const std::vector<std::size_t>& gold);
// sum(x .* weights), for building scalar test objectives.
Var weighted_sum(Tape& t, Var x, const Tensor& weights);
Var sum(Tape& t, const std::vector<Var>& scalars);

}  // namespace ag
}  // namespace absa
