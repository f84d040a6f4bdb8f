#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "absa/errors.hpp"
#include "absa/rng.hpp"

namespace absa {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

// Dense row-major tensor of doubles. Vectors are 1-D, matrices 2-D.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // 2-D accessors; a 1-D tensor of length n behaves as a 1 x n row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;
  void fill(double v);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class Mode { train, infer };

namespace ops {

// C = A * B for A (m x k), B (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A^T * B for A (k x m), B (k x n).
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// C = A * B^T for A (m x k), B (n x k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Max-subtracted softmax over a whole vector.
Tensor softmax(const Tensor& x);
void softmax_inplace(std::span<double> x);

// Probabilities below this are clamped before taking the log.
inline constexpr double kLogClamp = 1e-12;

// -sum_i y_i log(yhat_i) with y one-hot (given by index) or a full vector.
double cross_entropy(std::size_t gold, std::span<const double> predicted);
double cross_entropy(const Tensor& target, const Tensor& predicted);

Tensor relu(const Tensor& x);

// Inverted dropout. In infer mode, or when rate == 0, returns x unchanged.
Tensor dropout(const Tensor& x, double rate, Mode mode, Rng& rng);
// The keep/scale mask a train-mode dropout call would apply: entries are 0
// or 1/(1-rate).
Tensor dropout_mask(const Shape& shape, double rate, Rng& rng);

// Global L2 norm over all gradients concatenated.
double global_norm(std::span<const Tensor> grads);
// Scales every gradient by max_norm/g when the global norm g exceeds max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> grads, double max_norm);

Tensor sgd_step(const Tensor& param, const Tensor& grad, double lr);

// Central-difference gradient estimate of f at params.
std::vector<double> finite_diff_gradient(const std::function<double(std::span<const double>)>& f,
                                         std::span<const double> params, double eps = 1e-5);

}  // namespace ops
}  // namespace absa
