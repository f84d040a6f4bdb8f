#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absa/tensor.hpp"

namespace absa {

using ParamId = std::size_t;

// Owns every trainable tensor of a model. Components refer to parameters by
// ParamId so that a model stays copyable by value.
//
// A parameter marked row-sparse (embedding tables) receives gradients as a
// map of touched rows instead of a dense tensor.
class ParameterStore {
 public:
  ParamId add(std::string name, Tensor value, bool row_sparse = false);

  std::size_t count() const noexcept { return entries_.size(); }
  const std::string& name(ParamId id) const { return entries_.at(id).name; }
  bool row_sparse(ParamId id) const { return entries_.at(id).row_sparse; }
  Tensor& value(ParamId id) { return entries_.at(id).value; }
  const Tensor& value(ParamId id) const { return entries_.at(id).value; }
  std::optional<ParamId> find(const std::string& name) const;

  // Total number of scalar coordinates across all parameters.
  std::size_t scalar_count() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

  bool all_finite() const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool row_sparse = false;
  };
  std::vector<Entry> entries_;
};

// Gradient buffers shaped after a ParameterStore.
class Gradients {
 public:
  using RowMap = std::map<std::size_t, std::vector<double>>;

  explicit Gradients(const ParameterStore& store);

  std::size_t count() const noexcept { return slots_.size(); }

  Tensor& dense(ParamId id);
  const Tensor& dense(ParamId id) const;
  const RowMap& rows(ParamId id) const;

  void add_dense(ParamId id, const Tensor& g);
  void add_row(ParamId id, std::size_t row, std::span<const double> g, double scale = 1.0);
  void add(const Gradients& other);
  void scale(double factor);
  void zero();

  double norm() const;
  // Global-norm clipping across all parameters. Returns the pre-clip norm.
  double clip(double max_norm);

  // Dense image aligned with ParameterStore::flatten().
  std::vector<double> flatten(const ParameterStore& store) const;

  bool all_finite() const;

 private:
  struct Slot {
    bool row_sparse = false;
    std::size_t row_width = 0;
    Tensor dense;
    RowMap rows;
  };
  std::vector<Slot> slots_;
};

// param <- param - lr * grad for every parameter; sparse parameters only touch
// rows present in the gradient.
void sgd_step(ParameterStore& store, const Gradients& grads, double lr);

}  // namespace absa
