#include "absa/params.hpp"

#include <cmath>

namespace absa {

ParamId ParameterStore::add(std::string name, Tensor value, bool row_sparse) {
  if (row_sparse && value.rank() != 2) {
    throw DimensionError("row-sparse parameter '" + name + "' must be a matrix");
  }
  entries_.push_back({std::move(name), std::move(value), row_sparse});
  return entries_.size() - 1;
}

std::optional<ParamId> ParameterStore::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return i;
  return std::nullopt;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ParameterStore::flatten() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& e : entries_) out.insert(out.end(), e.value.data().begin(), e.value.data().end());
  return out;
}

void ParameterStore::assign_flat(std::span<const double> values) {
  if (values.size() != scalar_count()) {
    throw DimensionError("assign_flat: expected " + std::to_string(scalar_count()) + " values, got " +
                         std::to_string(values.size()));
  }
  std::size_t off = 0;
  for (auto& e : entries_) {
    auto dst = e.value.data();
    std::copy(values.begin() + off, values.begin() + off + dst.size(), dst.begin());
    off += dst.size();
  }
}

std::vector<Tensor> ParameterStore::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.value);
  return out;
}

void ParameterStore::restore(const std::vector<Tensor>& values) {
  if (values.size() != entries_.size()) throw DimensionError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != entries_[i].value.shape()) {
      throw DimensionError("restore: shape mismatch for '" + entries_[i].name + "'");
    }
    entries_[i].value = values[i];
  }
}

bool ParameterStore::all_finite() const {
  for (const auto& e : entries_)
    if (!e.value.all_finite()) return false;
  return true;
}

Gradients::Gradients(const ParameterStore& store) {
  slots_.resize(store.count());
  for (ParamId id = 0; id < store.count(); ++id) {
    auto& slot = slots_[id];
    slot.row_sparse = store.row_sparse(id);
    if (slot.row_sparse) {
      slot.row_width = store.value(id).cols();
    } else {
      slot.dense = Tensor(store.value(id).shape());
    }
  }
}

Tensor& Gradients::dense(ParamId id) {
  auto& slot = slots_.at(id);
  if (slot.row_sparse) throw DimensionError("dense gradient requested for a row-sparse parameter");
  return slot.dense;
}

const Tensor& Gradients::dense(ParamId id) const {
  const auto& slot = slots_.at(id);
  if (slot.row_sparse) throw DimensionError("dense gradient requested for a row-sparse parameter");
  return slot.dense;
}

const Gradients::RowMap& Gradients::rows(ParamId id) const {
  const auto& slot = slots_.at(id);
  if (!slot.row_sparse) throw DimensionError("row gradient requested for a dense parameter");
  return slot.rows;
}

void Gradients::add_dense(ParamId id, const Tensor& g) {
  Tensor& dst = dense(id);
  if (dst.size() != g.size()) {
    throw DimensionError("add_dense: " + shape_string(dst.shape()) + " vs " + shape_string(g.shape()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Gradients::add_row(ParamId id, std::size_t row, std::span<const double> g, double scale) {
  auto& slot = slots_.at(id);
  if (!slot.row_sparse) throw DimensionError("add_row on a dense parameter");
  if (g.size() != slot.row_width) throw DimensionError("add_row: row width mismatch");
  auto [it, inserted] = slot.rows.try_emplace(row, slot.row_width, 0.0);
  auto& dst = it->second;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += scale * g[i];
}

void Gradients::add(const Gradients& other) {
  if (other.slots_.size() != slots_.size()) throw DimensionError("Gradients::add: slot count mismatch");
  for (ParamId id = 0; id < slots_.size(); ++id) {
    if (slots_[id].row_sparse) {
      for (const auto& [row, g] : other.slots_[id].rows) add_row(id, row, g);
    } else {
      add_dense(id, other.slots_[id].dense);
    }
  }
}

void Gradients::scale(double factor) {
  for (auto& slot : slots_) {
    for (auto& v : slot.dense.data()) v *= factor;
    for (auto& [row, g] : slot.rows)
      for (auto& v : g) v *= factor;
  }
}

void Gradients::zero() {
  for (auto& slot : slots_) {
    slot.dense.fill(0.0);
    slot.rows.clear();
  }
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& slot : slots_) {
    for (double v : slot.dense.data()) sq += v * v;
    for (const auto& [row, g] : slot.rows)
      for (double v : g) sq += v * v;
  }
  return std::sqrt(sq);
}

double Gradients::clip(double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip: max_norm must be positive");
  const double n = norm();
  if (n > max_norm) scale(max_norm / n);
  return n;
}

std::vector<double> Gradients::flatten(const ParameterStore& store) const {
  std::vector<double> out;
  out.reserve(store.scalar_count());
  for (ParamId id = 0; id < slots_.size(); ++id) {
    const auto& slot = slots_[id];
    if (!slot.row_sparse) {
      out.insert(out.end(), slot.dense.data().begin(), slot.dense.data().end());
      continue;
    }
    const std::size_t base = out.size();
    out.resize(base + store.value(id).size(), 0.0);
    for (const auto& [row, g] : slot.rows)
      std::copy(g.begin(), g.end(), out.begin() + static_cast<std::ptrdiff_t>(base + row * slot.row_width));
  }
  return out;
}

bool Gradients::all_finite() const {
  for (const auto& slot : slots_) {
    if (!slot.dense.all_finite()) return false;
    for (const auto& [row, g] : slot.rows)
      for (double v : g)
        if (!std::isfinite(v)) return false;
  }
  return true;
}

void sgd_step(ParameterStore& store, const Gradients& grads, double lr) {
  for (ParamId id = 0; id < store.count(); ++id) {
    Tensor& p = store.value(id);
    if (store.row_sparse(id)) {
      for (const auto& [row, g] : grads.rows(id)) {
        auto dst = p.row(row);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] -= lr * g[i];
      }
    } else {
      const Tensor& g = grads.dense(id);
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
    }
  }
}

}  // namespace absa
