#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "movebeam/autodiff.hpp"
#include "movebeam/container.hpp"
#include "movebeam/tensor.hpp"

namespace movebeam {

// Named learnable tensors with stable insertion order. Gradients accumulate
// here across per-utterance graphs; the optimizer consumes them in order.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  Tensor& add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("params: duplicate name " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(init), Tensor()});
    entries_.back().grad = Tensor(entries_.back().value.shape());
    return entries_.back().value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }
  Entry& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("params: unknown name " + name);
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("params: unknown name " + name);
    return entries_[it->second];
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
    grads_populated_ = false;
  }

  void mark_grads_populated() { grads_populated_ = true; }
  bool grads_populated() const { return grads_populated_; }

  long num_scalars() const {
    long n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  double grad_norm() const {
    double s = 0;
    for (const auto& e : entries_)
      for (long i = 0; i < e.grad.size(); ++i) s += e.grad[i] * e.grad[i];
    return std::sqrt(s);
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, size_t> index_;
  bool grads_populated_ = false;
};

// Create graph input nodes for every parameter; after Graph::backward the
// node gradients are folded back with accumulate_param_grads.
struct BoundParams {
  const ParameterStore* store = nullptr;
  std::vector<ad::Node*> nodes;  // aligned with store->entries()

  ad::Node* node(const std::string& name) const {
    const auto& entries = store->entries();
    for (size_t i = 0; i < entries.size(); ++i)
      if (entries[i].name == name) return nodes[i];
    throw std::invalid_argument("params: unknown name " + name);
  }
};

inline BoundParams bind_params(ad::Graph& g, const ParameterStore& store, bool trainable = true) {
  BoundParams b;
  b.store = &store;
  for (const auto& e : store.entries())
    b.nodes.push_back(trainable ? g.input(e.value) : g.constant(e.value));
  return b;
}

inline void accumulate_param_grads(ParameterStore& store, const BoundParams& bound,
                                   double scale = 1.0) {
  auto& entries = store.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    const Tensor& ng = bound.nodes[i]->grad;
    for (long j = 0; j < ng.size(); ++j) entries[i].grad[j] += scale * ng[j];
  }
  store.mark_grads_populated();
}

// Adam with bias correction; the per-parameter moments stay aligned with the
// store's entry order.
struct AdamState {
  long step_count = 0;
  std::vector<Tensor> m, v;
};

inline void adam_step(ParameterStore& params, AdamState& state, double lr = 5e-5,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
  if (!params.grads_populated())
    throw std::runtime_error("adam_step: gradients not populated");
  auto& entries = params.entries();
  if (state.m.empty()) {
    for (auto& e : entries) {
      state.m.emplace_back(e.value.shape());
      state.v.emplace_back(e.value.shape());
    }
  }
  if (state.m.size() != entries.size())
    throw std::runtime_error("adam_step: optimizer state does not match parameters");
  ++state.step_count;
  const double bc1 = 1.0 - std::pow(beta1, (double)state.step_count);
  const double bc2 = 1.0 - std::pow(beta2, (double)state.step_count);
  for (size_t p = 0; p < entries.size(); ++p) {
    auto& e = entries[p];
    for (long i = 0; i < e.value.size(); ++i) {
      double gi = e.grad[i];
      state.m[p][i] = beta1 * state.m[p][i] + (1.0 - beta1) * gi;
      state.v[p][i] = beta2 * state.v[p][i] + (1.0 - beta2) * gi * gi;
      double mhat = state.m[p][i] / bc1;
      double vhat = state.v[p][i] / bc2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// Checkpoint helpers: parameter stores serialize as one record per tensor
// with a name prefix.
inline void append_store_records(std::vector<Record>& records, const std::string& prefix,
                                 const ParameterStore& store) {
  for (const auto& e : store.entries())
    records.push_back(Record{prefix + "/" + e.name, 0, e.value, {}});
}

inline ParameterStore load_store_records(const std::vector<Record>& records,
                                         const std::string& prefix) {
  ParameterStore store;
  const std::string p = prefix + "/";
  for (const auto& r : records)
    if (r.dtype == 0 && r.name.rfind(p, 0) == 0) store.add(r.name.substr(p.size()), r.tensor);
  return store;
}

}  // namespace movebeam
