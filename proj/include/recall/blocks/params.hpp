#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "recall/blocks/config.hpp"
#include "recall/core/tensor.hpp"

namespace recall {

template <class Real>
struct Parameter {
  std::string name;
  Tensor<Real> tensor;
  // Decoupled weight decay applies to projection matrices and embeddings only.
  bool decay = false;
};

// Ordered, name-addressable parameter collection.
template <class Real>
class ParameterSet {
 public:
  Tensor<Real>& add(std::string name, Tensor<Real> t, bool decay) {
    require(!index_.count(name), "parameter '" + name + "' registered twice");
    index_.emplace(name, items_.size());
    items_.push_back({std::move(name), std::move(t), decay});
    return items_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor<Real>& get(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '" + name + "'");
    return items_[it->second].tensor;
  }
  const Tensor<Real>& get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "unknown parameter '" + name + "'");
    return items_[it->second].tensor;
  }

  std::vector<Parameter<Real>>& items() { return items_; }
  const std::vector<Parameter<Real>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.size();
    return n;
  }

  template <class To>
  ParameterSet<To> cast() const {
    ParameterSet<To> out;
    for (const auto& p : items_) out.add(p.name, tensor_cast<To>(p.tensor), p.decay);
    return out;
  }

 private:
  std::vector<Parameter<Real>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Names of the two vocabulary-sized tables.
inline constexpr const char* kEmbedName = "embed";
inline constexpr const char* kHeadName = "lm_head";

// Deterministic initialization:
//   projections and embeddings ~ N(0, 0.02); norm gains 1; biases 0; gates = gate_init;
//   SSM A_log = log(1..S) (mamba) or log(1) per head (mamba2); D = 1;
//   step-size bias = softplus^-1(dt), dt log-uniform in [0.001, 0.1];
//   conv kernel ~ U(-1/sqrt(W), 1/sqrt(W)).
ParameterSet<double> init_parameters(const ModelConfig& cfg, std::uint64_t seed);

// Parameter count excluding the input embedding and output projection tables.
std::size_t count_non_embedding(const ParameterSet<double>& params);

// Prefix of layer i parameters, e.g. "layers.3.".
std::string layer_prefix(std::size_t i);

}  // namespace recall
