#pragma once

#include <string>
#include <unordered_map>

#include "recall/blocks/params.hpp"
#include "recall/core/tape.hpp"

namespace recall {

// Binds parameters onto a tape on first use, so each forward pass reads the
// current values and backward() accumulates into the parameter gradients.
template <class Real>
class BoundParams {
 public:
  BoundParams(Tape<Real>& tape, ParameterSet<Real>& params) : tape_(tape), params_(params) {}

  Var<Real> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var<Real> v = tape_.parameter(params_.get(name));
    bound_.emplace(name, v);
    return v;
  }

  // Routes `name` to an arbitrary node instead of the stored parameter.
  void bind(const std::string& name, Var<Real> v) { bound_[name] = v; }

  Tape<Real>& tape() { return tape_; }

 private:
  Tape<Real>& tape_;
  ParameterSet<Real>& params_;
  std::unordered_map<std::string, Var<Real>> bound_;
};

}  // namespace recall
