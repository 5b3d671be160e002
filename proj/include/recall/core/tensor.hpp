#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "recall/core/errors.hpp"

namespace recall {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape);

// Dense row-major tensor. `grad` is either empty or the same size as `data`.
template <class Real>
struct Tensor {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;

  Tensor() = default;
  explicit Tensor(Shape s, Real fill = Real(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<Real> values) : shape(std::move(s)), data(std::move(values)) {
    require(numel(shape) == data.size(),
            "tensor: shape " + to_string(shape) + " does not match " + std::to_string(data.size()) + " values");
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  // Last extent; leading extents are treated as a batch of rows.
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  bool has_grad() const { return !grad.empty(); }
  void zero_grad() { grad.assign(data.size(), Real(0)); }

  Real& operator[](std::size_t i) { return data[i]; }
  const Real& operator[](std::size_t i) const { return data[i]; }
  Real& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const Real& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

}  // namespace recall
