#include "recall/core/tape.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace recall {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <class Real>
Var<Real> Tape<Real>::constant(Shape shape, std::vector<Real> values) {
  require(numel(shape) == values.size(), "constant: shape/value size mismatch");
  return push("constant", std::move(shape), std::move(values), false, {});
}

template <class Real>
Var<Real> Tape<Real>::parameter(Tensor<Real>& p) {
  Var<Real> v = push("parameter", p.shape, p.data, grad_enabled_, {});
  if (grad_enabled_) bindings_.emplace_back(v.id, &p);
  return v;
}

template <class Real>
Var<Real> Tape<Real>::record(const char* op, Shape shape, std::vector<Real> value, std::initializer_list<int> inputs,
                             BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (int in : inputs) needs = needs || nodes_[in].requires_grad;
  }
  return push(op, std::move(shape), std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
}

template <class Real>
Var<Real> Tape<Real>::record(const char* op, Shape shape, std::vector<Real> value, const std::vector<int>& inputs,
                             BackwardFn fn) {
  bool needs = false;
  if (grad_enabled_) {
    for (int in : inputs) needs = needs || nodes_[in].requires_grad;
  }
  return push(op, std::move(shape), std::move(value), needs, needs ? std::move(fn) : BackwardFn{});
}

template <class Real>
Var<Real> Tape<Real>::push(const char* op, Shape shape, std::vector<Real> value, bool requires_grad, BackwardFn fn) {
  require(numel(shape) == value.size(),
          std::string(op) + ": value size " + std::to_string(value.size()) + " != shape " + to_string(shape));
  if (check_finite_) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (!std::isfinite(value[i])) {
        throw NumericError(std::string("non-finite value produced by primitive '") + op + "' at flat index " +
                           std::to_string(i));
      }
    }
  }
  Node node;
  node.op = op;
  node.shape = std::move(shape);
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<Real>{this, static_cast<int>(nodes_.size()) - 1};
}

template <class Real>
std::vector<Real>& Tape<Real>::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), Real(0));
  return n.grad;
}

template <class Real>
void Tape<Real>::backward(Var<Real> root) {
  require(root.tape == this, "backward: root belongs to another tape");
  require(nodes_[root.id].value.size() == 1, "backward: root must be a scalar");
  if (!nodes_[root.id].requires_grad) return;
  grad(root.id)[0] += Real(1);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && !n.grad.empty()) {
      n.backward(*this, id);
      if (check_finite_) {
        for (Real g : n.grad) {
          if (!std::isfinite(g)) throw NumericError(std::string("non-finite gradient at primitive '") + n.op + "'");
        }
      }
    }
  }
  for (auto& [id, target] : bindings_) {
    const Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    if (target->grad.size() != n.grad.size()) target->grad.assign(n.grad.size(), Real(0));
    for (std::size_t i = 0; i < n.grad.size(); ++i) target->grad[i] += n.grad[i];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace recall
