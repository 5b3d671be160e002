#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

#include "recall/core/tensor.hpp"

namespace recall {

template <class Real>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives.
template <class Real>
struct Var {
  Tape<Real>* tape = nullptr;
  int id = -1;

  const Shape& shape() const { return tape->shape(id); }
  std::span<const Real> value() const { return tape->value(id); }
  std::size_t size() const { return tape->value(id).size(); }
  std::size_t cols() const { return shape().empty() ? 1 : shape().back(); }
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }
  Real item() const { return tape->value(id).front(); }
};

// Records primitive applications in creation order. Because every node is
// created after its inputs, walking the record backwards visits each node
// after all of its consumers.
//
// A tape is single-writer. Distinct tapes may be used on distinct threads.
template <class Real>
class Tape {
 public:
  // Backward rule: reads grad(self) and accumulates into its inputs' grads.
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant input; never receives a gradient.
  Var<Real> constant(const Tensor<Real>& t) { return push("constant", t.shape, t.data, false, {}); }
  Var<Real> constant(Shape shape, std::vector<Real> values);

  // Free leaf that receives a gradient readable through grad().
  Var<Real> variable(const Tensor<Real>& t) { return push("variable", t.shape, t.data, grad_enabled_, {}); }

  // Leaf bound to `p`: backward() accumulates the node gradient into p.grad.
  Var<Real> parameter(Tensor<Real>& p);

  // Appends a derived node. `fn` is dropped when no input requires a gradient.
  Var<Real> record(const char* op, Shape shape, std::vector<Real> value, std::initializer_list<int> inputs,
                   BackwardFn fn);
  Var<Real> record(const char* op, Shape shape, std::vector<Real> value, const std::vector<int>& inputs,
                   BackwardFn fn);

  // Seeds d(root)/d(root) = 1 and replays every backward rule in reverse order.
  void backward(Var<Real> root);

  const Shape& shape(int id) const { return nodes_[id].shape; }
  std::span<const Real> value(int id) const { return nodes_[id].value; }
  const std::vector<Real>& value_vec(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const char* op(int id) const { return nodes_[id].op; }

  // Gradient buffer of a node, allocated (zero-filled) on first access.
  std::vector<Real>& grad(int id);
  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  Tensor<Real> tensor(Var<Real> v) const { return Tensor<Real>(nodes_[v.id].shape, nodes_[v.id].value); }

  // When disabled, no backward rules are kept (inference mode).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  // When enabled, every recorded value is scanned and a NumericError naming the
  // primitive is thrown on the first non-finite entry.
  void set_check_finite(bool on) { check_finite_ = on; }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Shape shape;
    std::vector<Real> value;
    std::vector<Real> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<Real> push(const char* op, Shape shape, std::vector<Real> value, bool requires_grad, BackwardFn fn);

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Tensor<Real>*>> bindings_;
  bool grad_enabled_ = true;
  bool check_finite_ = false;
};

}  // namespace recall
