#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hilomix/error.hpp"
#include "hilomix/numerics/matrix.hpp"

namespace hilomix {

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix gradient;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), gradient(value.rows(), value.cols()) {}

  void zero_grad() { gradient = Matrix(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] std::size_t rows() const { return value().rows(); }
  [[nodiscard]] std::size_t cols() const { return value().cols(); }
  [[nodiscard]] Tape& tape() const {
    if (tape_ == nullptr) throw ContractError("Var: not attached to a tape");
    return *tape_;
  }
  [[nodiscard]] std::size_t id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of executed operations. Nodes are appended in execution
/// order, so reverse index order is a reverse topological order.
class Tape {
 public:
  /// Receives the gradient of the node's output; adds into its inputs' sinks.
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix v) { return push(std::move(v), false, nullptr); }

  /// Leaf that receives a gradient but is not bound to a Parameter.
  Var variable(Matrix v) { return push(std::move(v), true, nullptr); }

  /// Leaf bound to `p`; backward() accumulates into p.gradient. Registering the
  /// same parameter twice returns the same node.
  Var parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(p.value, !frozen_.contains(&p), &p);
    param_nodes_.emplace(&p, v.id());
    return v;
  }

  /// Parameters registered after this call get no gradient.
  void freeze(const Parameter& p) { frozen_.emplace(&p, true); }

  Var record(Matrix value, std::initializer_list<Var> inputs, Backward fn) {
    bool needs = false;
    for (const Var& in : inputs) {
      if (&in.tape() != this) throw ContractError("Tape: input recorded on a different tape");
      needs = needs || nodes_[in.id()].requires_grad;
    }
    return push(std::move(value), needs, nullptr, needs ? std::move(fn) : Backward{});
  }

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer for `v`, allocated on first use; nullptr when `v` needs none.
  Matrix* grad_sink(const Var& v) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return nullptr;
    if (grads_.size() != nodes_.size()) grads_.resize(nodes_.size());
    Matrix& g = grads_[v.id()];
    if (g.empty() && !n.value.empty()) g = Matrix(n.value.rows(), n.value.cols());
    return &g;
  }

  /// Gradient of the last backward() w.r.t. `v` (zeros if unreachable).
  [[nodiscard]] Matrix grad(const Var& v) const {
    const Matrix& val = nodes_.at(v.id()).value;
    if (v.id() < grads_.size() && !grads_[v.id()].empty()) return grads_[v.id()];
    return Matrix(val.rows(), val.cols());
  }

  /// Reverse accumulation from a 1x1 loss node.
  void backward(const Var& loss) {
    const Matrix& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be 1x1, got " + lv.shape_string());
    }
    grads_.assign(nodes_.size(), Matrix{});
    if (!nodes_[loss.id()].requires_grad) return;
    grads_[loss.id()] = Matrix::scalar(1.0);
    for (std::size_t k = loss.id() + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (grads_[k].empty()) continue;
      if (n.backward) n.backward(*this, grads_[k]);
    }
    for (auto& n : nodes_) {
      if (n.param == nullptr || !n.requires_grad) continue;
      const std::size_t id = param_nodes_.at(n.param);
      if (!grads_[id].empty()) n.param->gradient += grads_[id];
    }
  }

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };

  Var push(Matrix v, bool requires_grad, Parameter* p, Backward fn = {}) {
    nodes_.push_back(Node{std::move(v), requires_grad, p, std::move(fn)});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::unordered_map<const Parameter*, bool> frozen_;
};

inline const Matrix& Var::value() const { return tape().value(id_); }

}  // namespace hilomix
