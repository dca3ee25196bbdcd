#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

#include "milfd/matrix.hpp"
#include "milfd/parameter.hpp"

namespace milfd {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  // The reference is invalidated once further nodes are recorded on the tape.
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode recording of one forward computation. Nodes are appended in
// evaluation order, so index order is a topological order of the graph.
class Tape {
 public:
  // Called once during backward with the node's own id. It reads
  // upstream(id) and adds into grad_buffer(input) for each input that
  // requires_grad.
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf whose gradient is kept on the tape (read back with grad()).
  Var input(Matrix value);
  // Leaf bound to a parameter; backward adds its gradient into p.grad.
  // Repeated calls for the same parameter return the same node.
  Var parameter(Parameter& p);

  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn fn);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return requires_grad(v.id()); }

  const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
  Matrix& grad_buffer(std::size_t id);

  // Gradient of the last backward() loss with respect to v (zeros if v did
  // not influence the loss).
  Matrix grad(Var v) const;

  // Full reverse sweep from a 1x1 loss node. May run once per tape.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until first accumulation
    bool requires_grad = false;
    Parameter* sink = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool backward_done_ = false;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

}  // namespace milfd
