#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <vector>

#include "rgcd/autodiff/array.hpp"

namespace rgcd::ad {

enum class OpKind {
  constant,
  parameter,
  add,
  sub,
  mul,
  div,
  scale,
  shift,
  tanh,
  square,
  sqrt_shifted,
  sum,
  mean,
  row_sum,
  matmul,
  transpose,
  reshape,
  slice,
  gather,
  concat,
  broadcast,
};

const char* op_name(OpKind kind);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  const Array& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in creation order, so the node list
// is already topologically sorted; backward walks it once in reverse.
//
// A tape supports a single backward sweep. Build a fresh tape per step.
class Tape {
 public:
  // Receives the gradient flowing into the node and scatters it into the
  // parents' accumulators through `Tape::accumulate`.
  using BackwardFn = std::function<void(Tape&, const Array& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Array value);
  Var parameter(Array value);

  // Appends an op node. `backward` may be empty when no parent needs a
  // gradient; the tape then skips the node during the sweep.
  Var push(OpKind kind, std::vector<std::size_t> parents, Array value, BackwardFn backward);

  void backward(Var root);

  const Array& value(Var v) const;
  const Array& value(std::size_t id) const;
  const Array& grad(Var v) const;
  bool requires_grad(Var v) const;
  bool requires_grad(std::size_t id) const;
  OpKind kind(Var v) const;
  const std::vector<std::size_t>& parents(Var v) const;

  // Every node's gradient after backward, keyed by node id.
  std::map<std::size_t, Array> gradient_map() const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool swept() const noexcept { return swept_; }

  // Adds `g` into the gradient accumulator of node `id`. Only valid during
  // the backward sweep.
  void accumulate(std::size_t id, const Array& g);
  Array& grad_slot(std::size_t id);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> parents;
    Array value;
    Array grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(std::size_t id) const;
  Var add_leaf(OpKind kind, Array value, bool requires_grad);

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace rgcd::ad
