#include "rgcd/autodiff/tape.hpp"

#include "rgcd/error.hpp"

namespace rgcd::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::scale: return "scale";
    case OpKind::shift: return "shift";
    case OpKind::tanh: return "tanh";
    case OpKind::square: return "square";
    case OpKind::sqrt_shifted: return "sqrt_shifted";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::row_sum: return "row_sum";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::slice: return "slice";
    case OpKind::gather: return "gather";
    case OpKind::concat: return "concat";
    case OpKind::broadcast: return "broadcast";
  }
  return "unknown";
}

const Array& Var::value() const {
  if (!tape_) throw Error("value() on an unbound Var");
  return tape_->value(id_);
}

Var Tape::add_leaf(OpKind kind, Array value, bool requires_grad) {
  if (swept_) throw Error("tape already swept; build a new tape");
  if (!value.all_finite()) throw NumericError(std::string("non-finite ") + op_name(kind) + " input");
  nodes_.push_back(Node{kind, {}, std::move(value), Array(), nullptr, requires_grad});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Array value) { return add_leaf(OpKind::constant, std::move(value), false); }

Var Tape::parameter(Array value) { return add_leaf(OpKind::parameter, std::move(value), true); }

Var Tape::push(OpKind kind, std::vector<std::size_t> parents, Array value, BackwardFn backward) {
  if (swept_) throw Error("tape already swept; build a new tape");
  if (!value.all_finite()) {
    throw NumericError(std::string("non-finite output from ") + op_name(kind));
  }
  bool needs = false;
  for (auto p : parents) {
    if (p >= nodes_.size()) throw Error("parent id out of range");
    needs = needs || nodes_[p].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(parents), std::move(value),
                        Array(), needs ? std::move(backward) : nullptr, needs});
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node(std::size_t id) const {
  if (id >= nodes_.size()) throw Error("node id out of range");
  return nodes_[id];
}

const Array& Tape::value(Var v) const { return node(v.id()).value; }
const Array& Tape::value(std::size_t id) const { return node(id).value; }

const Array& Tape::grad(Var v) const {
  if (!swept_) throw Error("grad() before backward()");
  return node(v.id()).grad;
}

bool Tape::requires_grad(Var v) const { return node(v.id()).requires_grad; }
bool Tape::requires_grad(std::size_t id) const { return node(id).requires_grad; }
OpKind Tape::kind(Var v) const { return node(v.id()).kind; }
const std::vector<std::size_t>& Tape::parents(Var v) const { return node(v.id()).parents; }

Array& Tape::grad_slot(std::size_t id) { return nodes_.at(id).grad; }

void Tape::accumulate(std::size_t id, const Array& g) {
  Node& n = nodes_.at(id);
  if (!n.requires_grad) return;
  if (g.size() != n.grad.size()) {
    throw ShapeError(std::string("gradient size mismatch into ") + op_name(n.kind));
  }
  auto dst = n.grad.values();
  auto src = g.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw Error("root belongs to another tape");
  if (swept_) throw Error("backward() may run once per tape");
  const Node& r = node(root.id());
  if (r.value.size() != 1) {
    throw ShapeError("backward root must be scalar, got " + shape_string(r.value.shape()));
  }
  for (auto& n : nodes_) n.grad = Array(n.value.shape(), 0.0);
  swept_ = true;
  nodes_[root.id()].grad[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward) continue;
    // nodes_ is not resized during the sweep, so the reference stays valid.
    n.backward(*this, n.grad);
  }
}

std::map<std::size_t, Array> Tape::gradient_map() const {
  if (!swept_) throw Error("gradient_map() before backward()");
  std::map<std::size_t, Array> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) out.emplace(i, nodes_[i].grad);
  return out;
}

}  // namespace rgcd::ad
