#include "afsd/tensor/tape.hpp"

#include <string>

namespace afsd {

Tape& Var::tape() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return *tape_;
}

const Tensor& Var::value() const { return tape().value(id_); }
const Tensor& Var::grad() const { return tape().grad(id_); }
bool Var::requires_grad() const { return tape().requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  require_finite(value, "leaf tensor");
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw std::invalid_argument("tensor is not recorded on this tape");
  }
}

Var Tape::apply(std::unique_ptr<Op> op, std::span<const Var> inputs) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  Node node;
  for (const auto& v : inputs) {
    check_owned(v);
    values.push_back(&nodes_[v.id_].value);
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  node.value = op->forward(values);
  if (!node.value.all_finite()) {
    throw NumericError("non-finite output from op '" + std::string(op->name()) + "'");
  }
  node.op = std::move(op);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  check_owned(loss);
  const Node& root = nodes_[loss.id_];
  if (root.value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(root.value.shape()));
  }
  for (auto& n : nodes_) {
    if (n.requires_grad) {
      n.grad = Tensor(n.value.shape(), 0.0);
    } else {
      n.grad.reset();
    }
  }
  if (!root.requires_grad) return;
  (*nodes_[loss.id_].grad)[0] = 1.0;

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t k = loss.id_ + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.op || !n.requires_grad) continue;
    in_values.clear();
    in_grads.clear();
    for (auto id : n.inputs) {
      in_values.push_back(&nodes_[id].value);
      in_grads.push_back(nodes_[id].requires_grad ? &*nodes_[id].grad : nullptr);
    }
    n.op->backward(in_values, n.value, *n.grad, in_grads);
  }
}

bool Tape::replay_matches() {
  std::vector<Tensor> replayed(nodes_.size());
  std::vector<const Tensor*> in_values;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    Node& n = nodes_[k];
    if (!n.op) {
      replayed[k] = n.value;
      continue;
    }
    in_values.clear();
    for (auto id : n.inputs) in_values.push_back(&replayed[id]);
    replayed[k] = n.op->forward(in_values);
    if (!(replayed[k] == n.value)) return false;
  }
  return true;
}

std::string_view Tape::op_name(std::size_t id) const {
  const auto& n = nodes_.at(id);
  return n.op ? n.op->name() : std::string_view("leaf");
}

std::vector<std::size_t> Tape::inputs_of(std::size_t id) const { return nodes_.at(id).inputs; }

const Tensor& Tape::grad(std::size_t id) const {
  const auto& n = nodes_.at(id);
  if (!n.grad) {
    throw std::logic_error("no gradient for node " + std::to_string(id) +
                           " (call backward on a loss that depends on a requires_grad leaf)");
  }
  return *n.grad;
}

}  // namespace afsd
