#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "afsd/tensor/tensor.hpp"

namespace afsd {

class Tape;

/// A differentiable primitive. `forward` may stash intermediates on the
/// op object; `backward` must accumulate (+=) into the non-null entries of
/// `grad_inputs`, which are shaped like the corresponding inputs.
class Op {
 public:
  virtual ~Op() = default;
  virtual std::string_view name() const = 0;
  virtual Tensor forward(std::span<const Tensor* const> inputs) = 0;
  virtual void backward(std::span<const Tensor* const> inputs, const Tensor& output,
                        const Tensor& grad_output, std::span<Tensor* const> grad_inputs) const = 0;
};

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// owning Tape is alive.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// d(loss)/d(this) after Tape::backward; zeros if not reached.
  const Tensor& grad() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of primitive applications, in topological order.
/// Owned by one training step; not thread-safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Runs `op` on the inputs' values, records the application and returns
  /// its output. Throws NumericError if the output is not finite.
  Var apply(std::unique_ptr<Op> op, std::span<const Var> inputs);
  Var apply(std::unique_ptr<Op> op, std::initializer_list<Var> inputs) {
    return apply(std::move(op), std::span<const Var>(inputs.begin(), inputs.size()));
  }

  /// Reverse sweep from a scalar `loss`. Every requires_grad node gets a
  /// gradient buffer; buffers of unreachable nodes stay zero.
  void backward(Var loss);

  /// Recomputes every recorded output from the leaf values and reports
  /// whether all of them match the recorded values bit-for-bit.
  bool replay_matches();

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const;
  std::vector<std::size_t> inputs_of(std::size_t id) const;

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    std::unique_ptr<Op> op;  // null for leaves
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    std::optional<Tensor> grad;
  };

  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
};

}  // namespace afsd
