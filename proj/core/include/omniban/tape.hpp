#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "omniban/tensor.hpp"

namespace omniban {

enum class OpKind : std::uint8_t {
  kLeaf,
  kMatMul,
  kLinear,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kTranspose,
  kReshape,
  kSliceCols,
  kConcatCols,
  kConcatRows,
  kMaskFill,
  kSoftmax,
  kRelu,
  kSum,
  kSumRows,
  kSquare,
  kRowL2Normalize,
  kBceWithLogits,
};

std::string_view op_name(OpKind kind);

using NodeId = std::uint32_t;

/// One recorded operation. Leaves are recorded too (kind kLeaf, no inputs).
/// `attr` carries the op's integer attribute (softmax axis, slice start).
struct Record {
  OpKind kind;
  std::vector<NodeId> inputs;
  NodeId output;
  std::vector<Shape> input_shapes;
  Shape output_shape;
  std::int64_t attr = 0;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  NodeId id() const { return id_; }
  Tape& tape() const { return *tape_; }
  bool requires_grad() const;

 private:
  Tape* tape_;
  NodeId id_;
};

/// Passed to a node's backward rule. `out_grad` is the cotangent of the
/// node's output; `input_grad(i)` is the accumulation buffer of input i, or an
/// empty span when that input needs no gradient.
class BackwardContext {
 public:
  BackwardContext(Tape& tape, NodeId node, std::span<const double> out_grad)
      : tape_(tape), node_(node), out_grad_(out_grad) {}

  std::span<const double> out_grad() const { return out_grad_; }
  std::span<double> input_grad(std::size_t input_index);
  const Tensor& input(std::size_t input_index) const;
  const Tensor& output() const;

 private:
  Tape& tape_;
  NodeId node_;
  std::span<const double> out_grad_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Wengert list for reverse-mode differentiation. A tape belongs to one
/// thread and one training step.
///
/// Leaf gradients accumulate across repeated backward() calls; intermediate
/// gradients are recomputed on every call. zero_grad() clears everything.
class Tape {
 public:
  enum class Mode { kTraining, kInference };

  explicit Tape(Mode mode = Mode::kTraining) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Mode mode() const { return mode_; }

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Leaf bound to a model parameter. Repeated calls with the same parameter
  /// object return the same node.
  Var parameter(const Tensor& param);
  std::optional<Var> find_parameter(const Tensor& param) const;

  /// Adds an op node. The backward rule is dropped when no input needs a
  /// gradient or the tape is in inference mode.
  Var record(OpKind kind, std::span<const Var> inputs, Tensor value, BackwardFn backward,
             std::int64_t attr = 0);

  void backward(Var loss);
  /// Gradient of a node; zeros when none has been accumulated.
  Tensor grad(Var v) const;
  void zero_grad();

  std::span<const Record> records() const { return records_; }
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool is_leaf = false;
    BackwardFn backward;
  };

  std::span<double> grad_buffer(NodeId id);

  Mode mode_;
  std::deque<Node> nodes_;  // stable addresses: Var::value() hands out references
  std::vector<Record> records_;
  std::unordered_map<const Tensor*, NodeId> params_;
};

namespace testing {
/// Negates the cotangent fed into every backward rule of `kind`; used to
/// prove that gradient checks catch broken rules. Thread-local.
void set_backward_fault(std::optional<OpKind> kind);
}  // namespace testing

}  // namespace omniban
