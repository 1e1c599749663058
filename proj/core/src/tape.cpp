#include "omniban/tape.hpp"

#include <algorithm>

#include "omniban/errors.hpp"

namespace omniban {

namespace {
thread_local std::optional<OpKind> g_fault;
}

namespace testing {
void set_backward_fault(std::optional<OpKind> kind) { g_fault = kind; }
}  // namespace testing

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kLinear: return "linear";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatRows: return "concat_rows";
    case OpKind::kMaskFill: return "mask_fill";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kRelu: return "relu";
    case OpKind::kSum: return "sum";
    case OpKind::kSumRows: return "sum_rows";
    case OpKind::kSquare: return "square";
    case OpKind::kRowL2Normalize: return "l2_normalize_rows";
    case OpKind::kBceWithLogits: return "bce_with_logits";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

std::span<double> BackwardContext::input_grad(std::size_t input_index) {
  const NodeId in = tape_.records_[node_].inputs.at(input_index);
  if (!tape_.nodes_[in].requires_grad) return {};
  return tape_.grad_buffer(in);
}

const Tensor& BackwardContext::input(std::size_t input_index) const {
  return tape_.nodes_[tape_.records_[node_].inputs.at(input_index)].value;
}

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

Var Tape::leaf(Tensor value, bool requires_grad) {
  const auto id = static_cast<NodeId>(nodes_.size());
  Record rec{OpKind::kLeaf, {}, id, {}, value.shape(), 0};
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && mode_ == Mode::kTraining;
  node.is_leaf = true;
  nodes_.push_back(std::move(node));
  records_.push_back(std::move(rec));
  return Var(this, id);
}

Var Tape::parameter(const Tensor& param) {
  if (auto it = params_.find(&param); it != params_.end()) return Var(this, it->second);
  Var v = leaf(param, true);
  params_.emplace(&param, v.id());
  return v;
}

std::optional<Var> Tape::find_parameter(const Tensor& param) const {
  if (auto it = params_.find(&param); it != params_.end()) {
    return Var(const_cast<Tape*>(this), it->second);
  }
  return std::nullopt;
}

Var Tape::record(OpKind kind, std::span<const Var> inputs, Tensor value, BackwardFn backward,
                 std::int64_t attr) {
  const auto id = static_cast<NodeId>(nodes_.size());
  Record rec{kind, {}, id, {}, value.shape(), attr};
  bool needs_grad = false;
  rec.inputs.reserve(inputs.size());
  rec.input_shapes.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw TapeError("operands recorded on different tapes");
    rec.inputs.push_back(in.id());
    rec.input_shapes.push_back(in.shape());
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  records_.push_back(std::move(rec));
  return Var(this, id);
}

std::span<double> Tape::grad_buffer(NodeId id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw TapeError("loss belongs to another tape");
  if (mode_ == Mode::kInference) throw TapeError("backward on an inference tape");
  if (loss.value().size() != 1) {
    throw TapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) {
    throw TapeError("loss is detached: no input requires a gradient");
  }
  for (auto& node : nodes_) {
    if (!node.is_leaf) node.grad.clear();
  }
  grad_buffer(loss.id())[0] += 1.0;

  std::vector<double> flipped;
  for (NodeId id = loss.id() + 1; id-- > 0;) {
    auto& node = nodes_[id];
    if (node.is_leaf || !node.backward || node.grad.empty()) continue;
    std::span<const double> g = node.grad;
    if (g_fault && *g_fault == records_[id].kind) {
      flipped.assign(g.begin(), g.end());
      for (auto& x : flipped) x = -x;
      g = flipped;
    }
    BackwardContext ctx(*this, id, g);
    node.backward(ctx);
  }
}

Tensor Tape::grad(Var v) const {
  const auto& node = nodes_.at(v.id());
  if (node.grad.empty()) return Tensor::zeros(node.value.shape());
  return Tensor(node.value.shape(), node.grad);
}

void Tape::zero_grad() {
  for (auto& node : nodes_) node.grad.clear();
}

}  // namespace omniban
