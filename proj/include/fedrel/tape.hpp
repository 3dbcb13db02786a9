#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedrel/tensor.hpp"

namespace fedrel {

using ValueId = std::int32_t;
inline constexpr ValueId kNoInput = -1;

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,           // a + b, same shape
  kSub,           // a - b
  kMul,           // elementwise a * b
  kScale,         // aux * a
  kShift,         // a + aux
  kMatMul,        // a * b
  kMatMulNT,      // a * b^T
  kLinear,        // a * b^T + broadcast row c (dense layer)
  kTranspose,     // a^T
  kConcatCols,    // [a | b], same row count
  kSigmoid,       // 1 / (1 + exp(-a))
  kExp,           // exp(a)
  kLogFloored,    // log(max(a, aux))
  kSoftmaxRows,   // row-wise softmax with max subtraction
  kLayerNormRows, // row-wise layer norm, eps = aux
  kColwiseMean,   // column means: r x c -> 1 x c
  kAddRowVec,     // a (r x c) + broadcast row b (1 x c)
  kSumAll,        // scalar sum of all entries
  kMeanAll,       // scalar mean of all entries
};

const char* op_name(OpKind op);

struct TapeNode {
  OpKind op = OpKind::kLeaf;
  ValueId a = kNoInput;
  ValueId b = kNoInput;
  ValueId c = kNoInput;
  double aux = 0.0;
  Tensor value;
  bool trainable = false;
  std::string name;  // leaves only; required when trainable
};

/// Record of a forward computation: an append-only list of primitive
/// operations in topological order (inputs always precede their consumers).
///
/// Values are evaluated eagerly at record time through the same dispatch
/// `replay()` uses, so replaying a tape reproduces every recorded value
/// bitwise. A tape and its tensors are a single-owner unit: no internal
/// locking, but the whole object may move freely between threads.
class Tape {
 public:
  /// Non-trainable leaf (inputs, labels, dropout masks, ...).
  ValueId constant(Tensor value, std::string name = {});
  /// Trainable leaf; `name` keys the entry in gradient collections.
  ValueId parameter(Tensor value, std::string name);

  const Tensor& value(ValueId id) const { return node(id).value; }
  const TapeNode& node(ValueId id) const;
  Index size() const { return static_cast<Index>(nodes_.size()); }

  /// Overwrites a leaf value (same shape). Used by finite differencing.
  void set_leaf(ValueId id, Tensor value);

  /// Recomputes every non-leaf value in recording order.
  void replay();

  /// Drops all nodes but keeps the storage, so a tape can be reused across
  /// batches without reallocating.
  void clear() { nodes_.clear(); }

  /// Drops every node recorded after the first `count`; lets a caller keep
  /// leaf registrations while re-recording the computation on top.
  void truncate(Index count);

  ValueId record(OpKind op, ValueId a, ValueId b, double aux,
                 ValueId c = kNoInput);

 private:
  std::vector<TapeNode> nodes_;
};

// Recording primitives. Each validates shapes, evaluates eagerly and checks
// the result is finite.
ValueId add(Tape& t, ValueId a, ValueId b);
ValueId sub(Tape& t, ValueId a, ValueId b);
ValueId mul(Tape& t, ValueId a, ValueId b);
ValueId scale(Tape& t, ValueId a, double factor);
ValueId shift(Tape& t, ValueId a, double offset);
ValueId matmul(Tape& t, ValueId a, ValueId b);
/// a * b^T without materializing the transpose.
ValueId matmul_nt(Tape& t, ValueId a, ValueId b);
/// Dense layer x * w^T + broadcast bias row, fused into one node.
ValueId linear_op(Tape& t, ValueId x, ValueId w, ValueId bias);
ValueId transpose(Tape& t, ValueId a);
ValueId concat_cols(Tape& t, ValueId a, ValueId b);
ValueId sigmoid(Tape& t, ValueId a);
ValueId exp_elem(Tape& t, ValueId a);
ValueId log_floored(Tape& t, ValueId a, double floor);
ValueId softmax_rows(Tape& t, ValueId a);
ValueId layer_norm_rows(Tape& t, ValueId a, double eps);
ValueId colwise_mean(Tape& t, ValueId a);
ValueId add_rowvec(Tape& t, ValueId a, ValueId row);
ValueId sum_all(Tape& t, ValueId a);
ValueId mean_all(Tape& t, ValueId a);

/// Leaf handles of a named parameter collection registered on one tape.
struct VarMap {
  std::map<std::string, ValueId> ids;
  ValueId at(const std::string& name) const;
};

/// Registers every entry of `params` as a leaf (trainable or constant).
VarMap register_leaves(Tape& t, const Params& params, bool trainable);

/// Result of reverse-mode differentiation over one tape.
class Gradients {
 public:
  Gradients(std::vector<Tensor> by_node, std::map<std::string, ValueId> leaves);

  /// Gradient of the loss w.r.t. node `id` (zeros if it does not feed the
  /// loss).
  const Tensor& at(ValueId id) const;
  /// Gradient for a named trainable leaf. Every trainable leaf on the tape
  /// is present; leaves the loss never touched hold exact zeros.
  const Tensor& named(const std::string& name) const;
  const std::map<std::string, ValueId>& named_leaves() const { return leaves_; }

  std::map<std::string, Tensor> to_map() const;

 private:
  std::vector<Tensor> by_node_;
  std::map<std::string, ValueId> leaves_;
};

/// Reverse-mode sweep from a scalar loss node. Throws ShapeError if `loss`
/// is not scalar.
Gradients backward(const Tape& t, ValueId loss);

/// Central finite-difference gradient of `loss` w.r.t. leaf `leaf`, computed
/// by perturb-and-replay. Independent of the reverse-mode path; the oracle
/// every gradient check compares against.
Tensor fd_gradient(Tape& t, ValueId loss, ValueId leaf, double step = 1e-5);

/// max over entries of |a - b| / max(|a|, |b|, 1).
double max_rel_error(const Tensor& analytic, const Tensor& numeric);

}  // namespace fedrel
