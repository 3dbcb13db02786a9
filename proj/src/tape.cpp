#include "fedrel/tape.hpp"

#include <algorithm>
#include <cmath>

namespace fedrel {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kShift: return "shift";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kMatMulNT: return "matmul_nt";
    case OpKind::kLinear: return "linear";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kExp: return "exp";
    case OpKind::kLogFloored: return "log_floored";
    case OpKind::kSoftmaxRows: return "softmax_rows";
    case OpKind::kLayerNormRows: return "layer_norm_rows";
    case OpKind::kColwiseMean: return "colwise_mean";
    case OpKind::kAddRowVec: return "add_rowvec";
    case OpKind::kSumAll: return "sum_all";
    case OpKind::kMeanAll: return "mean_all";
  }
  return "?";
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

/// Single forward evaluation used both at record time and during replay.
Tensor eval_node(const Tape& t, const TapeNode& n) {
  const auto val = [&](ValueId id) -> const Tensor& { return t.value(id); };
  switch (n.op) {
    case OpKind::kLeaf:
      return n.value;
    case OpKind::kAdd: {
      require_same_shape(val(n.a), val(n.b), "add");
      Tensor out = val(n.a);
      out.mat() += val(n.b).mat();
      return out;
    }
    case OpKind::kSub: {
      require_same_shape(val(n.a), val(n.b), "sub");
      Tensor out = val(n.a);
      out.mat() -= val(n.b).mat();
      return out;
    }
    case OpKind::kMul: {
      require_same_shape(val(n.a), val(n.b), "mul");
      Tensor out = val(n.a);
      out.mat().array() *= val(n.b).mat().array();
      return out;
    }
    case OpKind::kScale: {
      Tensor out = val(n.a);
      out.mat() *= n.aux;
      return out;
    }
    case OpKind::kShift: {
      Tensor out = val(n.a);
      out.mat().array() += n.aux;
      return out;
    }
    case OpKind::kMatMul: {
      const Tensor& a = val(n.a);
      const Tensor& b = val(n.b);
      if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
      }
      return Tensor(Matrix(a.mat().lazyProduct(b.mat())));
    }
    case OpKind::kMatMulNT: {
      const Tensor& a = val(n.a);
      const Tensor& b = val(n.b);
      if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: column counts " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
      }
      return Tensor(Matrix(a.mat().lazyProduct(b.mat().transpose())));
    }
    case OpKind::kLinear: {
      const Tensor& x = val(n.a);
      const Tensor& w = val(n.b);
      const Tensor& bias = val(n.c);
      if (x.cols() != w.cols()) {
        throw ShapeError("linear: input width " + shape_string(x.shape()) +
                         " vs weight " + shape_string(w.shape()));
      }
      if (bias.rows() != 1 || bias.cols() != w.rows()) {
        throw ShapeError("linear: bias must be 1 x out");
      }
      Matrix out = x.mat().lazyProduct(w.mat().transpose());
      out.rowwise() += bias.mat().row(0);
      return Tensor(std::move(out));
    }
    case OpKind::kTranspose:
      return Tensor(Matrix(val(n.a).mat().transpose()));
    case OpKind::kConcatCols: {
      const Tensor& a = val(n.a);
      const Tensor& b = val(n.b);
      if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row counts differ");
      }
      Matrix out(a.rows(), a.cols() + b.cols());
      out.leftCols(a.cols()) = a.mat();
      out.rightCols(b.cols()) = b.mat();
      return Tensor(std::move(out));
    }
    case OpKind::kSigmoid: {
      Tensor out = val(n.a);
      out.mat() = out.mat().unaryExpr([](double x) { return sigmoid(x); });
      return out;
    }
    case OpKind::kExp: {
      Tensor out = val(n.a);
      out.mat() = out.mat().array().exp().matrix();
      return out;
    }
    case OpKind::kLogFloored: {
      Tensor out = val(n.a);
      const double floor = n.aux;
      out.mat() = out.mat().unaryExpr(
          [floor](double x) { return std::log(std::max(x, floor)); });
      return out;
    }
    case OpKind::kSoftmaxRows: {
      const Tensor& a = val(n.a);
      if (a.rows() == 0 || a.cols() == 0) {
        throw ShapeError("softmax_rows: degenerate shape");
      }
      return Tensor(softmax_rows_kernel(a.mat()));
    }
    case OpKind::kLayerNormRows: {
      const Tensor& a = val(n.a);
      if (a.cols() < 2) {
        throw ShapeError("layer_norm_rows: row length must be >= 2");
      }
      const Matrix& x = a.mat();
      Matrix out(x.rows(), x.cols());
      for (Index i = 0; i < x.rows(); ++i) {
        // Scalar-order reductions: identical rows normalize bitwise
        // identically regardless of row alignment.
        const auto [mean, inv] = layer_norm_row_stats(x, i, n.aux);
        for (Index j = 0; j < x.cols(); ++j) {
          out(i, j) = (x(i, j) - mean) * inv;
        }
      }
      return Tensor(std::move(out));
    }
    case OpKind::kColwiseMean:
      return Tensor(Matrix(val(n.a).mat().colwise().mean()));
    case OpKind::kAddRowVec: {
      const Tensor& a = val(n.a);
      const Tensor& b = val(n.b);
      if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_rowvec: expected a 1 x cols row vector");
      }
      Tensor out = a;
      out.mat().rowwise() += b.mat().row(0);
      return out;
    }
    case OpKind::kSumAll:
      return Tensor::scalar(val(n.a).mat().sum());
    case OpKind::kMeanAll:
      return Tensor::scalar(val(n.a).mat().mean());
  }
  throw Error("eval_node: unhandled op");
}

}  // namespace

const TapeNode& Tape::node(ValueId id) const {
  if (id < 0 || id >= size()) throw Error("tape: invalid node id");
  return nodes_[static_cast<std::size_t>(id)];
}

ValueId Tape::constant(Tensor value, std::string name) {
  value.ensure_finite("leaf construction");
  TapeNode n;
  n.op = OpKind::kLeaf;
  n.value = std::move(value);
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size() - 1);
}

ValueId Tape::parameter(Tensor value, std::string name) {
  if (name.empty()) throw Error("tape: trainable leaf requires a name");
  ValueId id = constant(std::move(value), std::move(name));
  nodes_.back().trainable = true;
  return id;
}

void Tape::set_leaf(ValueId id, Tensor value) {
  TapeNode& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.op != OpKind::kLeaf) throw Error("set_leaf: node is not a leaf");
  require_same_shape(n.value, value, "set_leaf");
  n.value = std::move(value);
}

ValueId Tape::record(OpKind op, ValueId a, ValueId b, double aux, ValueId c) {
  TapeNode n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.c = c;
  n.aux = aux;
  n.value = eval_node(*this, n);
  n.value.ensure_finite(op_name(op));
  nodes_.push_back(std::move(n));
  return static_cast<ValueId>(nodes_.size() - 1);
}

void Tape::replay() {
  for (auto& n : nodes_) {
    if (n.op != OpKind::kLeaf) n.value = eval_node(*this, n);
  }
}

void Tape::truncate(Index count) {
  if (count < 0 || count > size()) throw Error("truncate: bad node count");
  nodes_.resize(static_cast<std::size_t>(count));
}

ValueId add(Tape& t, ValueId a, ValueId b) { return t.record(OpKind::kAdd, a, b, 0); }
ValueId sub(Tape& t, ValueId a, ValueId b) { return t.record(OpKind::kSub, a, b, 0); }
ValueId mul(Tape& t, ValueId a, ValueId b) { return t.record(OpKind::kMul, a, b, 0); }
ValueId scale(Tape& t, ValueId a, double factor) { return t.record(OpKind::kScale, a, kNoInput, factor); }
ValueId shift(Tape& t, ValueId a, double offset) { return t.record(OpKind::kShift, a, kNoInput, offset); }
ValueId matmul(Tape& t, ValueId a, ValueId b) { return t.record(OpKind::kMatMul, a, b, 0); }
ValueId matmul_nt(Tape& t, ValueId a, ValueId b) { return t.record(OpKind::kMatMulNT, a, b, 0); }
ValueId linear_op(Tape& t, ValueId x, ValueId w, ValueId bias) { return t.record(OpKind::kLinear, x, w, 0, bias); }
ValueId transpose(Tape& t, ValueId a) { return t.record(OpKind::kTranspose, a, kNoInput, 0); }
ValueId concat_cols(Tape& t, ValueId a, ValueId b) { return t.record(OpKind::kConcatCols, a, b, 0); }
ValueId sigmoid(Tape& t, ValueId a) { return t.record(OpKind::kSigmoid, a, kNoInput, 0); }
ValueId exp_elem(Tape& t, ValueId a) { return t.record(OpKind::kExp, a, kNoInput, 0); }
ValueId log_floored(Tape& t, ValueId a, double floor) { return t.record(OpKind::kLogFloored, a, kNoInput, floor); }
ValueId softmax_rows(Tape& t, ValueId a) { return t.record(OpKind::kSoftmaxRows, a, kNoInput, 0); }
ValueId layer_norm_rows(Tape& t, ValueId a, double eps) { return t.record(OpKind::kLayerNormRows, a, kNoInput, eps); }
ValueId colwise_mean(Tape& t, ValueId a) { return t.record(OpKind::kColwiseMean, a, kNoInput, 0); }
ValueId add_rowvec(Tape& t, ValueId a, ValueId row) { return t.record(OpKind::kAddRowVec, a, row, 0); }
ValueId sum_all(Tape& t, ValueId a) { return t.record(OpKind::kSumAll, a, kNoInput, 0); }
ValueId mean_all(Tape& t, ValueId a) { return t.record(OpKind::kMeanAll, a, kNoInput, 0); }

ValueId VarMap::at(const std::string& name) const {
  auto it = ids.find(name);
  if (it == ids.end()) throw Error("var map: unknown parameter '" + name + "'");
  return it->second;
}

VarMap register_leaves(Tape& t, const Params& params, bool trainable) {
  VarMap vars;
  for (const auto& [name, value] : params) {
    vars.ids.emplace(name, trainable ? t.parameter(value, name)
                                     : t.constant(value, name));
  }
  return vars;
}

Gradients::Gradients(std::vector<Tensor> by_node,
                     std::map<std::string, ValueId> leaves)
    : by_node_(std::move(by_node)), leaves_(std::move(leaves)) {}

const Tensor& Gradients::at(ValueId id) const {
  const Tensor& g = by_node_.at(static_cast<std::size_t>(id));
  if (g.empty()) throw Error("gradients: node has no gradient storage");
  return g;
}

const Tensor& Gradients::named(const std::string& name) const {
  auto it = leaves_.find(name);
  if (it == leaves_.end()) throw Error("gradients: unknown leaf '" + name + "'");
  return at(it->second);
}

std::map<std::string, Tensor> Gradients::to_map() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : leaves_) out.emplace(name, at(id));
  return out;
}

namespace {

/// Adds an expression into the accumulator; the first contribution
/// materializes directly instead of being added to zeros.
template <typename Expr>
void accumulate(Tensor& acc, const Expr& g, const Tensor& like) {
  if (acc.empty()) {
    acc = Tensor::reshaped_like(like, Matrix(g));
  } else {
    acc.mat() += g;
  }
}

void accumulate(Tensor& acc, Matrix&& g, const Tensor& like) {
  if (acc.empty()) {
    acc = Tensor::reshaped_like(like, std::move(g));
  } else {
    acc.mat() += g;
  }
}

}  // namespace

Gradients backward(const Tape& t, ValueId loss) {
  const Tensor& loss_value = t.value(loss);
  if (!loss_value.is_scalar()) {
    throw ShapeError("backward: loss is not scalar (shape " +
                     shape_string(loss_value.shape()) + ")");
  }

  std::vector<Tensor> grads(static_cast<std::size_t>(t.size()));
  grads[static_cast<std::size_t>(loss)] = Tensor::scalar(1.0);

  for (ValueId id = loss; id >= 0; --id) {
    const TapeNode& n = t.node(id);
    Tensor& g = grads[static_cast<std::size_t>(id)];
    if (g.empty() || n.op == OpKind::kLeaf) continue;
    const Matrix& G = g.mat();
    const auto in = [&](ValueId i) -> const Tensor& { return t.value(i); };
    const auto gin = [&](ValueId i) -> Tensor& {
      return grads[static_cast<std::size_t>(i)];
    };
    switch (n.op) {
      case OpKind::kAdd:
        accumulate(gin(n.a), G, in(n.a));
        accumulate(gin(n.b), G, in(n.b));
        break;
      case OpKind::kSub:
        accumulate(gin(n.a), G, in(n.a));
        accumulate(gin(n.b), (-G).eval(), in(n.b));
        break;
      case OpKind::kMul:
        accumulate(gin(n.a), G.cwiseProduct(in(n.b).mat()), in(n.a));
        accumulate(gin(n.b), G.cwiseProduct(in(n.a).mat()), in(n.b));
        break;
      case OpKind::kScale:
        accumulate(gin(n.a), (n.aux * G).eval(), in(n.a));
        break;
      case OpKind::kShift:
        accumulate(gin(n.a), G, in(n.a));
        break;
      case OpKind::kMatMul:
        accumulate(gin(n.a), G * in(n.b).mat().transpose(), in(n.a));
        accumulate(gin(n.b), in(n.a).mat().transpose() * G, in(n.b));
        break;
      case OpKind::kMatMulNT:
        // y = a b^T: da = G b, db = G^T a.
        accumulate(gin(n.a), G * in(n.b).mat(), in(n.a));
        accumulate(gin(n.b), G.transpose() * in(n.a).mat(), in(n.b));
        break;
      case OpKind::kLinear:
        // y = x w^T + bias: dx = G w, dw = G^T x, dbias = column sums.
        accumulate(gin(n.a), G * in(n.b).mat(), in(n.a));
        accumulate(gin(n.b), G.transpose() * in(n.a).mat(), in(n.b));
        accumulate(gin(n.c), G.colwise().sum(), in(n.c));
        break;
      case OpKind::kTranspose:
        accumulate(gin(n.a), G.transpose(), in(n.a));
        break;
      case OpKind::kConcatCols:
        accumulate(gin(n.a), G.leftCols(in(n.a).cols()), in(n.a));
        accumulate(gin(n.b), G.rightCols(in(n.b).cols()), in(n.b));
        break;
      case OpKind::kSigmoid: {
        const Matrix& y = n.value.mat();
        accumulate(gin(n.a),
                   (G.array() * y.array() * (1.0 - y.array())).matrix(),
                   in(n.a));
        break;
      }
      case OpKind::kExp:
        accumulate(gin(n.a), G.cwiseProduct(n.value.mat()), in(n.a));
        break;
      case OpKind::kLogFloored: {
        const double floor = n.aux;
        accumulate(gin(n.a),
                   G.binaryExpr(in(n.a).mat(),
                                [floor](double g_, double x_) {
                                  return x_ > floor ? g_ / x_ : 0.0;
                                }),
                   in(n.a));
        break;
      }
      case OpKind::kSoftmaxRows: {
        const Matrix& y = n.value.mat();
        Matrix dx(y.rows(), y.cols());
        for (Index i = 0; i < y.rows(); ++i) {
          const double dot = G.row(i).dot(y.row(i));
          dx.row(i) = (y.row(i).array() * (G.row(i).array() - dot)).matrix();
        }
        accumulate(gin(n.a), std::move(dx), in(n.a));
        break;
      }
      case OpKind::kLayerNormRows: {
        const Matrix& x = in(n.a).mat();
        const Matrix& y = n.value.mat();
        const double eps = n.aux;
        Matrix dx(x.rows(), x.cols());
        for (Index i = 0; i < x.rows(); ++i) {
          const double mean = x.row(i).mean();
          const double var = (x.row(i).array() - mean).square().mean();
          const double inv = 1.0 / std::sqrt(var + eps);
          const double g_mean = G.row(i).mean();
          const double gy_mean = G.row(i).cwiseProduct(y.row(i)).mean();
          dx.row(i) = (inv * (G.row(i).array() - g_mean -
                              y.row(i).array() * gy_mean))
                          .matrix();
        }
        accumulate(gin(n.a), std::move(dx), in(n.a));
        break;
      }
      case OpKind::kColwiseMean: {
        const Index r = in(n.a).rows();
        accumulate(gin(n.a),
                   (G / static_cast<double>(r)).replicate(r, 1), in(n.a));
        break;
      }
      case OpKind::kAddRowVec:
        accumulate(gin(n.a), G, in(n.a));
        accumulate(gin(n.b), G.colwise().sum(), in(n.b));
        break;
      case OpKind::kSumAll:
        accumulate(gin(n.a),
                   Matrix::Constant(in(n.a).rows(), in(n.a).cols(), G(0, 0)),
                   in(n.a));
        break;
      case OpKind::kMeanAll:
        accumulate(gin(n.a),
                   Matrix::Constant(in(n.a).rows(), in(n.a).cols(),
                                    G(0, 0) / static_cast<double>(in(n.a).size())),
                   in(n.a));
        break;
      case OpKind::kLeaf:
        break;
    }
  }

  std::map<std::string, ValueId> leaves;
  for (ValueId id = 0; id < t.size(); ++id) {
    const TapeNode& n = t.node(id);
    if (n.op == OpKind::kLeaf && n.trainable) {
      auto& g = grads[static_cast<std::size_t>(id)];
      if (g.empty()) g = Tensor::zeros_like(n.value);
      g.ensure_finite("backward");
      leaves.emplace(n.name, id);
    }
  }
  return Gradients(std::move(grads), std::move(leaves));
}

Tensor fd_gradient(Tape& t, ValueId loss, ValueId leaf, double step) {
  const Tensor base = t.value(leaf);
  Tensor grad = Tensor::zeros_like(base);
  Tensor probe = base;
  for (Index i = 0; i < base.size(); ++i) {
    const double x0 = base.data()[i];
    probe.data()[i] = x0 + step;
    t.set_leaf(leaf, probe);
    t.replay();
    const double up = t.value(loss).scalar_value();
    probe.data()[i] = x0 - step;
    t.set_leaf(leaf, probe);
    t.replay();
    const double down = t.value(loss).scalar_value();
    probe.data()[i] = x0;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  t.set_leaf(leaf, base);
  t.replay();
  return grad;
}

double max_rel_error(const Tensor& analytic, const Tensor& numeric) {
  if (!analytic.same_shape(numeric)) {
    throw ShapeError("max_rel_error: shape mismatch");
  }
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double f = numeric.data()[i];
    const double denom = std::max({std::abs(a), std::abs(f), 1.0});
    worst = std::max(worst, std::abs(a - f) / denom);
  }
  return worst;
}

}  // namespace fedrel
