#include "fedrel/diig.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>

#include "binio.hpp"

namespace fedrel {

void ModelConfig::validate() const {
  if (layers < 1) throw ShapeError("model: layers must be >= 1");
  if (window < 0) throw ShapeError("model: window must be >= 0");
  if (num_classes < 2) throw ShapeError("model: need at least 2 classes");
  if (raw_dim < 1 || feature_dim < 1 || transform_hidden < 1 ||
      node_embed < 1 || graph_embed < 1 || readout_hidden1 < 1 ||
      readout_hidden2 < 1) {
    throw ShapeError("model: dims must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw NumericError("model: dropout must be in [0, 1)");
  }
  if (intra_mode == IntraMode::kKnn && knn_k < 1) {
    throw ShapeError("model: knn_k must be >= 1");
  }
}

namespace {

std::map<std::string, Shape> parameter_shapes(const ModelConfig& c) {
  std::map<std::string, Shape> s;
  s["transform.l1.w"] = {c.transform_hidden, c.raw_dim};
  s["transform.l1.b"] = {1, c.transform_hidden};
  s["transform.l2.w"] = {c.feature_dim, c.transform_hidden};
  s["transform.l2.b"] = {1, c.feature_dim};
  s["intra.w_spa"] = {c.feature_dim, c.feature_dim};
  for (int l = 1; l <= c.layers; ++l) {
    const Index in = l == 1 ? 2 * c.feature_dim : 2 * c.node_embed;
    s["intra.l" + std::to_string(l) + ".w"] = {c.node_embed, in};
    s["intra.l" + std::to_string(l) + ".b"] = {1, c.node_embed};
  }
  s["readout.l1.w"] = {c.readout_hidden1, c.node_embed + c.feature_dim};
  s["readout.l1.b"] = {1, c.readout_hidden1};
  s["readout.l2.w"] = {c.readout_hidden2, c.readout_hidden1};
  s["readout.l2.b"] = {1, c.readout_hidden2};
  s["readout.out.w"] = {c.graph_embed, c.readout_hidden2};
  s["readout.out.b"] = {1, c.graph_embed};
  s["fuse.w"] = {c.node_embed, c.node_embed + c.graph_embed};
  s["fuse.b"] = {1, c.node_embed};
  s["inter.w_tem"] = {c.node_embed, c.node_embed};
  s["inter.agg.w"] = {c.node_embed, 2 * c.node_embed};
  s["inter.agg.b"] = {1, c.node_embed};
  s["out.w"] = {c.num_classes, 2 * c.node_embed};
  s["out.b"] = {1, c.num_classes};
  return s;
}

bool is_bias(const std::string& name) {
  return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
}

}  // namespace

Params init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Params out;
  // Map order is sorted by name, so the draw sequence is reproducible.
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    out.emplace(name, is_bias(name) ? Tensor::zeros(shape)
                                    : xavier_init(shape, rng));
  }
  return out;
}

std::vector<std::string> federated_names(const Params& params) {
  std::vector<std::string> names;
  for (const auto& [name, _] : params) {
    if (name.rfind("transform.", 0) != 0) names.push_back(name);
  }
  return names;
}

ModelVars register_params(Tape& t, const Params& params, bool train_transform) {
  ModelVars vars;
  for (const auto& [name, value] : params) {
    const bool frozen = !train_transform && name.rfind("transform.", 0) == 0;
    vars.ids.emplace(name, frozen ? t.constant(value, name)
                                  : t.parameter(value, name));
  }
  return vars;
}

ValueId linear(Tape& t, ValueId x, ValueId w, ValueId b) {
  return linear_op(t, x, w, b);
}

ValueId transform_step(Tape& t, ValueId raw_step, const ModelVars& vars) {
  ValueId h = sigmoid(t, linear(t, raw_step, vars.at("transform.l1.w"),
                                vars.at("transform.l1.b")));
  return linear(t, h, vars.at("transform.l2.w"), vars.at("transform.l2.b"));
}

std::vector<ValueId> transform_features(Tape& t, const Tensor& raw,
                                        const ModelVars& vars) {
  if (raw.rank() != 3) throw ShapeError("transform_features: expected rank-3 input");
  std::vector<ValueId> steps;
  steps.reserve(static_cast<std::size_t>(raw.dim(0)));
  for (Index k = 0; k < raw.dim(0); ++k) {
    ValueId leaf = t.constant(Tensor(Matrix(raw.slab(k))));
    steps.push_back(transform_step(t, leaf, vars));
  }
  return steps;
}

ValueId intra_correlation(Tape& t, ValueId x_t, ValueId w_spa) {
  ValueId scores = matmul_nt(t, matmul(t, x_t, w_spa), x_t);
  return softmax_rows(t, scores);
}

ValueId message_pass(Tape& t, ValueId adj, ValueId h, ValueId w, ValueId b) {
  const Index n = t.value(h).rows();
  ValueId mixed = scale(t, matmul(t, adj, h), 1.0 / static_cast<double>(n));
  return sigmoid(t, linear(t, concat_cols(t, h, mixed), w, b));
}

ValueId graph_readout(Tape& t, ValueId h_last, ValueId x, const ModelVars& vars) {
  ValueId pooled = colwise_mean(t, concat_cols(t, h_last, x));
  ValueId h1 = sigmoid(t, linear(t, pooled, vars.at("readout.l1.w"),
                                 vars.at("readout.l1.b")));
  ValueId h2 = sigmoid(t, linear(t, h1, vars.at("readout.l2.w"),
                                 vars.at("readout.l2.b")));
  return linear(t, h2, vars.at("readout.out.w"), vars.at("readout.out.b"));
}

ValueId fuse_embeddings(Tape& t, ValueId h_nodes, ValueId graph_emb,
                        ValueId w, ValueId b, double ln_eps) {
  const Index n = t.value(h_nodes).rows();
  const Index g = t.value(graph_emb).cols();
  // Replicate the graph embedding to one row per node.
  ValueId rep = add_rowvec(t, t.constant(Tensor::zeros({n, g})), graph_emb);
  ValueId z = sigmoid(t, linear(t, concat_cols(t, h_nodes, rep), w, b));
  return layer_norm_rows(t, z, ln_eps);
}

ValueId inter_correlation(Tape& t, ValueId h_t, ValueId h_prev, ValueId w_tem) {
  if (t.value(h_t).rows() != t.value(h_prev).rows()) {
    throw ShapeError("inter_correlation: node counts differ between steps");
  }
  ValueId scores = matmul_nt(t, matmul(t, h_t, w_tem), h_prev);
  return softmax_rows(t, scores);
}

namespace {

ValueId maybe_dropout(Tape& t, ValueId h, const ModelConfig& cfg,
                      const ForwardOptions& opts) {
  if (!opts.training || cfg.dropout <= 0.0) return h;
  if (opts.rng == nullptr) {
    throw Error("forward: training with dropout requires an rng");
  }
  const Tensor& v = t.value(h);
  Tensor mask = Tensor::zeros(v.shape());
  const double keep = 1.0 - cfg.dropout;
  for (Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = opts.rng->uniform01() < keep ? 1.0 / keep : 0.0;
  }
  return mul(t, h, t.constant(std::move(mask)));
}

}  // namespace

ValueId temporal_propagate(Tape& t, const std::vector<ValueId>& fused,
                           const ModelVars& vars, const ModelConfig& cfg,
                           const ForwardOptions& opts) {
  if (fused.empty()) throw ShapeError("temporal_propagate: empty window");
  ValueId running = fused.front();
  for (std::size_t k = 1; k < fused.size(); ++k) {
    ValueId adj = inter_correlation(t, fused[k], running, vars.at("inter.w_tem"));
    running = message_pass(t, adj, running, vars.at("inter.agg.w"),
                           vars.at("inter.agg.b"));
    running = maybe_dropout(t, running, cfg, opts);
  }
  return running;
}

ValueId final_embedding(Tape& t, ValueId h_spa, ValueId h_tem, ValueId w,
                        ValueId b) {
  return sigmoid(t, linear(t, concat_cols(t, h_spa, h_tem), w, b));
}

ValueId predict_logits(Tape& t, ValueId h_emb) {
  return softmax_rows(t, colwise_mean(t, h_emb));
}

Tensor one_hot(int num_classes, int label) {
  if (label < 0 || label >= num_classes) {
    throw ShapeError("one_hot: label " + std::to_string(label) +
                     " out of range for C=" + std::to_string(num_classes));
  }
  Tensor y = Tensor::zeros({1, num_classes});
  y.data()[label] = 1.0;
  return y;
}

ValueId classification_loss(Tape& t, ValueId probs, const Tensor& target) {
  const Tensor& p = t.value(probs);
  if (target.rank() != 2 || target.rows() != 1 || target.cols() != p.cols()) {
    throw ShapeError("classification_loss: target must be a 1 x C one-hot row");
  }
  int ones = 0;
  for (Index j = 0; j < target.cols(); ++j) {
    const double v = target.data()[j];
    if (v == 1.0) {
      ++ones;
    } else if (v != 0.0) {
      throw NumericError("classification_loss: invalid one-hot entry");
    }
  }
  if (ones != 1) throw NumericError("classification_loss: invalid one-hot row");
  ValueId picked = mul(t, log_floored(t, probs, 1e-12), t.constant(target));
  return scale(t, sum_all(t, picked), -1.0);
}

namespace {

/// Static-correlation substitute for the intra layer (ablation modes).
ValueId static_intra_adjacency(Tape& t, const Tensor& x, const ModelConfig& cfg) {
  switch (cfg.intra_mode) {
    case IntraMode::kKnn:
      return t.constant(knn_adjacency(x, cfg.knn_k).matrix);
    case IntraMode::kPcc:
      return t.constant(pcc_adjacency(x).matrix);
    case IntraMode::kPlv:
      return t.constant(plv_adjacency(x).matrix);
    case IntraMode::kDynamic:
      break;
  }
  throw Error("static_intra_adjacency: dynamic mode has no static adjacency");
}

/// Shared spatial-temporal pipeline over per-step feature handles.
ValueId forward_steps(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                      const std::vector<ValueId>& step_features,
                      const ForwardOptions& opts) {
  std::vector<ValueId> fused;
  fused.reserve(step_features.size());
  ValueId h_spa_last = kNoInput;
  for (ValueId x : step_features) {
    ValueId adj = cfg.intra_mode == IntraMode::kDynamic
                      ? intra_correlation(t, x, vars.at("intra.w_spa"))
                      : static_intra_adjacency(t, t.value(x), cfg);
    ValueId h = x;
    for (int l = 1; l <= cfg.layers; ++l) {
      const std::string base = "intra.l" + std::to_string(l);
      h = message_pass(t, adj, h, vars.at(base + ".w"), vars.at(base + ".b"));
      h = maybe_dropout(t, h, cfg, opts);
    }
    ValueId g = graph_readout(t, h, x, vars);
    fused.push_back(fuse_embeddings(t, h, g, vars.at("fuse.w"),
                                    vars.at("fuse.b"), cfg.ln_eps));
    h_spa_last = h;
  }
  ValueId h_tem = temporal_propagate(t, fused, vars, cfg, opts);
  ValueId emb = final_embedding(t, h_spa_last, h_tem, vars.at("out.w"),
                                vars.at("out.b"));
  return predict_logits(t, emb);
}

std::vector<ValueId> feature_leaves(Tape& t, const Tensor& window) {
  std::vector<ValueId> steps;
  steps.reserve(static_cast<std::size_t>(window.dim(0)));
  for (Index k = 0; k < window.dim(0); ++k) {
    steps.push_back(t.constant(Tensor(Matrix(window.slab(k)))));
  }
  return steps;
}

}  // namespace

ValueId window_logits(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                      const Tensor& feature_window, const ForwardOptions& opts) {
  if (feature_window.rank() != 3) {
    throw ShapeError("window_logits: expected a rank-3 feature window");
  }
  return forward_steps(t, vars, cfg, feature_leaves(t, feature_window), opts);
}

ValueId window_logits_raw(Tape& t, const ModelVars& vars,
                          const ModelConfig& cfg, const Tensor& raw_window,
                          const ForwardOptions& opts) {
  if (raw_window.rank() != 3) {
    throw ShapeError("window_logits_raw: expected a rank-3 raw window");
  }
  return forward_steps(t, vars, cfg, transform_features(t, raw_window, vars),
                       opts);
}

namespace {

template <typename LogitsFn>
ValueId batch_loss_impl(Tape& t, const ModelConfig& cfg,
                        const std::vector<const TemporalWindow*>& batch,
                        LogitsFn&& logits_of) {
  if (batch.empty()) throw ShapeError("batch_loss: empty batch");
  ValueId total = kNoInput;
  for (const TemporalWindow* w : batch) {
    ValueId probs = logits_of(*w);
    ValueId loss =
        classification_loss(t, probs, one_hot(cfg.num_classes, w->label));
    total = total == kNoInput ? loss : add(t, total, loss);
  }
  return scale(t, total, 1.0 / static_cast<double>(batch.size()));
}

}  // namespace

ValueId batch_loss(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                   const std::vector<const TemporalWindow*>& batch,
                   const ForwardOptions& opts) {
  return batch_loss_impl(t, cfg, batch, [&](const TemporalWindow& w) {
    return window_logits(t, vars, cfg, w.features, opts);
  });
}

ValueId batch_loss_raw(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                       const std::vector<const TemporalWindow*>& batch,
                       const ForwardOptions& opts) {
  return batch_loss_impl(t, cfg, batch, [&](const TemporalWindow& w) {
    return window_logits_raw(t, vars, cfg, w.features, opts);
  });
}

Vector predict_window(const ModelConfig& cfg, const Params& params,
                      const Tensor& feature_window) {
  Tape t;
  ModelVars vars = register_params(t, params, false);
  ValueId probs = window_logits(t, vars, cfg, feature_window, {});
  return t.value(probs).mat().row(0).transpose();
}

Tensor apply_transform(const ModelConfig& cfg, const Params& params,
                       const Tensor& raw_sequence) {
  if (raw_sequence.rank() != 3) {
    throw ShapeError("apply_transform: expected a rank-3 sequence");
  }
  const Matrix& w1 = params.at("transform.l1.w").mat();
  const Matrix& b1 = params.at("transform.l1.b").mat();
  const Matrix& w2 = params.at("transform.l2.w").mat();
  const Matrix& b2 = params.at("transform.l2.b").mat();
  Matrix h = raw_sequence.mat() * w1.transpose();
  h.rowwise() += b1.row(0);
  h = h.unaryExpr([](double v) { return sigmoid(v); });
  Matrix f = h * w2.transpose();
  f.rowwise() += b2.row(0);
  return Tensor(raw_sequence.dim(0), raw_sequence.dim(1), cfg.feature_dim,
                std::move(f));
}

// --- checkpoint container ---------------------------------------------------

namespace {
constexpr char kParamsMagic[5] = {'F', 'R', 'P', 'C', '1'};
}

void save_params(const Params& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kParamsMagic, sizeof(kParamsMagic));
  binio::put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, value] : params) {
    binio::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    binio::put_u32(os, static_cast<std::uint32_t>(value.rank()));
    for (Index d : value.shape()) {
      binio::put_u32(os, static_cast<std::uint32_t>(d));
    }
    const double* p = value.data();
    for (Index i = 0; i < value.size(); ++i) binio::put_f64(os, p[i]);
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

Params load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kParamsMagic, 5) != 0) {
    throw IoError("malformed header in '" + path + "'");
  }
  std::uint32_t count;
  if (!binio::get_u32(is, count)) {
    throw IoError("malformed header in '" + path + "'");
  }
  Params out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t name_len;
    if (!binio::get_u32(is, name_len)) {
      throw IoError("truncated payload in '" + path + "'");
    }
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) {
      throw IoError("truncated payload in '" + path + "'");
    }
    std::uint32_t rank;
    if (!binio::get_u32(is, rank) || rank < 1 || rank > 3) {
      throw IoError("dimension mismatch: bad rank for '" + name + "'");
    }
    Shape shape;
    {
      std::array<std::uint32_t, 3> dims{};
      for (std::uint32_t r = 0; r < rank; ++r) {
        if (!binio::get_u32(is, dims[r]) || dims[r] == 0) {
          throw IoError("dimension mismatch: bad dims for '" + name + "'");
        }
      }
      switch (rank) {
        case 1: shape = {static_cast<Index>(dims[0])}; break;
        case 2: shape = {static_cast<Index>(dims[0]), static_cast<Index>(dims[1])}; break;
        default:
          shape = {static_cast<Index>(dims[0]), static_cast<Index>(dims[1]),
                   static_cast<Index>(dims[2])};
          break;
      }
    }
    Tensor value = Tensor::zeros(shape);
    double* p = value.data();
    for (Index j = 0; j < value.size(); ++j) {
      if (!binio::get_f64(is, p[j])) {
        throw IoError("truncated payload in '" + path + "'");
      }
    }
    value.ensure_finite("checkpoint load");
    out.emplace(std::move(name), std::move(value));
  }
  return out;
}

}  // namespace fedrel
