#pragma once

#include <string>
#include <vector>

#include "fedrel/correlations.hpp"
#include "fedrel/rng.hpp"
#include "fedrel/synthdata.hpp"
#include "fedrel/tape.hpp"
#include "fedrel/tensor.hpp"

namespace fedrel {

/// Replaces the dynamic intra correlation layer with a static function of the
/// per-step feature matrix (the intra-only ablation); kDynamic is the model
/// proper.
enum class IntraMode { kDynamic, kKnn, kPcc, kPlv };

struct ModelConfig {
  int raw_dim = 8;           // D, samples per channel per step
  int feature_dim = 16;      // d, transformed feature size
  int transform_hidden = 32;
  int node_embed = 32;
  int graph_embed = 64;
  int readout_hidden1 = 32;  // readout stack: [h1, h2] then linear output
  int readout_hidden2 = 64;
  int layers = 2;            // L, message-passing depth
  int window = 2;            // w
  int num_classes = 4;       // C
  double dropout = 0.3;
  double ln_eps = 1e-5;
  IntraMode intra_mode = IntraMode::kDynamic;
  int knn_k = 2;

  void validate() const;
};

/// Xavier-initialized parameter collection (biases start at zero). Names are
/// stable strings ("intra.l1.w", "fuse.b", ...); aggregation and checkpoints
/// operate name-wise.
Params init_params(const ModelConfig& cfg, Rng& rng);

/// Parameter names that participate in federated aggregation: everything
/// except the frozen feature-transform net ("transform.*").
std::vector<std::string> federated_names(const Params& params);

/// Leaf handles for one model registration on a tape.
using ModelVars = VarMap;

/// Registers every parameter as a tape leaf. With train_transform = false the
/// "transform.*" entries are recorded as constants so gradients skip them.
ModelVars register_params(Tape& t, const Params& params, bool train_transform);

struct ForwardOptions {
  bool training = false;  // enables dropout
  Rng* rng = nullptr;     // mask source; required when training with dropout
};

// --- building blocks -------------------------------------------------------

/// x W^T + broadcast bias: (rows x in) -> (rows x out).
ValueId linear(Tape& t, ValueId x, ValueId w, ValueId b);

/// Per-node two-layer dense net (sigmoid hidden, linear output) mapping one
/// step's raw N x D matrix to N x d features.
ValueId transform_step(Tape& t, ValueId raw_step, const ModelVars& vars);

/// Applies the transform net to every step of a rank-3 (steps x N x D)
/// tensor; returns one N x d handle per step.
std::vector<ValueId> transform_features(Tape& t, const Tensor& raw,
                                        const ModelVars& vars);

/// Row-stochastic dynamic correlation: softmax over j of
/// exp(x_i^T W_spa x_j).
ValueId intra_correlation(Tape& t, ValueId x_t, ValueId w_spa);

/// sigma(W (h | (1/N) A h)) applied row-wise. The 1/N factor is kept even
/// for row-stochastic A.
ValueId message_pass(Tape& t, ValueId adj, ValueId h, ValueId w, ValueId b);

/// Mean over nodes of (h_i | x_i), then the readout stack (two sigmoid
/// layers, linear output) to a 1 x graph_embed row.
ValueId graph_readout(Tape& t, ValueId h_last, ValueId x, const ModelVars& vars);

/// Per node: LN(sigma(W_fuse (h_i | h_graph))).
ValueId fuse_embeddings(Tape& t, ValueId h_nodes, ValueId graph_emb,
                        ValueId w, ValueId b, double ln_eps);

/// Row-stochastic temporal correlation between consecutive graphs:
/// softmax over j of exp(h_i(t)^T W_tem h_j(t-1)).
ValueId inter_correlation(Tape& t, ValueId h_t, ValueId h_prev, ValueId w_tem);

/// Recursive temporal propagation over the fused window: seeded at the
/// oldest step, each later step contributes its correlation with the running
/// embedding, which one shared-weight message pass then updates. w = 0
/// returns the fused embedding handle unchanged.
ValueId temporal_propagate(Tape& t, const std::vector<ValueId>& fused,
                           const ModelVars& vars, const ModelConfig& cfg,
                           const ForwardOptions& opts);

/// sigma(W_o (h_spa | h_tem)) per node; output width is the class count.
ValueId final_embedding(Tape& t, ValueId h_spa, ValueId h_tem, ValueId w,
                        ValueId b);

/// Softmax of the column-wise mean over nodes: 1 x C probabilities.
ValueId predict_logits(Tape& t, ValueId h_emb);

/// Categorical cross-entropy -sum y log(max(p, 1e-12)) against a one-hot row.
ValueId classification_loss(Tape& t, ValueId probs, const Tensor& one_hot);

Tensor one_hot(int num_classes, int label);

// --- whole-window forward ---------------------------------------------------

/// Probabilities for a window of transformed features ((w+1) x N x d).
ValueId window_logits(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                      const Tensor& feature_window, const ForwardOptions& opts);

/// Same, from a raw ((w+1) x N x D) window; records the transform net so its
/// parameters receive gradients.
ValueId window_logits_raw(Tape& t, const ModelVars& vars,
                          const ModelConfig& cfg, const Tensor& raw_window,
                          const ForwardOptions& opts);

/// Mean classification loss over a batch of feature windows.
ValueId batch_loss(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                   const std::vector<const TemporalWindow*>& batch,
                   const ForwardOptions& opts);

/// Mean classification loss over a batch of raw windows (transform trained).
ValueId batch_loss_raw(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                       const std::vector<const TemporalWindow*>& batch,
                       const ForwardOptions& opts);

/// Class probabilities for one feature window under fixed parameters.
Vector predict_window(const ModelConfig& cfg, const Params& params,
                      const Tensor& feature_window);

/// Applies a trained transform net to a full T x N x D sequence, yielding the
/// T x N x d feature tensor consumed by windowing.
Tensor apply_transform(const ModelConfig& cfg, const Params& params,
                       const Tensor& raw_sequence);

// Parameter checkpoint container: magic "FRPC1", u32 entry count, then per
// entry u32 name length + name bytes, u32 rank, u32 dims, float64 payload.
// Bit-exact round-trip.
void save_params(const Params& params, const std::string& path);
Params load_params(const std::string& path);

}  // namespace fedrel
