#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedrel/diig.hpp"
#include "fedrel/metrics.hpp"
#include "fedrel/optim.hpp"
#include "fedrel/relevance.hpp"
#include "fedrel/rng.hpp"
#include "fedrel/synthdata.hpp"

namespace fedrel {

enum class Mode { kFedRel, kFedAvg, kFedP, kFedAtt, kCentral };

std::string mode_name(Mode mode);
Mode mode_from_string(const std::string& name);

struct FedConfig {
  int participants = 3;      // K
  int rounds = 150;
  int local_epochs = 1;
  int batch_size = 8;
  Mode mode = Mode::kFedRel;
  double fedp_fraction = 0.6;
  double fedatt_epsilon = 1.5e-3;
  double dirichlet_alpha = 0.5;
  double train_fraction = 0.8;
  int pretrain_epochs = 10;   // centralized transform-net phase
  bool concurrent = false;    // run participants on worker threads
  std::uint64_t seed = 1;
  AdamConfig adam;
  VaeConfig vae;

  void validate() const;
};

/// One participant's private state. Every participant owns its model, tapes,
/// optimizer state and RNG streams, so participants never contend.
struct Participant {
  int id = 0;
  const struct Shard* shard = nullptr;
  Params model;       // Theta^(k); includes the frozen transform copy
  Params estimator;   // theta^(k), FedRel only
  Params vae;         // phi, frozen after pretraining, FedRel only
  Vector d;           // local latent distribution
  Vector d_hat;       // approximated global distribution
  AdamState model_opt;
  AdamState estimator_opt;
  Rng train_rng;      // batch order + dropout masks

  Participant() : train_rng(0) {}
};

/// Private training material of one participant.
struct Shard {
  std::vector<TemporalWindow> windows;  // transformed feature windows
  std::vector<Tensor> points;           // reshaped raw rows for the VAE
  std::vector<std::size_t> sequence_ids;
};

/// Round-stamped message records; the in-process stand-in for the network.
struct UploadEnvelope {
  int round = 0;
  int participant = 0;
  Params model;
  Params estimator;               // carried but never aggregated
  std::optional<Vector> d_hat;
};

struct DownloadEnvelope {
  int round = 0;
  Params global;
  std::optional<Vector> d_tilde;
};

struct UploadRecord {
  int round = 0;
  int participant = 0;
  std::size_t model_entries = 0;
  std::size_t estimator_entries = 0;
  bool has_d_hat = false;
};

struct ServerState {
  Params global;  // federated names only
  Vector d_tilde;
  int round = 0;
  std::vector<std::vector<double>> relevance_history;
  std::vector<UploadRecord> upload_log;
};

/// Mean of the uploaded approximations (the server-side vector aggregator).
Vector synthesize_global(const std::vector<Vector>& d_hats);

/// Softmax (with max subtraction) over Euclidean distances to the synthesized
/// global vector. Equal distances give exactly uniform 1/K scores; larger
/// deviation earns a larger weight.
std::vector<double> relevance_scores(const std::vector<Vector>& d_hats,
                                     const Vector& d_tilde);

/// Name-wise convex combination of the uploaded collections.
Params aggregate_weights(const std::vector<const Params*>& params,
                         const std::vector<double>& relevance);

/// Layer-wise attentive server step: per parameter name, softmax over
/// participants of ||global - upload||_2 weights a step of size epsilon from
/// the global toward the uploads. Identical uploads equal to the global are
/// a fixed point. When given, `mean_attention` receives the per-participant
/// attention averaged over names.
Params fedatt_aggregate(const Params& global,
                        const std::vector<const Params*>& uploads,
                        double epsilon,
                        std::vector<double>* mean_attention = nullptr);

/// One round of local work: install the distributed global weights, then run
/// `epochs` passes of Adam over the shard. With a synthesized global vector
/// present the batch loss gains MSE(d_hat, d_tilde) and the estimator is
/// updated alongside the model; d_hat is recomputed afterwards. Returns the
/// mean per-window classification loss seen during the update (NaN when no
/// batch ran).
double local_update(Participant& p, const ModelConfig& cfg,
                    const FedConfig& fed, const DownloadEnvelope& download,
                    int epochs);

/// Everything a protocol run consumes, prepared once per dataset/seed:
/// the 80/20 split, the centrally pretrained (then frozen) transform net,
/// transformed feature windows, and the non-IID shards.
struct FedDataBundle {
  ModelConfig model_cfg;
  std::vector<Shard> shards;
  std::vector<std::uint64_t> participant_seeds;
  std::vector<TemporalWindow> train_windows;  // pooled, for train-set metrics
  std::vector<TemporalWindow> test_windows;
  Params pretrained;  // full parameter set from the transform phase
};

FedDataBundle prepare_bundle(const Dataset& ds, const ModelConfig& model_cfg,
                             const FedConfig& fed);

struct RunResult {
  std::vector<RoundMetrics> rounds;
  Params final_global;  // federated weights + frozen transform, checkpoint-ready
  ServerState server;
  /// Per round: mean classification loss over the windows processed by the
  /// active participants' local updates (the training-side loss).
  std::vector<double> train_loss;
};

/// Runs the configured protocol over a prepared bundle. Deterministic per
/// seeds; sequential and concurrent participant execution produce identical
/// results.
RunResult run_protocol(const FedConfig& fed, const FedDataBundle& bundle);

/// Full FedRel (Algorithm-1 shape): VAE pretraining, per-round uploads of
/// (Theta, theta, d_hat), server synthesis + relevance-weighted aggregation,
/// distribution of (Theta, d_tilde), distribution-aware local updates.
RunResult run_fedrel(const FedConfig& fed, const FedDataBundle& bundle);

/// FedAvg / FedP / FedAtt / Centralized under the same round skeleton.
RunResult run_baseline(Mode mode, const FedConfig& fed,
                       const FedDataBundle& bundle);

/// Convenience: prepare a bundle from a dataset and run.
RunResult run_experiment(const FedConfig& fed, const ModelConfig& model_cfg,
                         const Dataset& ds);

}  // namespace fedrel
