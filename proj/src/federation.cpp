#include "fedrel/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <numeric>

namespace fedrel {

namespace {

constexpr std::uint64_t kPretrainInitStream = 0x10;
constexpr std::uint64_t kPretrainTrainStream = 0x11;
constexpr std::uint64_t kParticipantStream = 0x20;
constexpr std::uint64_t kServerStream = 0x30;
constexpr std::uint64_t kInitStream = 0x1;
constexpr std::uint64_t kEstimatorStream = 0x2;
constexpr std::uint64_t kTrainStream = 0x3;
constexpr std::uint64_t kVaeStream = 0x4;

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kFedRel: return "fedrel";
    case Mode::kFedAvg: return "fedavg";
    case Mode::kFedP: return "fedp";
    case Mode::kFedAtt: return "fedatt";
    case Mode::kCentral: return "central";
  }
  return "?";
}

Mode mode_from_string(const std::string& name) {
  if (name == "fedrel") return Mode::kFedRel;
  if (name == "fedavg") return Mode::kFedAvg;
  if (name == "fedp") return Mode::kFedP;
  if (name == "fedatt") return Mode::kFedAtt;
  if (name == "central") return Mode::kCentral;
  throw ConfigError("unknown mode '" + name + "'");
}

void FedConfig::validate() const {
  if (participants < 1) throw ConfigError("fed: participants must be >= 1");
  if (rounds < 1) throw ConfigError("fed: rounds must be >= 1");
  if (local_epochs < 0) throw ConfigError("fed: local_epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("fed: batch_size must be >= 1");
  if (!(fedp_fraction > 0.0 && fedp_fraction <= 1.0)) {
    throw ConfigError("fed: fedp_fraction must be in (0, 1]");
  }
  if (!(fedatt_epsilon > 0.0)) throw ConfigError("fed: fedatt_epsilon must be positive");
  if (!(dirichlet_alpha > 0.0)) throw ConfigError("fed: dirichlet_alpha must be positive");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("fed: train_fraction must be in (0, 1)");
  }
  if (pretrain_epochs < 0) throw ConfigError("fed: pretrain_epochs must be >= 0");
}

Vector synthesize_global(const std::vector<Vector>& d_hats) {
  if (d_hats.empty()) throw ShapeError("synthesize_global: empty list");
  Vector acc = d_hats.front();
  for (std::size_t k = 1; k < d_hats.size(); ++k) {
    if (d_hats[k].size() != acc.size()) {
      throw ShapeError("synthesize_global: dimension mismatch");
    }
    acc += d_hats[k];
  }
  return acc / static_cast<double>(d_hats.size());
}

std::vector<double> relevance_scores(const std::vector<Vector>& d_hats,
                                     const Vector& d_tilde) {
  if (d_hats.empty()) throw ShapeError("relevance_scores: empty list");
  std::vector<double> dist(d_hats.size());
  for (std::size_t k = 0; k < d_hats.size(); ++k) {
    if (d_hats[k].size() != d_tilde.size()) {
      throw ShapeError("relevance_scores: dimension mismatch");
    }
    dist[k] = (d_hats[k] - d_tilde).norm();
  }
  // Softmax with max subtraction: equal distances come out exactly 1/K.
  const double mx = *std::max_element(dist.begin(), dist.end());
  double total = 0.0;
  std::vector<double> r(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) {
    r[k] = std::exp(dist[k] - mx);
    total += r[k];
  }
  for (auto& v : r) v /= total;
  return r;
}

namespace {

void require_same_names(const Params& a, const Params& b, const char* what) {
  if (a.size() == b.size() &&
      std::equal(a.begin(), a.end(), b.begin(),
                 [](const auto& x, const auto& y) { return x.first == y.first; })) {
    return;
  }
  std::string diff;
  for (const auto& [name, _] : a) {
    if (!b.count(name)) diff += " -" + name;
  }
  for (const auto& [name, _] : b) {
    if (!a.count(name)) diff += " +" + name;
  }
  throw ShapeError(std::string(what) + ": name sets differ:" + diff);
}

}  // namespace

Params aggregate_weights(const std::vector<const Params*>& params,
                         const std::vector<double>& relevance) {
  if (params.empty()) throw ShapeError("aggregate_weights: empty upload list");
  if (params.size() != relevance.size()) {
    throw ShapeError("aggregate_weights: relevance length mismatch");
  }
  double sum = 0.0;
  for (double r : relevance) {
    if (r < 0.0) throw NumericError("aggregate_weights: negative relevance");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw NumericError("aggregate_weights: relevance sums to " + std::to_string(sum));
  }
  for (std::size_t k = 1; k < params.size(); ++k) {
    require_same_names(*params[0], *params[k], "aggregate_weights");
  }
  Params out;
  for (const auto& [name, value] : *params[0]) {
    Tensor acc = value;
    acc.mat() *= relevance[0];
    out.emplace(name, std::move(acc));
  }
  for (std::size_t k = 1; k < params.size(); ++k) {
    for (auto& [name, acc] : out) {
      const Tensor& v = params[k]->at(name);
      if (!v.same_shape(acc)) {
        throw ShapeError("aggregate_weights: shape mismatch for '" + name + "'");
      }
      acc.mat() += relevance[k] * v.mat();
    }
  }
  return out;
}

Params fedatt_aggregate(const Params& global,
                        const std::vector<const Params*>& uploads,
                        double epsilon,
                        std::vector<double>* mean_attention) {
  if (uploads.empty()) throw ShapeError("fedatt_aggregate: empty upload list");
  for (const Params* u : uploads) {
    require_same_names(global, *u, "fedatt_aggregate");
  }
  const std::size_t k_count = uploads.size();
  std::vector<double> att_total(k_count, 0.0);
  Params out;
  std::vector<double> dist(k_count), att(k_count);
  for (const auto& [name, g] : global) {
    for (std::size_t k = 0; k < k_count; ++k) {
      dist[k] = (g.mat() - uploads[k]->at(name).mat()).norm();
    }
    const double mx = *std::max_element(dist.begin(), dist.end());
    double total = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) {
      att[k] = std::exp(dist[k] - mx);
      total += att[k];
    }
    for (auto& a : att) a /= total;

    Tensor stepped = g;
    for (std::size_t k = 0; k < k_count; ++k) {
      stepped.mat() -= epsilon * att[k] * (g.mat() - uploads[k]->at(name).mat());
      att_total[k] += att[k];
    }
    out.emplace(name, std::move(stepped));
  }
  if (mean_attention != nullptr) {
    mean_attention->assign(k_count, 0.0);
    for (std::size_t k = 0; k < k_count; ++k) {
      (*mean_attention)[k] = att_total[k] / static_cast<double>(global.size());
    }
  }
  return out;
}

namespace {

/// Batches of shuffled window indices; shared by pretraining and local
/// updates.
template <typename StepFn>
void epoch_over_batches(std::size_t count, int epochs, int batch_size, Rng& rng,
                        StepFn&& step) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  for (int e = 0; e < epochs; ++e) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < count;
         start += static_cast<std::size_t>(batch_size)) {
      const std::size_t stop =
          std::min(count, start + static_cast<std::size_t>(batch_size));
      step(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop)));
    }
  }
}

void run_participants(int k_count, bool concurrent,
                      const std::function<void(int)>& fn) {
  if (!concurrent) {
    for (int k = 0; k < k_count; ++k) fn(k);
    return;
  }
  std::vector<std::future<void>> futures;
  futures.reserve(static_cast<std::size_t>(k_count));
  for (int k = 0; k < k_count; ++k) {
    futures.push_back(std::async(std::launch::async, fn, k));
  }
  for (auto& f : futures) f.get();
}

}  // namespace

double local_update(Participant& p, const ModelConfig& cfg, const FedConfig& fed,
                    const DownloadEnvelope& download, int epochs) {
  for (const auto& [name, value] : download.global) {
    auto it = p.model.find(name);
    if (it == p.model.end()) {
      throw ShapeError("local_update: global parameter '" + name +
                       "' unknown to participant");
    }
    it->second = value;
  }
  if (epochs <= 0) return std::numeric_limits<double>::quiet_NaN();
  const Shard& shard = *p.shard;
  if (shard.windows.empty()) throw Error("local_update: empty shard");

  Tensor d_row, target_row;
  if (download.d_tilde) {
    d_row = Tensor(Matrix(p.d.transpose()));
    target_row = Tensor(Matrix(download.d_tilde->transpose()));
  }

  double loss_total = 0.0;
  std::size_t windows_seen = 0;
  Tape t;
  epoch_over_batches(
      shard.windows.size(), epochs, fed.batch_size, p.train_rng,
      [&](const std::vector<std::size_t>& batch_ids) {
        t.clear();
        ModelVars vars = register_params(t, p.model, false);
        std::vector<const TemporalWindow*> batch;
        batch.reserve(batch_ids.size());
        for (std::size_t i : batch_ids) batch.push_back(&shard.windows[i]);
        ForwardOptions opts{true, &p.train_rng};
        ValueId ce = batch_loss(t, vars, cfg, batch, opts);
        loss_total += t.value(ce).scalar_value() *
                      static_cast<double>(batch_ids.size());
        windows_seen += batch_ids.size();
        ValueId loss = ce;
        VarMap est_vars;
        if (download.d_tilde) {
          // Distribution-aware term: MSE between the current global
          // approximation and the synthesized global vector.
          est_vars = register_leaves(t, p.estimator, true);
          ValueId d_hat = estimate_global_on_tape(t, est_vars, t.constant(d_row));
          ValueId diff = sub(t, d_hat, t.constant(target_row));
          loss = add(t, loss, mean_all(t, mul(t, diff, diff)));
        }
        const auto grads = backward(t, loss).to_map();
        adam_step(p.model, grads, p.model_opt);
        if (download.d_tilde) adam_step(p.estimator, grads, p.estimator_opt);
      });

  if (download.d_tilde) p.d_hat = estimate_global(p.d, p.estimator);
  return loss_total / static_cast<double>(windows_seen);
}

FedDataBundle prepare_bundle(const Dataset& ds, const ModelConfig& model_cfg,
                             const FedConfig& fed) {
  model_cfg.validate();
  fed.validate();
  if (ds.raw_dim != model_cfg.raw_dim) {
    throw ShapeError("prepare_bundle: dataset raw_dim " +
                     std::to_string(ds.raw_dim) + " != model raw_dim " +
                     std::to_string(model_cfg.raw_dim));
  }
  if (ds.num_classes != model_cfg.num_classes) {
    throw ShapeError("prepare_bundle: dataset classes " +
                     std::to_string(ds.num_classes) + " != model classes " +
                     std::to_string(model_cfg.num_classes));
  }
  if (model_cfg.window >= ds.time_steps) {
    throw ShapeError("prepare_bundle: window must be < time_steps");
  }

  FedDataBundle bundle;
  bundle.model_cfg = model_cfg;
  auto [train_idx, test_idx] = train_test_split(ds, fed.train_fraction, fed.seed);
  if (train_idx.empty() || test_idx.empty()) {
    throw ShapeError("prepare_bundle: split produced an empty side");
  }

  // Phase one: brief centralized training of the full model on raw windows;
  // only the transform net survives (frozen, copied to every participant).
  Rng init_rng(derive_seed(fed.seed, kPretrainInitStream, 0));
  Params pretrained = init_params(model_cfg, init_rng);
  if (fed.pretrain_epochs > 0) {
    std::vector<TemporalWindow> raw_windows;
    for (std::size_t idx : train_idx) {
      const RawSequence& seq = ds.sequences[idx];
      auto windows = make_windows(seq.values, seq.label, model_cfg.window);
      for (auto& w : windows) raw_windows.push_back(std::move(w));
    }
    Rng train_rng(derive_seed(fed.seed, kPretrainTrainStream, 0));
    AdamState opt(fed.adam);
    Tape t;
    epoch_over_batches(
        raw_windows.size(), fed.pretrain_epochs, fed.batch_size, train_rng,
        [&](const std::vector<std::size_t>& batch_ids) {
          t.clear();
          ModelVars vars = register_params(t, pretrained, true);
          std::vector<const TemporalWindow*> batch;
          batch.reserve(batch_ids.size());
          for (std::size_t i : batch_ids) batch.push_back(&raw_windows[i]);
          ForwardOptions opts{true, &train_rng};
          ValueId loss = batch_loss_raw(t, vars, model_cfg, batch, opts);
          adam_step(pretrained, backward(t, loss).to_map(), opt);
        });
  }
  bundle.pretrained = pretrained;

  // Transformed feature windows for the pooled train set and the test set.
  std::map<std::size_t, Tensor> features;
  auto features_of = [&](std::size_t idx) -> const Tensor& {
    auto it = features.find(idx);
    if (it == features.end()) {
      it = features
               .emplace(idx, apply_transform(model_cfg, pretrained,
                                             ds.sequences[idx].values))
               .first;
    }
    return it->second;
  };
  for (std::size_t idx : train_idx) {
    auto windows = make_windows(features_of(idx), ds.sequences[idx].label,
                                model_cfg.window);
    for (auto& w : windows) bundle.train_windows.push_back(std::move(w));
  }
  for (std::size_t idx : test_idx) {
    auto windows = make_windows(features_of(idx), ds.sequences[idx].label,
                                model_cfg.window);
    for (auto& w : windows) bundle.test_windows.push_back(std::move(w));
  }

  const int k_count = fed.mode == Mode::kCentral ? 1 : fed.participants;
  PartitionSpec spec{k_count, fed.dirichlet_alpha, fed.seed};
  auto shard_indices = partition_noniid(ds, train_idx, spec);
  bundle.shards.resize(shard_indices.size());
  for (std::size_t k = 0; k < shard_indices.size(); ++k) {
    Shard& shard = bundle.shards[k];
    shard.sequence_ids = shard_indices[k];
    for (std::size_t idx : shard.sequence_ids) {
      auto windows = make_windows(features_of(idx), ds.sequences[idx].label,
                                  model_cfg.window);
      for (auto& w : windows) shard.windows.push_back(std::move(w));
    }
    shard.points = shard_points(ds, shard.sequence_ids);
  }
  for (std::size_t k = 0; k < bundle.shards.size(); ++k) {
    bundle.participant_seeds.push_back(
        derive_seed(fed.seed, kParticipantStream, k));
  }
  return bundle;
}

namespace {

Params federated_subset(const Params& params) {
  Params out;
  for (const auto& name : federated_names(params)) {
    out.emplace(name, params.at(name));
  }
  return out;
}

std::vector<int> fedp_sample(Rng& rng, int k_count, double fraction) {
  const int m = std::max(1, static_cast<int>(std::ceil(
                                fraction * static_cast<double>(k_count))));
  std::vector<int> ids(static_cast<std::size_t>(k_count));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < m; ++i) {
    const auto j = static_cast<std::size_t>(i) +
                   rng.uniform_index(static_cast<std::uint64_t>(k_count - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(m));
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

RunResult run_protocol(const FedConfig& fed, const FedDataBundle& bundle) {
  fed.validate();
  bundle.model_cfg.validate();
  const Mode mode = fed.mode;
  const int k_count = static_cast<int>(bundle.shards.size());
  if (k_count < 1) throw ShapeError("run_protocol: bundle has no shards");
  if (bundle.participant_seeds.size() != bundle.shards.size()) {
    throw ShapeError("run_protocol: one seed per shard required");
  }
  const bool is_fedrel = mode == Mode::kFedRel;
  const ModelConfig& mc = bundle.model_cfg;

  std::vector<Participant> parts(static_cast<std::size_t>(k_count));
  run_participants(k_count, fed.concurrent, [&](int k) {
    Participant& p = parts[static_cast<std::size_t>(k)];
    p.id = k;
    p.shard = &bundle.shards[static_cast<std::size_t>(k)];
    const std::uint64_t pseed = bundle.participant_seeds[static_cast<std::size_t>(k)];
    Rng init_rng(derive_seed(pseed, kInitStream, 0));
    p.model = init_params(mc, init_rng);
    for (auto& [name, value] : p.model) {
      if (name.rfind("transform.", 0) == 0) {
        value = bundle.pretrained.at(name);
      }
    }
    p.model_opt = AdamState(fed.adam);
    p.train_rng = Rng(derive_seed(pseed, kTrainStream, 0));
    if (is_fedrel) {
      p.vae = vae_pretrain(p.shard->points, fed.vae,
                           derive_seed(pseed, kVaeStream, 0));
      p.d = local_distribution(p.shard->points, p.vae);
      Rng est_rng(derive_seed(pseed, kEstimatorStream, 0));
      p.estimator = estimator_init(fed.vae.latent, fed.vae.hidden, est_rng);
      p.estimator_opt = AdamState(fed.adam);
      p.d_hat = estimate_global(p.d, p.estimator);
    }
  });

  ServerState server;
  Rng server_rng(derive_seed(fed.seed, kServerStream, 0));
  RunResult result;
  result.rounds.reserve(static_cast<std::size_t>(fed.rounds));

  for (int round = 1; round <= fed.rounds; ++round) {
    const auto t0 = std::chrono::steady_clock::now();
    server.round = round;

    std::vector<int> active(static_cast<std::size_t>(k_count));
    std::iota(active.begin(), active.end(), 0);
    if (mode == Mode::kFedP) {
      active = fedp_sample(server_rng, k_count, fed.fedp_fraction);
    }

    // Upload phase: active participants refresh their global approximation
    // and send their current weights.
    if (is_fedrel) {
      run_participants(k_count, fed.concurrent, [&](int k) {
        Participant& p = parts[static_cast<std::size_t>(k)];
        p.d_hat = estimate_global(p.d, p.estimator);
      });
    }
    std::vector<UploadEnvelope> uploads;
    uploads.reserve(active.size());
    for (int k : active) {
      Participant& p = parts[static_cast<std::size_t>(k)];
      UploadEnvelope up;
      up.round = round;
      up.participant = k;
      up.model = federated_subset(p.model);
      if (is_fedrel) {
        up.estimator = p.estimator;
        up.d_hat = p.d_hat;
      }
      server.upload_log.push_back({round, k, up.model.size(),
                                   up.estimator.size(), up.d_hat.has_value()});
      uploads.push_back(std::move(up));
    }

    // Server aggregation.
    std::vector<const Params*> models;
    models.reserve(uploads.size());
    for (const auto& up : uploads) models.push_back(&up.model);
    std::vector<double> relevance(static_cast<std::size_t>(k_count), 0.0);
    switch (mode) {
      case Mode::kFedRel: {
        std::vector<Vector> d_hats;
        d_hats.reserve(uploads.size());
        for (const auto& up : uploads) d_hats.push_back(*up.d_hat);
        server.d_tilde = synthesize_global(d_hats);
        relevance = relevance_scores(d_hats, server.d_tilde);
        server.global = aggregate_weights(models, relevance);
        break;
      }
      case Mode::kFedAvg:
      case Mode::kCentral: {
        std::fill(relevance.begin(), relevance.end(),
                  1.0 / static_cast<double>(k_count));
        server.global = aggregate_weights(models, relevance);
        break;
      }
      case Mode::kFedP: {
        std::vector<double> uniform(active.size(),
                                    1.0 / static_cast<double>(active.size()));
        server.global = aggregate_weights(models, uniform);
        for (std::size_t i = 0; i < active.size(); ++i) {
          relevance[static_cast<std::size_t>(active[i])] = uniform[i];
        }
        break;
      }
      case Mode::kFedAtt: {
        if (server.global.empty()) {
          std::vector<double> uniform(models.size(),
                                      1.0 / static_cast<double>(models.size()));
          server.global = aggregate_weights(models, uniform);
        }
        server.global = fedatt_aggregate(server.global, models,
                                         fed.fedatt_epsilon, &relevance);
        break;
      }
    }
    double rel_sum = std::accumulate(relevance.begin(), relevance.end(), 0.0);
    if (std::abs(rel_sum - 1.0) > 1e-9) {
      throw NumericError("round " + std::to_string(round) +
                         ": relevance sums to " + std::to_string(rel_sum));
    }
    server.relevance_history.push_back(relevance);

    // Distribution and local updates.
    DownloadEnvelope down;
    down.round = round;
    down.global = server.global;
    if (is_fedrel) down.d_tilde = server.d_tilde;
    std::vector<char> is_active(static_cast<std::size_t>(k_count), 0);
    for (int k : active) is_active[static_cast<std::size_t>(k)] = 1;
    std::vector<double> local_loss(static_cast<std::size_t>(k_count), 0.0);
    run_participants(k_count, fed.concurrent, [&](int k) {
      if (!is_active[static_cast<std::size_t>(k)]) return;
      try {
        local_loss[static_cast<std::size_t>(k)] = local_update(
            parts[static_cast<std::size_t>(k)], mc, fed, down, fed.local_epochs);
      } catch (const std::exception& e) {
        throw Error("round " + std::to_string(round) + ", participant " +
                    std::to_string(k) + ": " + e.what());
      }
    });
    double loss_weight = 0.0, loss_acc = 0.0;
    for (int k : active) {
      const double w = static_cast<double>(
          bundle.shards[static_cast<std::size_t>(k)].windows.size());
      if (std::isfinite(local_loss[static_cast<std::size_t>(k)])) {
        loss_acc += w * local_loss[static_cast<std::size_t>(k)];
        loss_weight += w;
      }
    }
    result.train_loss.push_back(
        loss_weight > 0.0 ? loss_acc / loss_weight
                          : std::numeric_limits<double>::quiet_NaN());

    // Global evaluation on the shared test split.
    EvalMetrics em = evaluate(mc, server.global, bundle.test_windows);
    if (!std::isfinite(em.mean_loss)) {
      throw NumericError("round " + std::to_string(round) +
                         ": non-finite global loss");
    }
    RoundMetrics rm;
    rm.round = round;
    rm.mode = mode_name(mode);
    rm.global_loss = em.mean_loss;
    rm.global_acc = em.accuracy;
    rm.global_macro_f1 = em.macro_f1;
    rm.relevance = relevance;
    rm.wall_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    result.rounds.push_back(std::move(rm));
  }

  result.final_global = server.global;
  for (const auto& [name, value] : bundle.pretrained) {
    if (name.rfind("transform.", 0) == 0) {
      result.final_global.emplace(name, value);
    }
  }
  result.server = std::move(server);
  return result;
}

RunResult run_fedrel(const FedConfig& fed, const FedDataBundle& bundle) {
  FedConfig cfg = fed;
  cfg.mode = Mode::kFedRel;
  return run_protocol(cfg, bundle);
}

RunResult run_baseline(Mode mode, const FedConfig& fed,
                       const FedDataBundle& bundle) {
  if (mode == Mode::kFedRel) {
    throw ConfigError("run_baseline: fedrel is not a baseline mode");
  }
  FedConfig cfg = fed;
  cfg.mode = mode;
  return run_protocol(cfg, bundle);
}

RunResult run_experiment(const FedConfig& fed, const ModelConfig& model_cfg,
                         const Dataset& ds) {
  FedDataBundle bundle = prepare_bundle(ds, model_cfg, fed);
  return run_protocol(fed, bundle);
}

}  // namespace fedrel
