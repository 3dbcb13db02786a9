#include "fedrel/gradcheck.hpp"

#include <functional>

#include "fedrel/diig.hpp"
#include "fedrel/relevance.hpp"
#include "fedrel/rng.hpp"
#include "fedrel/tape.hpp"

namespace fedrel {

namespace {

/// Toy geometry small enough for exhaustive finite differencing.
ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.raw_dim = 4;
  cfg.feature_dim = 4;
  cfg.transform_hidden = 5;
  cfg.node_embed = 5;
  cfg.graph_embed = 6;
  cfg.readout_hidden1 = 4;
  cfg.readout_hidden2 = 6;
  cfg.layers = 2;
  cfg.window = 2;
  cfg.num_classes = 2;
  cfg.dropout = 0.0;
  return cfg;
}

constexpr int kToyNodes = 3;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(shape);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

/// Checks every trainable leaf of `t` against finite differences and records
/// the worst relative error under `name`.
void check_all_leaves(GradCheckReport& report, const std::string& name, Tape& t,
                      ValueId loss, double step) {
  Gradients grads = backward(t, loss);
  double worst = 0.0;
  for (const auto& [leaf_name, leaf_id] : grads.named_leaves()) {
    Tensor fd = fd_gradient(t, loss, leaf_id, step);
    worst = std::max(worst, max_rel_error(grads.named(leaf_name), fd));
  }
  report.entries.push_back({name, worst});
  report.worst = std::max(report.worst, worst);
}

void check_primitives(GradCheckReport& report, double step) {
  Rng rng(101);
  {
    Tape t;
    ValueId a = t.parameter(random_tensor({3, 4}, rng), "a");
    ValueId b = t.parameter(random_tensor({3, 4}, rng), "b");
    ValueId c = t.parameter(random_tensor({4, 2}, rng), "c");
    ValueId mixed = matmul(t, add(t, a, b), c);
    ValueId gated = mul(t, sigmoid(t, mixed), exp_elem(t, scale(t, mixed, 0.1)));
    ValueId loss = mean_all(t, gated);
    check_all_leaves(report, "primitives/arithmetic", t, loss, step);
  }
  {
    Tape t;
    ValueId a = t.parameter(random_tensor({4, 5}, rng), "a");
    ValueId b = t.parameter(random_tensor({4, 3}, rng), "b");
    ValueId joined = concat_cols(t, softmax_rows(t, a), transpose(t, transpose(t, b)));
    ValueId normed = layer_norm_rows(t, joined, 1e-5);
    ValueId loss = sum_all(t, mul(t, normed, normed));
    check_all_leaves(report, "primitives/softmax_layernorm", t, loss, step);
  }
  {
    Tape t;
    ValueId a = t.parameter(random_tensor({3, 4}, rng, 0.05, 2.0), "a");
    ValueId row = t.parameter(random_tensor({1, 4}, rng), "row");
    ValueId shifted = add_rowvec(t, log_floored(t, a, 1e-12), row);
    ValueId loss = mean_all(t, mul(t, colwise_mean(t, shifted), colwise_mean(t, shifted)));
    check_all_leaves(report, "primitives/log_rowvec_mean", t, loss, step);
  }
}

void check_model_ops(GradCheckReport& report, double step) {
  const ModelConfig cfg = toy_config();
  Rng rng(202);
  Params params = init_params(cfg, rng);

  const auto with_model = [&](const std::string& name,
                              const std::function<ValueId(Tape&, const ModelVars&)>& body) {
    Tape t;
    ModelVars vars = register_params(t, params, true);
    ValueId loss = body(t, vars);
    check_all_leaves(report, name, t, loss, step);
  };

  Rng data_rng(303);
  const Tensor x = random_tensor({kToyNodes, cfg.feature_dim}, data_rng);
  const Tensor raw = random_tensor({kToyNodes, cfg.raw_dim}, data_rng);

  with_model("ops/transform", [&](Tape& t, const ModelVars& vars) {
    ValueId features = transform_step(t, t.constant(raw), vars);
    return mean_all(t, mul(t, features, features));
  });
  with_model("ops/intra_correlation", [&](Tape& t, const ModelVars& vars) {
    ValueId adj = intra_correlation(t, t.constant(x), vars.at("intra.w_spa"));
    return mean_all(t, mul(t, adj, adj));
  });
  with_model("ops/message_pass", [&](Tape& t, const ModelVars& vars) {
    ValueId adj = intra_correlation(t, t.constant(x), vars.at("intra.w_spa"));
    ValueId h = message_pass(t, adj, t.constant(x), vars.at("intra.l1.w"),
                             vars.at("intra.l1.b"));
    return mean_all(t, mul(t, h, h));
  });
  with_model("ops/readout_fuse", [&](Tape& t, const ModelVars& vars) {
    ValueId adj = intra_correlation(t, t.constant(x), vars.at("intra.w_spa"));
    ValueId h = message_pass(t, adj, t.constant(x), vars.at("intra.l1.w"),
                             vars.at("intra.l1.b"));
    ValueId g = graph_readout(t, h, t.constant(x), vars);
    ValueId fused = fuse_embeddings(t, h, g, vars.at("fuse.w"), vars.at("fuse.b"),
                                    cfg.ln_eps);
    return mean_all(t, mul(t, fused, fused));
  });
  with_model("ops/inter_temporal_final", [&](Tape& t, const ModelVars& vars) {
    Rng local(404);
    std::vector<ValueId> fused;
    for (int k = 0; k < 3; ++k) {
      fused.push_back(t.constant(random_tensor({kToyNodes, cfg.node_embed}, local)));
    }
    ValueId h_tem = temporal_propagate(t, fused, vars, cfg, {});
    ValueId emb = final_embedding(t, fused.back(), h_tem, vars.at("out.w"),
                                  vars.at("out.b"));
    ValueId probs = predict_logits(t, emb);
    return classification_loss(t, probs, one_hot(cfg.num_classes, 1));
  });
}

void check_full_model(GradCheckReport& report, double step) {
  const ModelConfig cfg = toy_config();
  Rng rng(505);
  Params params = init_params(cfg, rng);
  Rng data_rng(606);
  const Tensor raw_window =
      random_tensor({cfg.window + 1, kToyNodes, cfg.raw_dim}, data_rng);

  Tape t;
  ModelVars vars = register_params(t, params, true);
  ValueId probs = window_logits_raw(t, vars, cfg, raw_window, {});
  ValueId loss = classification_loss(t, probs, one_hot(cfg.num_classes, 0));
  check_all_leaves(report, "model/full_window", t, loss, step);
}

void check_relevance_ops(GradCheckReport& report, double step) {
  Rng rng(707);
  VaeConfig vae_cfg;
  vae_cfg.latent = 3;
  vae_cfg.hidden = 5;
  const Index input_dim = 6;
  Params phi = vae_init(input_dim, vae_cfg, rng);
  {
    Tape t;
    VarMap vars = register_leaves(t, phi, true);
    ValueId point = t.constant(random_tensor({1, input_dim}, rng));
    ValueId noise = t.constant(random_tensor({1, vae_cfg.latent}, rng));
    VaePointLoss piece = vae_point_loss(t, vars, point, noise);
    check_all_leaves(report, "relevance/vae_elbo", t, piece.loss, step);
  }
  {
    Tape t;
    VarMap vars = register_leaves(t, phi, true);
    ValueId point = t.constant(random_tensor({1, input_dim}, rng));
    ValueId mu = vae_encoder_mu(t, vars, point);
    ValueId target = t.constant(random_tensor({1, vae_cfg.latent}, rng));
    ValueId diff = sub(t, mu, target);
    check_all_leaves(report, "relevance/encoder_mu", t,
                     mean_all(t, mul(t, diff, diff)), step);
  }
  {
    Params theta = estimator_init(vae_cfg.latent, vae_cfg.hidden, rng);
    Tape t;
    VarMap vars = register_leaves(t, theta, true);
    ValueId d = t.constant(random_tensor({1, vae_cfg.latent}, rng));
    ValueId d_hat = estimate_global_on_tape(t, vars, d);
    ValueId target = t.constant(random_tensor({1, vae_cfg.latent}, rng));
    ValueId diff = sub(t, d_hat, target);
    check_all_leaves(report, "relevance/estimator", t,
                     mean_all(t, mul(t, diff, diff)), step);
  }
}

}  // namespace

GradCheckReport run_gradient_suite(double fd_step) {
  GradCheckReport report;
  check_primitives(report, fd_step);
  check_model_ops(report, fd_step);
  check_full_model(report, fd_step);
  check_relevance_ops(report, fd_step);
  return report;
}

}  // namespace fedrel
