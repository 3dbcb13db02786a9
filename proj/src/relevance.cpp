#include "fedrel/relevance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedrel/diig.hpp"
#include "fedrel/optim.hpp"

namespace fedrel {

namespace {

constexpr std::uint64_t kVaeInitStream = 0xAE;

}  // namespace

Params vae_init(Index input_dim, const VaeConfig& cfg, Rng& rng) {
  if (input_dim < 1 || cfg.latent < 1 || cfg.hidden < 1) {
    throw ShapeError("vae_init: dims must be positive");
  }
  std::map<std::string, Shape> shapes;
  shapes["enc.l1.w"] = {cfg.hidden, input_dim};
  shapes["enc.l1.b"] = {1, cfg.hidden};
  shapes["enc.mu.w"] = {cfg.latent, cfg.hidden};
  shapes["enc.mu.b"] = {1, cfg.latent};
  shapes["enc.logvar.w"] = {cfg.latent, cfg.hidden};
  shapes["enc.logvar.b"] = {1, cfg.latent};
  shapes["dec.l1.w"] = {cfg.hidden, cfg.latent};
  shapes["dec.l1.b"] = {1, cfg.hidden};
  shapes["dec.out.w"] = {input_dim, cfg.hidden};
  shapes["dec.out.b"] = {1, input_dim};
  Params out;
  for (const auto& [name, shape] : shapes) {
    const bool bias = name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0;
    out.emplace(name, bias ? Tensor::zeros(shape) : xavier_init(shape, rng));
  }
  return out;
}

ValueId vae_encoder_mu(Tape& t, const VarMap& vars, ValueId point) {
  ValueId h = sigmoid(t, linear(t, point, vars.at("enc.l1.w"), vars.at("enc.l1.b")));
  return linear(t, h, vars.at("enc.mu.w"), vars.at("enc.mu.b"));
}

VaePointLoss vae_point_loss(Tape& t, const VarMap& vars, ValueId point,
                            ValueId noise) {
  ValueId h = sigmoid(t, linear(t, point, vars.at("enc.l1.w"), vars.at("enc.l1.b")));
  ValueId mu = linear(t, h, vars.at("enc.mu.w"), vars.at("enc.mu.b"));
  ValueId logvar = linear(t, h, vars.at("enc.logvar.w"), vars.at("enc.logvar.b"));

  // KL(N(mu, sigma^2 I) || N(0, I)) = -1/2 sum(1 + logvar - mu^2 - sigma^2).
  ValueId inner = sub(t, sub(t, shift(t, logvar, 1.0), mul(t, mu, mu)),
                      exp_elem(t, logvar));
  ValueId kl = scale(t, sum_all(t, inner), -0.5);

  // Reparameterized sample z = mu + sigma * eps with recorded eps.
  ValueId sd = exp_elem(t, scale(t, logvar, 0.5));
  ValueId z = add(t, mu, mul(t, sd, noise));

  ValueId dh = sigmoid(t, linear(t, z, vars.at("dec.l1.w"), vars.at("dec.l1.b")));
  ValueId recon_out = linear(t, dh, vars.at("dec.out.w"), vars.at("dec.out.b"));
  ValueId diff = sub(t, recon_out, point);
  ValueId recon = mean_all(t, mul(t, diff, diff));

  return {mu, logvar, kl, recon, add(t, recon, kl)};
}

Params vae_pretrain(const std::vector<Tensor>& points, const VaeConfig& cfg,
                    std::uint64_t seed, std::vector<double>* epoch_losses) {
  if (points.empty()) throw ShapeError("vae_pretrain: empty shard");
  const Index input_dim = points.front().cols();
  for (const Tensor& p : points) {
    if (p.rank() != 2 || p.rows() != 1 || p.cols() != input_dim) {
      throw ShapeError("vae_pretrain: points must be 1 x input rows");
    }
  }

  Rng init_rng(derive_seed(seed, kVaeInitStream, 0));
  Params phi = vae_init(input_dim, cfg, init_rng);
  Rng train_rng(derive_seed(seed, kVaeInitStream, 1));
  AdamState opt(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});

  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch =
      std::max<std::size_t>(1, static_cast<std::size_t>(cfg.batch_size));

  Tape t;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    train_rng.shuffle(order);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      t.clear();
      VarMap vars = register_leaves(t, phi, true);
      ValueId total = kNoInput;
      for (std::size_t i = start; i < stop; ++i) {
        Tensor noise = Tensor::zeros({1, cfg.latent});
        for (Index j = 0; j < cfg.latent; ++j) {
          noise.data()[j] = train_rng.gaussian();
        }
        ValueId point = t.constant(points[order[i]]);
        VaePointLoss piece = vae_point_loss(t, vars, point, t.constant(std::move(noise)));
        total = total == kNoInput ? piece.loss : add(t, total, piece.loss);
      }
      ValueId loss = scale(t, total, 1.0 / static_cast<double>(stop - start));
      epoch_total += t.value(loss).scalar_value() * static_cast<double>(stop - start);
      adam_step(phi, backward(t, loss), opt);
    }
    if (epoch_losses != nullptr) {
      epoch_losses->push_back(epoch_total / static_cast<double>(points.size()));
    }
  }
  return phi;
}

Vector encode_latent(const Tensor& point, const Params& phi) {
  if (point.rank() != 2 || point.rows() != 1) {
    throw ShapeError("encode_latent: expected a 1 x input row");
  }
  const Matrix& w1 = phi.at("enc.l1.w").mat();
  if (point.cols() != w1.cols()) {
    throw ShapeError("encode_latent: input width " + std::to_string(point.cols()) +
                     " does not match encoder " + std::to_string(w1.cols()));
  }
  Matrix h = point.mat() * w1.transpose();
  h.rowwise() += phi.at("enc.l1.b").mat().row(0);
  h = h.unaryExpr([](double v) { return sigmoid(v); });
  Matrix mu = h * phi.at("enc.mu.w").mat().transpose();
  mu.rowwise() += phi.at("enc.mu.b").mat().row(0);
  return mu.row(0).transpose();
}

Vector local_distribution(const std::vector<Tensor>& points, const Params& phi) {
  if (points.empty()) throw ShapeError("local_distribution: empty shard");
  Vector acc = encode_latent(points.front(), phi);
  for (std::size_t i = 1; i < points.size(); ++i) {
    acc += encode_latent(points[i], phi);
  }
  return acc / static_cast<double>(points.size());
}

double kl_standard_normal(const Vector& mu, const Vector& logvar) {
  if (mu.size() != logvar.size()) {
    throw ShapeError("kl_standard_normal: size mismatch");
  }
  double total = 0.0;
  for (Index i = 0; i < mu.size(); ++i) {
    total += 1.0 + logvar(i) - mu(i) * mu(i) - std::exp(logvar(i));
  }
  return -0.5 * total;
}

Params estimator_init(Index latent, Index hidden, Rng& rng) {
  if (latent < 1 || hidden < 1) throw ShapeError("estimator_init: dims must be positive");
  Params out;
  out.emplace("est.l1.w", xavier_init({hidden, latent}, rng));
  out.emplace("est.l1.b", Tensor::zeros({1, hidden}));
  out.emplace("est.out.w", xavier_init({latent, hidden}, rng));
  out.emplace("est.out.b", Tensor::zeros({1, latent}));
  return out;
}

Vector estimate_global(const Vector& d, const Params& theta) {
  const Matrix& w1 = theta.at("est.l1.w").mat();
  if (d.size() != w1.cols()) {
    throw ShapeError("estimate_global: latent size mismatch");
  }
  Matrix h = d.transpose() * w1.transpose();
  h.rowwise() += theta.at("est.l1.b").mat().row(0);
  h = h.unaryExpr([](double v) { return sigmoid(v); });
  Matrix out = h * theta.at("est.out.w").mat().transpose();
  out.rowwise() += theta.at("est.out.b").mat().row(0);
  return out.row(0).transpose();
}

ValueId estimate_global_on_tape(Tape& t, const VarMap& vars, ValueId d) {
  ValueId h = sigmoid(t, linear(t, d, vars.at("est.l1.w"), vars.at("est.l1.b")));
  return linear(t, h, vars.at("est.out.w"), vars.at("est.out.b"));
}

std::vector<Tensor> reshape_points(const RawSequence& seq) {
  if (seq.values.rank() != 3) {
    throw ShapeError("reshape_points: expected a rank-3 sequence");
  }
  const Index t_steps = seq.values.dim(0);
  const Index width = seq.values.dim(1) * seq.values.dim(2);
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(t_steps));
  for (Index t = 0; t < t_steps; ++t) {
    Eigen::Map<const Eigen::RowVectorXd> row(seq.values.data() + t * width, width);
    Matrix point(1, width);
    point.row(0) = row;
    out.emplace_back(Tensor(std::move(point)));
  }
  return out;
}

std::vector<Tensor> shard_points(const Dataset& ds,
                                 const std::vector<std::size_t>& shard) {
  std::vector<Tensor> out;
  for (std::size_t idx : shard) {
    auto points = reshape_points(ds.sequences.at(idx));
    for (auto& p : points) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fedrel
