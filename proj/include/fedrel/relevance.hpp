#pragma once

#include <cstdint>
#include <vector>

#include "fedrel/rng.hpp"
#include "fedrel/synthdata.hpp"
#include "fedrel/tape.hpp"
#include "fedrel/tensor.hpp"

namespace fedrel {

struct VaeConfig {
  int latent = 8;
  int hidden = 32;
  int epochs = 30;
  int batch_size = 8;
  double lr = 1.5e-3;
};

/// Encoder (input -> mu, log sigma^2) and decoder (latent -> input) weights.
Params vae_init(Index input_dim, const VaeConfig& cfg, Rng& rng);

/// Encoder mean head on a tape: 1 x input point -> 1 x latent mu.
ValueId vae_encoder_mu(Tape& t, const VarMap& vars, ValueId point);

/// Loss pieces for one reshaped data point. `noise` is the recorded 1 x
/// latent standard-normal draw used by the reparameterized sample.
struct VaePointLoss {
  ValueId mu;
  ValueId logvar;
  ValueId kl;          // KL(q(z|x) || N(0, I)), summed over latent dims
  ValueId recon;       // mean squared reconstruction error
  ValueId loss;        // recon + kl (negative ELBO)
};
VaePointLoss vae_point_loss(Tape& t, const VarMap& vars, ValueId point,
                            ValueId noise);

/// Trains the encoder/decoder on a shard's reshaped points by minimizing
/// reconstruction MSE plus KL against the standard-normal prior (Adam).
/// Deterministic per seed; returns the frozen parameters. When given,
/// `epoch_losses` receives the mean per-point loss of every epoch.
Params vae_pretrain(const std::vector<Tensor>& points, const VaeConfig& cfg,
                    std::uint64_t seed,
                    std::vector<double>* epoch_losses = nullptr);

/// Posterior mean for one point; deterministic (no sampling), which keeps
/// downstream relevance scores reproducible.
Vector encode_latent(const Tensor& point, const Params& phi);

/// Arithmetic mean of the per-point latents of a shard.
Vector local_distribution(const std::vector<Tensor>& points, const Params& phi);

/// Closed-form KL of N(mu, diag(exp(logvar))) against N(0, I):
/// -1/2 sum(1 + logvar - mu^2 - exp(logvar)).
double kl_standard_normal(const Vector& mu, const Vector& logvar);

// --- global distribution estimator g_theta ---------------------------------

/// Two-layer dense net (sigmoid hidden, linear output) mapping latent to
/// latent.
Params estimator_init(Index latent, Index hidden, Rng& rng);

Vector estimate_global(const Vector& d, const Params& theta);

ValueId estimate_global_on_tape(Tape& t, const VarMap& vars, ValueId d);

/// Reshapes a T x N x D sequence into T row points of length N*D.
std::vector<Tensor> reshape_points(const RawSequence& seq);

/// All reshaped points of the given sequences, in shard order.
std::vector<Tensor> shard_points(const Dataset& ds,
                                 const std::vector<std::size_t>& shard);

}  // namespace fedrel
