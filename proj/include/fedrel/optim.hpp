#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "fedrel/tape.hpp"
#include "fedrel/tensor.hpp"

namespace fedrel {

struct AdamConfig {
  double lr = 1.5e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-collection Adam state: first/second moments shaped like the
/// parameters and a strictly increasing step counter. Moments materialize
/// lazily as zeros on the first step.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(Params& params, const std::map<std::string, Tensor>& grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  const Params& first_moments() const { return m_; }
  const Params& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  Params m_;
  Params v_;
};

/// One Adam update with bias correction. Parameters without a gradient entry
/// are treated as zero-gradient (moments still decay).
void adam_step(Params& params, const std::map<std::string, Tensor>& grads,
               AdamState& state);

inline void adam_step(Params& params, const Gradients& grads, AdamState& state) {
  adam_step(params, grads.to_map(), state);
}

}  // namespace fedrel
