#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedrel/tensor.hpp"

namespace fedrel {

/// One labeled spatial-temporal sequence: T time steps of N channels carrying
/// D raw signal samples each.
struct RawSequence {
  Tensor values;  // rank-3, T x N x D
  int label = 0;
};

struct Dataset {
  std::vector<RawSequence> sequences;
  int num_classes = 0;
  int time_steps = 0;
  int channels = 0;
  int raw_dim = 0;
  std::uint64_t seed = 0;
};

struct GeneratorConfig {
  int sequences = 400;
  int time_steps = 12;
  int channels = 6;   // N
  int raw_dim = 8;    // D, samples per time step
  int classes = 4;    // C
  double noise = 0.25;
  double coupling = 0.6;  // cross-channel mixing strength; 0 = identity
  double ar = 0.85;       // autoregressive decay of the coupled component
};

/// Synthesizes labeled sequences. Per class: a distinct orthogonal coupling
/// matrix and a class-specific bank of per-channel sinusoids. Each channel
/// emits its sinusoid plus a VAR(1) component R(tau) = ar * M_c * R(tau-1) +
/// noise * e(tau) evolving at sample resolution, so windows of any length
/// carry class information. Deterministic per seed.
Dataset generate(const GeneratorConfig& cfg, std::uint64_t seed);

/// Ground-truth per-class coupling matrix the generator used; exposed so
/// tests can assert pairwise distinctness.
Matrix generator_coupling(const GeneratorConfig& cfg, std::uint64_t seed,
                          int label);

struct PartitionSpec {
  int participants = 3;  // K
  double alpha = 0.5;    // Dirichlet concentration; small = strong label skew
  std::uint64_t seed = 0;
};

/// Label-skew non-IID partition: each participant's class proportions are
/// drawn from Dirichlet(alpha); every pool item is dealt to exactly one
/// shard. Redraws until all shards are non-empty, erroring out if the pool
/// cannot support K non-empty shards.
std::vector<std::vector<std::size_t>> partition_noniid(
    const Dataset& ds, const std::vector<std::size_t>& pool,
    const PartitionSpec& spec);

std::vector<std::vector<std::size_t>> partition_noniid(const Dataset& ds,
                                                       const PartitionSpec& spec);

/// Random train/test split of sequence indices (train_fraction in (0,1)).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(
    const Dataset& ds, double train_fraction, std::uint64_t seed);

/// A stack of w+1 consecutive per-step feature matrices feeding one
/// classification. w = 0 is a single spatial graph.
struct TemporalWindow {
  Tensor features;  // rank-3, (w+1) x N x d
  int label = 0;
  int window = 0;   // w
};

/// Slides a length-(w+1) window over a T x N x d tensor with stride 1,
/// yielding T - w windows that all carry `label`.
std::vector<TemporalWindow> make_windows(const Tensor& features, int label,
                                         int window);

// Binary dataset container (little-endian): magic "FRDS1", u32 fields
// num_sequences, T, N, D, C, then per sequence a u32 label followed by
// T*N*D float64 values in row-major order. Round-trips bit-exactly.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace fedrel
