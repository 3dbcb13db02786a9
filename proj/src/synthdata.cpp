#include "fedrel/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "fedrel/rng.hpp"

namespace fedrel {

namespace {

constexpr std::uint64_t kCouplingStream = 0xC0;
constexpr std::uint64_t kSequenceStream = 0x5E;
constexpr std::uint64_t kPartitionStream = 0xA11;
constexpr std::uint64_t kSplitStream = 0x5114;

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

Matrix generator_coupling(const GeneratorConfig& cfg, std::uint64_t seed,
                          int label) {
  const int n = cfg.channels;
  Rng rng(derive_seed(seed, kCouplingStream, static_cast<std::uint64_t>(label)));
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return (1.0 - cfg.coupling) * Matrix::Identity(n, n) + cfg.coupling * q;
}

Dataset generate(const GeneratorConfig& cfg, std::uint64_t seed) {
  if (cfg.channels < 2 || cfg.classes < 2 || cfg.time_steps < 8 ||
      cfg.raw_dim < 1 || cfg.sequences < 1) {
    throw ShapeError("generate: invalid dims (need N >= 2, C >= 2, T >= 8)");
  }
  const int n = cfg.channels, d = cfg.raw_dim, t_steps = cfg.time_steps;
  const double base_freq = kTwoPi / 16.0;

  std::vector<Matrix> coupling(static_cast<std::size_t>(cfg.classes));
  for (int c = 0; c < cfg.classes; ++c) {
    coupling[static_cast<std::size_t>(c)] = generator_coupling(cfg, seed, c);
  }

  Dataset ds;
  ds.num_classes = cfg.classes;
  ds.time_steps = t_steps;
  ds.channels = n;
  ds.raw_dim = d;
  ds.seed = seed;
  ds.sequences.reserve(static_cast<std::size_t>(cfg.sequences));

  for (int i = 0; i < cfg.sequences; ++i) {
    const int label = i % cfg.classes;
    const Matrix& m = coupling[static_cast<std::size_t>(label)];
    Rng rng(derive_seed(seed, kSequenceStream, static_cast<std::uint64_t>(i)));
    const double phase0 = rng.uniform(0.0, kTwoPi);

    Vector omega(n), psi(n);
    for (int ch = 0; ch < n; ++ch) {
      omega(ch) = base_freq * (1.0 + 0.45 * label + 0.08 * ch);
      psi(ch) = kTwoPi * static_cast<double>(label * ch) /
                static_cast<double>(cfg.classes * n);
    }

    Matrix flat(t_steps * n, d);
    Vector state = Vector::Zero(n);
    for (int t = 0; t < t_steps; ++t) {
      for (int j = 0; j < d; ++j) {
        Vector eps(n);
        for (int ch = 0; ch < n; ++ch) eps(ch) = rng.gaussian();
        state = cfg.ar * (m * state) + cfg.noise * eps;
        const double tau = static_cast<double>(t * d + j);
        for (int ch = 0; ch < n; ++ch) {
          flat(t * n + ch, j) =
              std::sin(omega(ch) * tau + phase0 + psi(ch)) + state(ch);
        }
      }
    }
    ds.sequences.push_back({Tensor(t_steps, n, d, std::move(flat)), label});
  }
  return ds;
}

std::vector<std::vector<std::size_t>> partition_noniid(
    const Dataset& ds, const std::vector<std::size_t>& pool,
    const PartitionSpec& spec) {
  const int k = spec.participants;
  if (k < 1) throw ShapeError("partition: participants must be >= 1");
  if (!(spec.alpha > 0.0)) throw NumericError("partition: alpha must be positive");
  if (static_cast<std::size_t>(k) > pool.size()) {
    throw ShapeError("partition: impossible non-empty split (K=" +
                     std::to_string(k) + " > pool size " +
                     std::to_string(pool.size()) + ")");
  }
  if (k == 1) return {pool};

  const int classes = ds.num_classes;
  std::vector<std::vector<std::size_t>> by_class(
      static_cast<std::size_t>(classes));
  for (std::size_t idx : pool) {
    by_class.at(static_cast<std::size_t>(ds.sequences.at(idx).label))
        .push_back(idx);
  }

  Rng rng(derive_seed(spec.seed, kPartitionStream, 0));
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    // Per-participant class proportions.
    std::vector<std::vector<double>> prop(static_cast<std::size_t>(k));
    for (auto& p : prop) {
      p = rng.dirichlet(spec.alpha, static_cast<std::size_t>(classes));
    }

    std::vector<std::vector<std::size_t>> shards(static_cast<std::size_t>(k));
    for (int c = 0; c < classes; ++c) {
      std::vector<std::size_t> items = by_class[static_cast<std::size_t>(c)];
      if (items.empty()) continue;
      rng.shuffle(items);
      // Deal this class's items at the cumulative proportion boundaries.
      double total = 0.0;
      for (int p = 0; p < k; ++p) {
        total += prop[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)];
      }
      double cum = 0.0;
      std::size_t start = 0;
      for (int p = 0; p < k; ++p) {
        cum += prop[static_cast<std::size_t>(p)][static_cast<std::size_t>(c)] / total;
        const std::size_t end =
            (p == k - 1)
                ? items.size()
                : std::min(items.size(),
                           static_cast<std::size_t>(std::llround(
                               cum * static_cast<double>(items.size()))));
        for (std::size_t i = start; i < end; ++i) {
          shards[static_cast<std::size_t>(p)].push_back(items[i]);
        }
        start = std::max(start, end);
      }
    }

    const bool all_nonempty =
        std::all_of(shards.begin(), shards.end(),
                    [](const auto& s) { return !s.empty(); });
    if (all_nonempty) {
      for (auto& s : shards) std::sort(s.begin(), s.end());
      return shards;
    }
  }
  throw Error("partition: impossible non-empty split after " +
              std::to_string(kMaxAttempts) + " attempts");
}

std::vector<std::vector<std::size_t>> partition_noniid(const Dataset& ds,
                                                       const PartitionSpec& spec) {
  std::vector<std::size_t> pool(ds.sequences.size());
  std::iota(pool.begin(), pool.end(), 0);
  return partition_noniid(ds, pool, spec);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> train_test_split(
    const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw NumericError("train_test_split: fraction must be in (0,1)");
  }
  std::vector<std::size_t> idx(ds.sequences.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, kSplitStream, 0));
  rng.shuffle(idx);
  const auto cut = static_cast<std::size_t>(
      std::llround(train_fraction * static_cast<double>(idx.size())));
  std::vector<std::size_t> train(idx.begin(),
                                 idx.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<std::size_t> test(idx.begin() + static_cast<std::ptrdiff_t>(cut),
                                idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::vector<TemporalWindow> make_windows(const Tensor& features, int label,
                                         int window) {
  if (features.rank() != 3) throw ShapeError("make_windows: expected rank-3 input");
  const Index t_steps = features.dim(0);
  const Index n = features.dim(1);
  const Index d = features.dim(2);
  if (window < 0 || window >= t_steps) {
    throw ShapeError("make_windows: window " + std::to_string(window) +
                     " must satisfy 0 <= w < T=" + std::to_string(t_steps));
  }
  std::vector<TemporalWindow> out;
  out.reserve(static_cast<std::size_t>(t_steps - window));
  for (Index t0 = 0; t0 + window < t_steps; ++t0) {
    Matrix block = features.mat().middleRows(t0 * n, (window + 1) * n);
    out.push_back({Tensor(window + 1, n, d, std::move(block)), label, window});
  }
  return out;
}

namespace {

constexpr char kMagic[5] = {'F', 'R', 'D', 'S', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
      static_cast<std::uint32_t>(b[2]) << 16 |
      static_cast<std::uint32_t>(b[3]) << 24;
  return true;
}

bool get_f64(std::istream& is, double& v) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) return false;
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::memcpy(&v, &u, 8);
  return true;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, static_cast<std::uint32_t>(ds.sequences.size()));
  put_u32(os, static_cast<std::uint32_t>(ds.time_steps));
  put_u32(os, static_cast<std::uint32_t>(ds.channels));
  put_u32(os, static_cast<std::uint32_t>(ds.raw_dim));
  put_u32(os, static_cast<std::uint32_t>(ds.num_classes));
  for (const auto& seq : ds.sequences) {
    if (seq.values.rank() != 3 || seq.values.dim(0) != ds.time_steps ||
        seq.values.dim(1) != ds.channels || seq.values.dim(2) != ds.raw_dim) {
      throw IoError("dimension mismatch: sequence shape " +
                    shape_string(seq.values.shape()) +
                    " disagrees with dataset header");
    }
    put_u32(os, static_cast<std::uint32_t>(seq.label));
    const double* p = seq.values.data();
    for (Index i = 0; i < seq.values.size(); ++i) put_f64(os, p[i]);
  }
  if (!os) throw IoError("write failed for '" + path + "'");
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  char magic[5];
  if (!is.read(magic, 5) || std::memcmp(magic, kMagic, 5) != 0) {
    throw IoError("malformed header in '" + path + "'");
  }
  std::uint32_t count, t_steps, n, d, c;
  if (!get_u32(is, count) || !get_u32(is, t_steps) || !get_u32(is, n) ||
      !get_u32(is, d) || !get_u32(is, c)) {
    throw IoError("malformed header in '" + path + "'");
  }
  if (t_steps == 0 || n == 0 || d == 0 || c == 0) {
    throw IoError("dimension mismatch: zero-sized header field in '" + path +
                  "'");
  }

  Dataset ds;
  ds.num_classes = static_cast<int>(c);
  ds.time_steps = static_cast<int>(t_steps);
  ds.channels = static_cast<int>(n);
  ds.raw_dim = static_cast<int>(d);
  ds.sequences.reserve(count);
  for (std::uint32_t s = 0; s < count; ++s) {
    std::uint32_t label;
    if (!get_u32(is, label)) throw IoError("truncated payload in '" + path + "'");
    if (label >= c) {
      throw IoError("dimension mismatch: label " + std::to_string(label) +
                    " >= C=" + std::to_string(c));
    }
    Matrix flat(static_cast<Index>(t_steps) * n, d);
    double* p = flat.data();
    for (Index i = 0; i < flat.size(); ++i) {
      if (!get_f64(is, p[i])) throw IoError("truncated payload in '" + path + "'");
    }
    ds.sequences.push_back(
        {Tensor(t_steps, n, d, std::move(flat)), static_cast<int>(label)});
  }
  // Anything left over means the header under-declared the payload.
  char extra;
  if (is.read(&extra, 1)) {
    throw IoError("dimension mismatch: trailing bytes beyond declared payload");
  }
  return ds;
}

}  // namespace fedrel
