#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <vector>

#include "fedrel/synthdata.hpp"

namespace fedrel {
namespace {

GeneratorConfig small_config() {
  GeneratorConfig cfg;
  cfg.sequences = 24;
  cfg.time_steps = 8;
  cfg.channels = 4;
  cfg.raw_dim = 6;
  cfg.classes = 3;
  return cfg;
}

std::vector<double> channel_series(const RawSequence& seq, int channel) {
  std::vector<double> out;
  const Index t_steps = seq.values.dim(0);
  const Index d = seq.values.dim(2);
  for (Index t = 0; t < t_steps; ++t) {
    for (Index j = 0; j < d; ++j) {
      out.push_back(seq.values.slab(t)(channel, j));
    }
  }
  return out;
}

TEST(Generate, NoiselessIdentityCouplingIsPureSinusoid) {
  GeneratorConfig cfg = small_config();
  cfg.noise = 0.0;
  cfg.coupling = 0.0;
  Dataset ds = generate(cfg, 99);
  // A pure sinusoid satisfies s[t+1] + s[t-1] = 2 cos(w) s[t] exactly.
  for (const auto& seq : ds.sequences) {
    for (int ch = 0; ch < cfg.channels; ++ch) {
      auto s = channel_series(seq, ch);
      double c2 = 0.0;
      bool found = false;
      for (std::size_t t = 1; t + 1 < s.size(); ++t) {
        if (std::abs(s[t]) > 0.2) {
          c2 = (s[t + 1] + s[t - 1]) / s[t];
          found = true;
          break;
        }
      }
      ASSERT_TRUE(found);
      for (std::size_t t = 1; t + 1 < s.size(); ++t) {
        EXPECT_NEAR(s[t + 1] + s[t - 1], c2 * s[t], 1e-9);
      }
    }
  }
}

TEST(Generate, DeterministicPerSeed) {
  Dataset a = generate(small_config(), 7);
  Dataset b = generate(small_config(), 7);
  ASSERT_EQ(a.sequences.size(), b.sequences.size());
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    EXPECT_EQ(a.sequences[i].label, b.sequences[i].label);
    EXPECT_TRUE(a.sequences[i].values.bitwise_equal(b.sequences[i].values));
  }
  Dataset c = generate(small_config(), 8);
  EXPECT_FALSE(a.sequences[0].values.bitwise_equal(c.sequences[0].values));
}

TEST(Generate, CouplingMatricesPairwiseDistinct) {
  GeneratorConfig cfg = small_config();
  for (int a = 0; a < cfg.classes; ++a) {
    for (int b = a + 1; b < cfg.classes; ++b) {
      Matrix ma = generator_coupling(cfg, 5, a);
      Matrix mb = generator_coupling(cfg, 5, b);
      EXPECT_GT((ma - mb).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Generate, InvalidDimsRejected) {
  GeneratorConfig cfg = small_config();
  cfg.channels = 1;
  EXPECT_THROW(generate(cfg, 1), ShapeError);
  cfg = small_config();
  cfg.classes = 1;
  EXPECT_THROW(generate(cfg, 1), ShapeError);
  cfg = small_config();
  cfg.time_steps = 4;
  EXPECT_THROW(generate(cfg, 1), ShapeError);
}

// --- partition ----------------------------------------------------------

TEST(Partition, NearIidLimitMatchesGlobalHistogram) {
  GeneratorConfig cfg = small_config();
  cfg.sequences = 120;
  Dataset ds = generate(cfg, 3);
  std::vector<double> global(static_cast<std::size_t>(cfg.classes), 0.0);
  for (const auto& s : ds.sequences) {
    global[static_cast<std::size_t>(s.label)] += 1.0;
  }
  for (auto& g : global) g /= static_cast<double>(ds.sequences.size());

  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    PartitionSpec spec{3, 1e6, seed};
    auto shards = partition_noniid(ds, spec);
    for (const auto& shard : shards) {
      std::vector<double> hist(static_cast<std::size_t>(cfg.classes), 0.0);
      for (std::size_t idx : shard) {
        hist[static_cast<std::size_t>(ds.sequences[idx].label)] += 1.0;
      }
      double tv = 0.0;
      for (std::size_t c = 0; c < hist.size(); ++c) {
        tv += std::abs(hist[c] / static_cast<double>(shard.size()) - global[c]);
      }
      EXPECT_LT(0.5 * tv, 0.05);
    }
  }
}

TEST(Partition, SingleParticipantGetsFullPool) {
  Dataset ds = generate(small_config(), 3);
  auto shards = partition_noniid(ds, PartitionSpec{1, 0.5, 4});
  ASSERT_EQ(shards.size(), 1u);
  EXPECT_EQ(shards[0].size(), ds.sequences.size());
}

TEST(Partition, DisjointAndExhaustive) {
  Dataset ds = generate(small_config(), 3);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto shards = partition_noniid(ds, PartitionSpec{4, 0.5, seed});
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& shard : shards) {
      EXPECT_FALSE(shard.empty());
      total += shard.size();
      for (std::size_t idx : shard) {
        EXPECT_TRUE(seen.insert(idx).second) << "index assigned twice";
      }
    }
    EXPECT_EQ(total, ds.sequences.size());
  }
}

TEST(Partition, OverSubscriptionRejected) {
  GeneratorConfig cfg = small_config();
  cfg.sequences = 3;
  Dataset ds = generate(cfg, 3);
  EXPECT_THROW(partition_noniid(ds, PartitionSpec{5, 0.5, 0}), ShapeError);
}

// --- windows ------------------------------------------------------------

Tensor feature_tensor(Index t_steps, Index n, Index d) {
  Matrix flat(t_steps * n, d);
  for (Index i = 0; i < flat.rows(); ++i) {
    for (Index j = 0; j < d; ++j) {
      flat(i, j) = static_cast<double>(i * d + j);
    }
  }
  return Tensor(t_steps, n, d, std::move(flat));
}

TEST(Windows, ZeroWindowYieldsOnePerStep) {
  auto windows = make_windows(feature_tensor(5, 3, 2), 1, 0);
  ASSERT_EQ(windows.size(), 5u);
  for (const auto& w : windows) {
    EXPECT_EQ(w.features.dim(0), 1);
    EXPECT_EQ(w.label, 1);
  }
}

TEST(Windows, CountAndCoverage) {
  Tensor x = feature_tensor(5, 3, 2);
  auto windows = make_windows(x, 2, 2);
  ASSERT_EQ(windows.size(), 3u);
  // Window i covers steps (i .. i+2); spot-check values against the source.
  for (std::size_t i = 0; i < windows.size(); ++i) {
    for (Index k = 0; k < 3; ++k) {
      EXPECT_EQ(Matrix(windows[i].features.slab(k)),
                Matrix(x.slab(static_cast<Index>(i) + k)));
    }
  }
}

TEST(Windows, CountFormulaHolds) {
  for (Index t_steps : {3, 5, 9}) {
    Tensor x = feature_tensor(t_steps, 2, 2);
    for (int w = 0; w < t_steps; ++w) {
      EXPECT_EQ(make_windows(x, 0, w).size(),
                static_cast<std::size_t>(t_steps - w));
    }
  }
}

TEST(Windows, OversizedWindowRejected) {
  EXPECT_THROW(make_windows(feature_tensor(5, 3, 2), 0, 5), ShapeError);
  EXPECT_THROW(make_windows(feature_tensor(5, 3, 2), 0, -1), ShapeError);
}

// --- container ----------------------------------------------------------

class ContainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    path_ = ::testing::TempDir() + "synthdata_container_test.frds";
  }
  void TearDown() override { std::remove(path_.c_str()); }
  std::string path_;
};

TEST_F(ContainerTest, RoundTripIsBitwise) {
  Dataset ds = generate(small_config(), 21);
  save_dataset(ds, path_);
  Dataset back = load_dataset(path_);
  ASSERT_EQ(back.sequences.size(), ds.sequences.size());
  EXPECT_EQ(back.num_classes, ds.num_classes);
  EXPECT_EQ(back.time_steps, ds.time_steps);
  EXPECT_EQ(back.channels, ds.channels);
  EXPECT_EQ(back.raw_dim, ds.raw_dim);
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    EXPECT_EQ(back.sequences[i].label, ds.sequences[i].label);
    EXPECT_TRUE(back.sequences[i].values.bitwise_equal(ds.sequences[i].values));
  }
}

TEST_F(ContainerTest, TruncationDetected) {
  Dataset ds = generate(small_config(), 21);
  save_dataset(ds, path_);
  std::ifstream in(path_, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  in.close();
  bytes.resize(bytes.size() - 17);
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  out << bytes;
  out.close();
  try {
    load_dataset(path_);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
  }
}

TEST_F(ContainerTest, BadMagicDetected) {
  Dataset ds = generate(small_config(), 21);
  save_dataset(ds, path_);
  std::fstream f(path_, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(0);
  f.write("XXXXX", 5);
  f.close();
  try {
    load_dataset(path_);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("malformed header"), std::string::npos);
  }
}

TEST_F(ContainerTest, HeaderPayloadDisagreementDetected) {
  Dataset ds = generate(small_config(), 21);
  save_dataset(ds, path_);
  // Shrink the declared channel count; the payload is now too long.
  std::fstream f(path_, std::ios::binary | std::ios::in | std::ios::out);
  f.seekp(5 + 8);  // magic + num_sequences + time_steps
  const unsigned char smaller[4] = {2, 0, 0, 0};
  f.write(reinterpret_cast<const char*>(smaller), 4);
  f.close();
  try {
    load_dataset(path_);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("dimension mismatch"),
              std::string::npos);
  }
}

}  // namespace
}  // namespace fedrel
