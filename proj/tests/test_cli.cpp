#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include "fedrel/metrics.hpp"

namespace fedrel {
namespace {

std::string tmp(const std::string& name) { return ::testing::TempDir() + name; }

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(FEDREL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// Small experiment so CLI runs finish in seconds.
std::string write_small_config(const std::string& path, int rounds) {
  std::ofstream out(path, std::ios::trunc);
  out << R"({
  "seed": 7,
  "mode": "fedavg",
  "dataset": {"sequences": 24, "time_steps": 8, "channels": 4, "raw_dim": 6, "classes": 2},
  "model": {"feature_dim": 4, "transform_hidden": 5, "node_embed": 5,
            "graph_embed": 6, "readout_hidden": [4, 6], "window": 2},
  "fed": {"participants": 2, "rounds": )"
      << rounds << R"(, "pretrain_epochs": 1,
          "vae": {"latent": 3, "hidden": 5, "epochs": 2}}
})";
  return path;
}

TEST(Cli, TrainIsDeterministicAcrossInvocations) {
  const std::string cfg = write_small_config(tmp("cli_cfg.json"), 2);
  const std::string out_a = tmp("cli_metrics_a.jsonl");
  const std::string out_b = tmp("cli_metrics_b.jsonl");
  ASSERT_EQ(run_cli("train --config " + cfg + " --seed 7 --out " + out_a), 0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --seed 7 --out " + out_b), 0);
  MetricsFile a = read_metrics(out_a);
  MetricsFile b = read_metrics(out_b);
  nlohmann::json ca = a.header.at("config"), cb = b.header.at("config");
  ca.erase("out");
  cb.erase("out");
  EXPECT_EQ(ca, cb);
  EXPECT_TRUE(semantically_equal(a.rounds, b.rounds));
  std::remove(cfg.c_str());
  std::remove(out_a.c_str());
  std::remove(out_b.c_str());
}

TEST(Cli, FlagsOverrideConfig) {
  const std::string cfg = write_small_config(tmp("cli_cfg_override.json"), 2);
  const std::string out = tmp("cli_metrics_override.jsonl");
  ASSERT_EQ(run_cli("train --config " + cfg +
                    " --mode central --rounds 3 --seed 9 --out " + out),
            0);
  MetricsFile file = read_metrics(out);
  ASSERT_EQ(file.rounds.size(), 3u);
  EXPECT_EQ(file.rounds[0].mode, "central");
  EXPECT_EQ(file.header.at("config").at("seed"), 9);
  std::remove(cfg.c_str());
  std::remove(out.c_str());
}

TEST(Cli, GradcheckPasses) {
  EXPECT_EQ(run_cli("gradcheck"), 0);
}

TEST(Cli, GenTrainEvalPipeline) {
  const std::string data = tmp("cli_data.frds");
  const std::string cfg = write_small_config(tmp("cli_cfg_pipe.json"), 2);
  const std::string out = tmp("cli_metrics_pipe.jsonl");
  const std::string model = tmp("cli_model.frpc");
  ASSERT_EQ(run_cli("gen-data --sequences 24 --time-steps 8 --channels 4 "
                    "--raw-dim 6 --classes 2 --seed 5 --out " + data),
            0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --data " + data + " --out " +
                    out + " --save-model " + model),
            0);
  ASSERT_EQ(run_cli("eval --model " + model + " --data " + data +
                    " --window 2 --seed 7"),
            0);
  std::remove(data.c_str());
  std::remove(cfg.c_str());
  std::remove(out.c_str());
  std::remove(model.c_str());
}

TEST(Cli, CompareEmitsCsvForEachMode) {
  const std::string cfg = write_small_config(tmp("cli_cfg_cmp.json"), 2);
  const std::string csv = tmp("cli_compare.csv");
  ASSERT_EQ(run_cli("compare --config " + cfg +
                    " --participants 2 --rounds 2 --csv " + csv),
            0);
  std::ifstream in(csv);
  ASSERT_TRUE(in.good());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "participants,mode,best_f1,best_acc,best_round,final_loss");
  int rows = 0;
  bool saw_fedrel = false, saw_central = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++rows;
    if (line.find("fedrel") != std::string::npos) saw_fedrel = true;
    if (line.find("central") != std::string::npos) saw_central = true;
  }
  EXPECT_EQ(rows, 5);  // one row per mode at K = 2
  EXPECT_TRUE(saw_fedrel);
  EXPECT_TRUE(saw_central);
  std::remove(cfg.c_str());
  std::remove(csv.c_str());
}

TEST(Cli, UnknownModeFailsNonzero) {
  EXPECT_NE(run_cli("train --mode psychic --rounds 1"), 0);
}

TEST(Cli, MissingConfigFileFailsNonzero) {
  EXPECT_NE(run_cli("train --config /nonexistent/cfg.json"), 0);
}

}  // namespace
}  // namespace fedrel
