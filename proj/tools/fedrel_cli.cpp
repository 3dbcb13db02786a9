// Command-line front end: dataset generation, training runs, gradient
// checking, checkpoint evaluation and side-by-side mode comparison.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedrel/config.hpp"
#include "fedrel/federation.hpp"
#include "fedrel/gradcheck.hpp"
#include "fedrel/metrics.hpp"

namespace {

using namespace fedrel;

struct TrainFlags {
  std::string config_path;
  std::string mode;
  std::string out;
  std::string data_path;
  std::string save_model;
  std::optional<int> participants;
  std::optional<int> window;
  std::optional<int> rounds;
  std::optional<std::uint64_t> seed;
  bool concurrent = false;
};

ExperimentConfig load_experiment(const TrainFlags& flags) {
  ExperimentConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = parse_config(flags.config_path);
  } else {
    cfg.seed = 1;
  }
  if (!flags.mode.empty()) cfg.mode = mode_from_string(flags.mode);
  if (!flags.out.empty()) cfg.out = flags.out;
  if (!flags.data_path.empty()) {
    cfg.dataset.source = "load";
    cfg.dataset.path = flags.data_path;
  }
  if (flags.participants) cfg.fed.participants = *flags.participants;
  if (flags.window) cfg.model.window = *flags.window;
  if (flags.rounds) cfg.fed.rounds = *flags.rounds;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.concurrent) cfg.fed.concurrent = true;
  return cfg;
}

int cmd_gen_data(const GeneratorConfig& gen, std::uint64_t seed,
                 const std::string& out) {
  Dataset ds = generate(gen, seed);
  save_dataset(ds, out);
  std::cout << "wrote " << ds.sequences.size() << " sequences (T="
            << ds.time_steps << ", N=" << ds.channels << ", D=" << ds.raw_dim
            << ", C=" << ds.num_classes << ") to " << out << "\n";
  return 0;
}

int cmd_train(const TrainFlags& flags) {
  ExperimentConfig cfg = load_experiment(flags);
  Dataset ds = resolve_dataset(cfg);
  resolve_config(cfg, ds);

  nlohmann::json header;
  header["config"] = serialize_config(cfg);
  header["seed"] = cfg.seed;
  MetricsWriter writer(cfg.out, header);

  RunResult result = run_experiment(cfg.fed, cfg.model, ds);
  double best_f1 = 0.0;
  int best_round = 0;
  for (const RoundMetrics& m : result.rounds) {
    writer.append(m);
    if (m.global_macro_f1 > best_f1) {
      best_f1 = m.global_macro_f1;
      best_round = m.round;
    }
  }
  if (!flags.save_model.empty()) {
    save_params(result.final_global, flags.save_model);
  }
  const RoundMetrics& last = result.rounds.back();
  std::cout << "mode=" << mode_name(cfg.fed.mode)
            << " rounds=" << result.rounds.size()
            << " final_loss=" << last.global_loss
            << " final_acc=" << last.global_acc
            << " final_f1=" << last.global_macro_f1 << " best_f1=" << best_f1
            << " (round " << best_round << ")\n";
  std::cout << "metrics: " << cfg.out << "\n";
  return 0;
}

int cmd_gradcheck(double step, double tolerance) {
  GradCheckReport report = run_gradient_suite(step);
  for (const auto& e : report.entries) {
    std::printf("%-32s max rel error %.3e\n", e.name.c_str(), e.max_rel_error);
  }
  std::printf("max relative error: %.3e (tolerance %.1e)\n", report.worst,
              tolerance);
  if (!report.passed(tolerance)) {
    std::cout << "gradient check FAILED\n";
    return 1;
  }
  std::cout << "gradient check passed\n";
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& data_path,
             int window, std::uint64_t seed) {
  Params params = load_params(model_path);
  Dataset ds = load_dataset(data_path);

  ModelConfig cfg;
  cfg.raw_dim = ds.raw_dim;
  cfg.num_classes = ds.num_classes;
  cfg.window = window;
  cfg.feature_dim = static_cast<int>(params.at("transform.l2.w").rows());
  cfg.transform_hidden = static_cast<int>(params.at("transform.l1.w").rows());
  cfg.node_embed = static_cast<int>(params.at("fuse.w").rows());
  cfg.graph_embed = static_cast<int>(params.at("readout.out.w").rows());
  cfg.readout_hidden1 = static_cast<int>(params.at("readout.l1.w").rows());
  cfg.readout_hidden2 = static_cast<int>(params.at("readout.l2.w").rows());
  cfg.layers = 0;
  while (params.count("intra.l" + std::to_string(cfg.layers + 1) + ".w")) {
    ++cfg.layers;
  }

  auto [train_idx, test_idx] = train_test_split(ds, 0.8, seed);
  std::vector<TemporalWindow> test_windows;
  for (std::size_t idx : test_idx) {
    const RawSequence& seq = ds.sequences[idx];
    Tensor features = apply_transform(cfg, params, seq.values);
    for (auto& w : make_windows(features, seq.label, cfg.window)) {
      test_windows.push_back(std::move(w));
    }
  }
  EvalMetrics em = evaluate(cfg, params, test_windows);
  std::cout << "test windows: " << test_windows.size()
            << "\naccuracy:  " << em.accuracy
            << "\nmacro_f1:  " << em.macro_f1
            << "\nmean_loss: " << em.mean_loss << "\n";
  return 0;
}

int cmd_compare(const TrainFlags& flags, std::vector<int> participant_counts,
                const std::string& csv_path) {
  if (participant_counts.empty()) participant_counts = {2, 3, 5};
  ExperimentConfig base = load_experiment(flags);
  Dataset ds = resolve_dataset(base);

  struct Row {
    int k;
    std::string mode;
    double best_f1;
    double best_acc;
    int best_round;
    double final_loss;
  };
  std::vector<Row> rows;
  const Mode modes[] = {Mode::kFedRel, Mode::kFedAvg, Mode::kFedP,
                        Mode::kFedAtt, Mode::kCentral};
  for (int k : participant_counts) {
    for (Mode mode : modes) {
      ExperimentConfig cfg = base;
      cfg.mode = mode;
      cfg.fed.participants = k;
      resolve_config(cfg, ds);
      RunResult result = run_experiment(cfg.fed, cfg.model, ds);
      Row row{k, mode_name(mode), 0.0, 0.0, 0, result.rounds.back().global_loss};
      for (const RoundMetrics& m : result.rounds) {
        if (m.global_macro_f1 > row.best_f1) {
          row.best_f1 = m.global_macro_f1;
          row.best_round = m.round;
        }
        row.best_acc = std::max(row.best_acc, m.global_acc);
      }
      rows.push_back(row);
      std::printf("K=%d %-8s best_f1=%.4f best_acc=%.4f best_round=%d\n", k,
                  row.mode.c_str(), row.best_f1, row.best_acc, row.best_round);
    }
  }

  std::printf("\n%-4s %-8s %10s %10s %10s %12s\n", "K", "mode", "best_f1",
              "best_acc", "best_rnd", "final_loss");
  for (const Row& r : rows) {
    std::printf("%-4d %-8s %10.4f %10.4f %10d %12.4f\n", r.k, r.mode.c_str(),
                r.best_f1, r.best_acc, r.best_round, r.final_loss);
  }
  if (!csv_path.empty()) {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open '" + csv_path + "'");
    csv << "participants,mode,best_f1,best_acc,best_round,final_loss\n";
    for (const Row& r : rows) {
      csv << r.k << "," << r.mode << "," << r.best_f1 << "," << r.best_acc
          << "," << r.best_round << "," << r.final_loss << "\n";
    }
    std::cout << "csv: " << csv_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated spatial-temporal graph learning simulator"};
  app.require_subcommand(1);

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset container");
  GeneratorConfig gen;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "dataset.frds";
  gen_cmd->add_option("--sequences", gen.sequences, "Number of sequences");
  gen_cmd->add_option("--time-steps", gen.time_steps, "Time steps per sequence");
  gen_cmd->add_option("--channels", gen.channels, "Channels (graph nodes)");
  gen_cmd->add_option("--raw-dim", gen.raw_dim, "Samples per channel per step");
  gen_cmd->add_option("--classes", gen.classes, "Class count");
  gen_cmd->add_option("--noise", gen.noise, "Noise level");
  gen_cmd->add_option("--coupling", gen.coupling, "Cross-channel coupling strength");
  gen_cmd->add_option("--seed", gen_seed, "Generator seed");
  gen_cmd->add_option("--out", gen_out, "Output container path");

  // shared train-ish flags
  TrainFlags flags;
  const auto add_run_flags = [&flags](CLI::App* cmd) {
    cmd->add_option("--config", flags.config_path, "Experiment config (JSON)");
    cmd->add_option("--mode", flags.mode,
                    "fedrel|fedavg|fedp|fedatt|central");
    cmd->add_option("--window", flags.window, "Time window w");
    cmd->add_option("--rounds", flags.rounds, "Communication rounds");
    cmd->add_option("--seed", flags.seed, "Experiment seed");
    cmd->add_option("--out", flags.out, "Metrics output path (JSONL)");
    cmd->add_option("--data", flags.data_path, "Dataset container to load");
    cmd->add_flag("--concurrent", flags.concurrent,
                  "Run participants on worker threads");
  };

  auto* train_cmd = app.add_subcommand("train", "Run one training experiment");
  add_run_flags(train_cmd);
  train_cmd->add_option("--participants", flags.participants,
                        "Participant count K");
  train_cmd->add_option("--save-model", flags.save_model,
                        "Write the final global model checkpoint here");

  auto* grad_cmd = app.add_subcommand("gradcheck",
                                      "Finite-difference gradient suite");
  double fd_step = 1e-5, fd_tol = 1e-4;
  grad_cmd->add_option("--step", fd_step, "Central-difference step");
  grad_cmd->add_option("--tolerance", fd_tol, "Maximum relative error");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_model, eval_data;
  int eval_window = 2;
  std::uint64_t eval_seed = 1;
  eval_cmd->add_option("--model", eval_model, "Checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset container")->required();
  eval_cmd->add_option("--window", eval_window, "Time window w");
  eval_cmd->add_option("--seed", eval_seed, "Split seed");

  auto* cmp_cmd = app.add_subcommand(
      "compare", "Run fedrel and every baseline side by side");
  add_run_flags(cmp_cmd);
  std::vector<int> cmp_participants;
  std::string cmp_csv;
  cmp_cmd->add_option("--participants", cmp_participants,
                      "Participant counts (repeatable; default 2 3 5)")
      ->take_all();
  cmp_cmd->add_option("--csv", cmp_csv, "Also write the summary as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, gen_seed, gen_out);
    if (train_cmd->parsed()) return cmd_train(flags);
    if (grad_cmd->parsed()) return cmd_gradcheck(fd_step, fd_tol);
    if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_data, eval_window, eval_seed);
    if (cmp_cmd->parsed()) return cmd_compare(flags, cmp_participants, cmp_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
