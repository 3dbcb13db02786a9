#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedrel/diig.hpp"
#include "fedrel/synthdata.hpp"

namespace fedrel {

struct EvalMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_loss = 0.0;
};

/// Accuracy by argmax, macro-F1 (per-class F1 averaged unweighted, 0/0
/// defined as 0) and mean cross-entropy over a test set.
EvalMetrics evaluate(const ModelConfig& cfg, const Params& params,
                     const std::vector<TemporalWindow>& test_set);

/// Macro-F1 from a square confusion matrix (rows = true, cols = predicted).
double macro_f1_from_confusion(const Matrix& confusion);

/// One communication round of a run.
struct RoundMetrics {
  int round = 0;
  std::string mode;
  double global_loss = 0.0;
  double global_acc = 0.0;
  double global_macro_f1 = 0.0;
  std::vector<double> relevance;
  double wall_ms = 0.0;
};

/// True when the learning-relevant fields match bitwise (wall-clock time is
/// a measurement and is excluded).
bool semantically_equal(const RoundMetrics& a, const RoundMetrics& b);
bool semantically_equal(const std::vector<RoundMetrics>& a,
                        const std::vector<RoundMetrics>& b);

// Metrics stream: line-delimited JSON, schema "fedrel-metrics-v1". The first
// line is a header object embedding the full resolved config and seed; each
// following line is one round record with fields round, mode, global_loss,
// global_acc, global_macro_f1, relevance, wall_ms. Append-only.
class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, const nlohmann::json& header);
  void append(const RoundMetrics& m);

 private:
  std::ofstream out_;
};

struct MetricsFile {
  nlohmann::json header;
  std::vector<RoundMetrics> rounds;
};

MetricsFile read_metrics(const std::string& path);

nlohmann::json round_to_json(const RoundMetrics& m);
RoundMetrics round_from_json(const nlohmann::json& j);

}  // namespace fedrel
