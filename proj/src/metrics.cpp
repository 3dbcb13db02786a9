#include "fedrel/metrics.hpp"

#include <cmath>

namespace fedrel {

EvalMetrics evaluate(const ModelConfig& cfg, const Params& params,
                     const std::vector<TemporalWindow>& test_set) {
  if (test_set.empty()) throw ShapeError("evaluate: empty test set");
  const int c = cfg.num_classes;
  Matrix confusion = Matrix::Zero(c, c);
  double loss = 0.0;
  // One tape for the whole sweep: parameters stay registered, each window's
  // subgraph is recorded and then truncated away.
  Tape t;
  ModelVars vars = register_params(t, params, false);
  const Index base = t.size();
  for (const TemporalWindow& w : test_set) {
    ValueId probs_id = window_logits(t, vars, cfg, w.features, {});
    const Matrix& probs = t.value(probs_id).mat();
    Index predicted;
    probs.row(0).maxCoeff(&predicted);
    confusion(w.label, predicted) += 1.0;
    loss += -std::log(std::max(probs(0, w.label), 1e-12));
    t.truncate(base);
  }
  EvalMetrics out;
  out.accuracy = confusion.trace() / static_cast<double>(test_set.size());
  out.macro_f1 = macro_f1_from_confusion(confusion);
  out.mean_loss = loss / static_cast<double>(test_set.size());
  return out;
}

double macro_f1_from_confusion(const Matrix& confusion) {
  if (confusion.rows() != confusion.cols()) {
    throw ShapeError("macro_f1: confusion matrix must be square");
  }
  const Index c = confusion.rows();
  double total = 0.0;
  for (Index k = 0; k < c; ++k) {
    const double tp = confusion(k, k);
    const double fp = confusion.col(k).sum() - tp;
    const double fn = confusion.row(k).sum() - tp;
    const double denom = 2.0 * tp + fp + fn;
    total += denom > 0.0 ? 2.0 * tp / denom : 0.0;
  }
  return total / static_cast<double>(c);
}

bool semantically_equal(const RoundMetrics& a, const RoundMetrics& b) {
  return a.round == b.round && a.global_loss == b.global_loss &&
         a.global_acc == b.global_acc &&
         a.global_macro_f1 == b.global_macro_f1 && a.relevance == b.relevance;
}

bool semantically_equal(const std::vector<RoundMetrics>& a,
                        const std::vector<RoundMetrics>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!semantically_equal(a[i], b[i])) return false;
  }
  return true;
}

MetricsWriter::MetricsWriter(const std::string& path,
                             const nlohmann::json& header) {
  out_.open(path, std::ios::trunc);
  if (!out_) throw IoError("cannot open metrics file '" + path + "'");
  nlohmann::json h = header;
  h["schema"] = "fedrel-metrics-v1";
  out_ << h.dump() << "\n";
  out_.flush();
}

void MetricsWriter::append(const RoundMetrics& m) {
  out_ << round_to_json(m).dump() << "\n";
  out_.flush();
  if (!out_) throw IoError("metrics write failed");
}

nlohmann::json round_to_json(const RoundMetrics& m) {
  return nlohmann::json{{"round", m.round},
                        {"mode", m.mode},
                        {"global_loss", m.global_loss},
                        {"global_acc", m.global_acc},
                        {"global_macro_f1", m.global_macro_f1},
                        {"relevance", m.relevance},
                        {"wall_ms", m.wall_ms}};
}

RoundMetrics round_from_json(const nlohmann::json& j) {
  RoundMetrics m;
  m.round = j.at("round").get<int>();
  m.mode = j.at("mode").get<std::string>();
  m.global_loss = j.at("global_loss").get<double>();
  m.global_acc = j.at("global_acc").get<double>();
  m.global_macro_f1 = j.at("global_macro_f1").get<double>();
  m.relevance = j.at("relevance").get<std::vector<double>>();
  m.wall_ms = j.at("wall_ms").get<double>();
  return m;
}

MetricsFile read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file '" + path + "'");
  MetricsFile out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw IoError("metrics file '" + path + "' is not valid JSONL");
    if (first) {
      if (!j.contains("schema") || j["schema"] != "fedrel-metrics-v1") {
        throw IoError("metrics file '" + path + "' has an unknown schema");
      }
      out.header = j;
      first = false;
    } else {
      out.rounds.push_back(round_from_json(j));
    }
  }
  if (first) throw IoError("metrics file '" + path + "' is empty");
  return out;
}

}  // namespace fedrel
