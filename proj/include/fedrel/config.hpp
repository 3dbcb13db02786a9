#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "fedrel/diig.hpp"
#include "fedrel/federation.hpp"
#include "fedrel/synthdata.hpp"

namespace fedrel {

/// Full experiment description. Parsing is strict: unknown keys, missing
/// required keys and type mismatches are all rejected by name. Defaults are
/// the shared hyperparameter setup (Adam at 1.5e-3, dropout 0.3, depth 2,
/// 150 rounds, batch 8, Xavier init).
struct ExperimentConfig {
  std::uint64_t seed = 0;  // required in files
  Mode mode = Mode::kFedRel;
  std::string out = "metrics.jsonl";

  struct DatasetSpec {
    std::string source = "generate";  // "generate" | "load"
    std::string path;                 // container path when source == "load"
    GeneratorConfig gen;
    std::uint64_t gen_seed = 0;       // defaults to the experiment seed
  } dataset;

  ModelConfig model;  // raw_dim / num_classes are resolved from the dataset
  FedConfig fed;
};

ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_json(const nlohmann::json& j);
nlohmann::json serialize_config(const ExperimentConfig& cfg);

/// Loads or generates the dataset named by the config.
Dataset resolve_dataset(const ExperimentConfig& cfg);

/// Copies dataset-determined fields (raw_dim, classes) into the model config
/// and mirrors seed/mode into the fed config.
void resolve_config(ExperimentConfig& cfg, const Dataset& ds);

std::string intra_mode_name(IntraMode mode);
IntraMode intra_mode_from_string(const std::string& name);

}  // namespace fedrel
