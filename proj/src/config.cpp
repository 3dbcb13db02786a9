#include "fedrel/config.hpp"

#include <fstream>
#include <set>

namespace fedrel {

namespace {

/// Wraps a JSON object and tracks key consumption so leftovers can be
/// rejected by name.
class StrictObject {
 public:
  StrictObject(const nlohmann::json& j, std::string context)
      : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) {
      throw ConfigError(context_ + ": expected an object");
    }
  }

  bool has(const std::string& key) {
    return j_.contains(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!j_.contains(key)) {
      throw ConfigError(context_ + ": missing required key '" + key + "'");
    }
    return get<T>(key);
  }

  template <typename T>
  T get_or(const std::string& key, T fallback) {
    if (!j_.contains(key)) return fallback;
    return get<T>(key);
  }

  const nlohmann::json& child(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() {
    for (const auto& [key, _] : j_.items()) {
      if (!used_.count(key)) {
        throw ConfigError(context_ + ": unknown key '" + key + "'");
      }
    }
  }

 private:
  template <typename T>
  T get(const std::string& key) {
    used_.insert(key);
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(context_ + ": key '" + key + "' has the wrong type");
    }
  }

  const nlohmann::json& j_;
  std::string context_;
  std::set<std::string> used_;
};

}  // namespace

std::string intra_mode_name(IntraMode mode) {
  switch (mode) {
    case IntraMode::kDynamic: return "dynamic";
    case IntraMode::kKnn: return "knn";
    case IntraMode::kPcc: return "pcc";
    case IntraMode::kPlv: return "plv";
  }
  return "?";
}

IntraMode intra_mode_from_string(const std::string& name) {
  if (name == "dynamic") return IntraMode::kDynamic;
  if (name == "knn") return IntraMode::kKnn;
  if (name == "pcc") return IntraMode::kPcc;
  if (name == "plv") return IntraMode::kPlv;
  throw ConfigError("unknown intra_mode '" + name + "'");
}

ExperimentConfig parse_config_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  StrictObject root(j, "config");
  cfg.seed = root.require<std::uint64_t>("seed");
  cfg.mode = mode_from_string(root.require<std::string>("mode"));
  cfg.out = root.get_or<std::string>("out", cfg.out);

  if (root.has("dataset")) {
    StrictObject d(root.child("dataset"), "config.dataset");
    cfg.dataset.source = d.get_or<std::string>("source", cfg.dataset.source);
    if (cfg.dataset.source != "generate" && cfg.dataset.source != "load") {
      throw ConfigError("config.dataset: source must be 'generate' or 'load'");
    }
    cfg.dataset.path = d.get_or<std::string>("path", cfg.dataset.path);
    if (cfg.dataset.source == "load" && cfg.dataset.path.empty()) {
      throw ConfigError("config.dataset: missing required key 'path'");
    }
    GeneratorConfig& g = cfg.dataset.gen;
    g.sequences = d.get_or<int>("sequences", g.sequences);
    g.time_steps = d.get_or<int>("time_steps", g.time_steps);
    g.channels = d.get_or<int>("channels", g.channels);
    g.raw_dim = d.get_or<int>("raw_dim", g.raw_dim);
    g.classes = d.get_or<int>("classes", g.classes);
    g.noise = d.get_or<double>("noise", g.noise);
    g.coupling = d.get_or<double>("coupling", g.coupling);
    g.ar = d.get_or<double>("ar", g.ar);
    cfg.dataset.gen_seed = d.get_or<std::uint64_t>("gen_seed", cfg.seed);
    d.finish();
  } else {
    cfg.dataset.gen_seed = cfg.seed;
  }

  if (root.has("model")) {
    StrictObject m(root.child("model"), "config.model");
    ModelConfig& mc = cfg.model;
    mc.feature_dim = m.get_or<int>("feature_dim", mc.feature_dim);
    mc.transform_hidden = m.get_or<int>("transform_hidden", mc.transform_hidden);
    mc.node_embed = m.get_or<int>("node_embed", mc.node_embed);
    mc.graph_embed = m.get_or<int>("graph_embed", mc.graph_embed);
    if (m.has("readout_hidden")) {
      auto hidden = m.require<std::vector<int>>("readout_hidden");
      if (hidden.size() != 2) {
        throw ConfigError("config.model: readout_hidden must have 2 entries");
      }
      mc.readout_hidden1 = hidden[0];
      mc.readout_hidden2 = hidden[1];
    }
    mc.layers = m.get_or<int>("layers", mc.layers);
    mc.window = m.get_or<int>("window", mc.window);
    mc.dropout = m.get_or<double>("dropout", mc.dropout);
    mc.ln_eps = m.get_or<double>("ln_eps", mc.ln_eps);
    mc.intra_mode = intra_mode_from_string(
        m.get_or<std::string>("intra_mode", intra_mode_name(mc.intra_mode)));
    mc.knn_k = m.get_or<int>("knn_k", mc.knn_k);
    m.finish();
  }

  if (root.has("fed")) {
    StrictObject f(root.child("fed"), "config.fed");
    FedConfig& fc = cfg.fed;
    fc.participants = f.get_or<int>("participants", fc.participants);
    fc.rounds = f.get_or<int>("rounds", fc.rounds);
    fc.local_epochs = f.get_or<int>("local_epochs", fc.local_epochs);
    fc.batch_size = f.get_or<int>("batch_size", fc.batch_size);
    fc.fedp_fraction = f.get_or<double>("fedp_fraction", fc.fedp_fraction);
    fc.fedatt_epsilon = f.get_or<double>("fedatt_epsilon", fc.fedatt_epsilon);
    fc.dirichlet_alpha = f.get_or<double>("dirichlet_alpha", fc.dirichlet_alpha);
    fc.train_fraction = f.get_or<double>("train_fraction", fc.train_fraction);
    fc.pretrain_epochs = f.get_or<int>("pretrain_epochs", fc.pretrain_epochs);
    fc.concurrent = f.get_or<bool>("concurrent", fc.concurrent);
    fc.adam.lr = f.get_or<double>("learning_rate", fc.adam.lr);
    if (f.has("vae")) {
      StrictObject v(f.child("vae"), "config.fed.vae");
      fc.vae.latent = v.get_or<int>("latent", fc.vae.latent);
      fc.vae.hidden = v.get_or<int>("hidden", fc.vae.hidden);
      fc.vae.epochs = v.get_or<int>("epochs", fc.vae.epochs);
      fc.vae.batch_size = v.get_or<int>("batch_size", fc.vae.batch_size);
      fc.vae.lr = v.get_or<double>("learning_rate", fc.vae.lr);
      v.finish();
    }
    f.finish();
  }

  root.finish();
  cfg.fed.seed = cfg.seed;
  cfg.fed.mode = cfg.mode;
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) {
    throw ConfigError("config file '" + path + "' is not valid JSON");
  }
  return parse_config_json(j);
}

nlohmann::json serialize_config(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["mode"] = mode_name(cfg.mode);
  j["out"] = cfg.out;
  nlohmann::json d;
  d["source"] = cfg.dataset.source;
  if (!cfg.dataset.path.empty()) d["path"] = cfg.dataset.path;
  d["sequences"] = cfg.dataset.gen.sequences;
  d["time_steps"] = cfg.dataset.gen.time_steps;
  d["channels"] = cfg.dataset.gen.channels;
  d["raw_dim"] = cfg.dataset.gen.raw_dim;
  d["classes"] = cfg.dataset.gen.classes;
  d["noise"] = cfg.dataset.gen.noise;
  d["coupling"] = cfg.dataset.gen.coupling;
  d["ar"] = cfg.dataset.gen.ar;
  d["gen_seed"] = cfg.dataset.gen_seed;
  j["dataset"] = d;
  nlohmann::json m;
  m["feature_dim"] = cfg.model.feature_dim;
  m["transform_hidden"] = cfg.model.transform_hidden;
  m["node_embed"] = cfg.model.node_embed;
  m["graph_embed"] = cfg.model.graph_embed;
  m["readout_hidden"] = {cfg.model.readout_hidden1, cfg.model.readout_hidden2};
  m["layers"] = cfg.model.layers;
  m["window"] = cfg.model.window;
  m["dropout"] = cfg.model.dropout;
  m["ln_eps"] = cfg.model.ln_eps;
  m["intra_mode"] = intra_mode_name(cfg.model.intra_mode);
  m["knn_k"] = cfg.model.knn_k;
  j["model"] = m;
  nlohmann::json f;
  f["participants"] = cfg.fed.participants;
  f["rounds"] = cfg.fed.rounds;
  f["local_epochs"] = cfg.fed.local_epochs;
  f["batch_size"] = cfg.fed.batch_size;
  f["fedp_fraction"] = cfg.fed.fedp_fraction;
  f["fedatt_epsilon"] = cfg.fed.fedatt_epsilon;
  f["dirichlet_alpha"] = cfg.fed.dirichlet_alpha;
  f["train_fraction"] = cfg.fed.train_fraction;
  f["pretrain_epochs"] = cfg.fed.pretrain_epochs;
  f["concurrent"] = cfg.fed.concurrent;
  f["learning_rate"] = cfg.fed.adam.lr;
  f["vae"] = {{"latent", cfg.fed.vae.latent},
              {"hidden", cfg.fed.vae.hidden},
              {"epochs", cfg.fed.vae.epochs},
              {"batch_size", cfg.fed.vae.batch_size},
              {"learning_rate", cfg.fed.vae.lr}};
  j["fed"] = f;
  return j;
}

Dataset resolve_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.source == "load") {
    return load_dataset(cfg.dataset.path);
  }
  return generate(cfg.dataset.gen, cfg.dataset.gen_seed);
}

void resolve_config(ExperimentConfig& cfg, const Dataset& ds) {
  cfg.model.raw_dim = ds.raw_dim;
  cfg.model.num_classes = ds.num_classes;
  cfg.fed.seed = cfg.seed;
  cfg.fed.mode = cfg.mode;
  if (cfg.mode == Mode::kCentral) cfg.fed.participants = 1;
}

}  // namespace fedrel
