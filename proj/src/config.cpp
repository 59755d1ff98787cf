#include "wigraph/config.hpp"

#include <cstdlib>
#include <ctime>
#include <fstream>
#include <set>
#include <stdexcept>

namespace wigraph {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::runtime_error("config key \"" + key + "\" has a bad value \"" +
                           value + "\"");
}

// Typed readers over the key=value map, tracking which keys were consumed.
struct KvReader {
  const std::map<std::string, std::string>& kv;
  std::set<std::string> used;

  const std::string* find(const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    used.insert(key);
    return &it->second;
  }

  void get(const std::string& key, int& out) {
    if (const auto* v = find(key)) {
      try {
        size_t pos = 0;
        out = std::stoi(*v, &pos);
        if (pos != v->size()) bad_value(key, *v);
      } catch (const std::logic_error&) {
        bad_value(key, *v);
      }
    }
  }

  void get(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      try {
        size_t pos = 0;
        out = std::stod(*v, &pos);
        if (pos != v->size()) bad_value(key, *v);
      } catch (const std::logic_error&) {
        bad_value(key, *v);
      }
    }
  }

  void get(const std::string& key, uint64_t& out) {
    if (const auto* v = find(key)) {
      if (v->find('-') != std::string::npos) bad_value(key, *v);  // stoull wraps
      try {
        size_t pos = 0;
        out = std::stoull(*v, &pos);
        if (pos != v->size()) bad_value(key, *v);
      } catch (const std::logic_error&) {
        bad_value(key, *v);
      }
    }
  }

  void get(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (*v == "true" || *v == "1") out = true;
      else if (*v == "false" || *v == "0") out = false;
      else bad_value(key, *v);
    }
  }

  template <typename Enum>
  void get_enum(const std::string& key, Enum& out,
                Enum (*from_string)(const std::string&)) {
    if (const auto* v = find(key)) {
      try {
        out = from_string(*v);
      } catch (const std::invalid_argument&) {
        bad_value(key, *v);
      }
    }
  }
};

}  // namespace

RunConfig parse_run_config(const std::map<std::string, std::string>& kv) {
  RunConfig cfg;
  KvReader r{kv, {}};

  r.get("embed_dim", cfg.model.embed_dim);
  r.get("hidden_dim", cfg.model.hidden_dim);
  r.get("mask_hidden", cfg.model.mask_hidden);
  r.get("max_len", cfg.model.max_len);
  r.get_enum("encoder", cfg.model.encoder, encoder_from_string);
  r.get_enum("variant", cfg.model.layer.variant, variant_from_string);
  r.get_enum("aggregation", cfg.model.layer.aggregation, aggregation_from_string);
  r.get("use_layer", cfg.model.use_layer);
  r.get("freeze_embeddings", cfg.model.freeze_embeddings);
  r.get_enum("gamma_init", cfg.model.gamma_init, gamma_init_from_string);
  r.get("gamma_sigma", cfg.model.gamma_sigma);

  r.get("beta_g", cfg.train.beta_g);
  r.get("beta_i", cfg.train.beta_i);
  r.get("beta_sparse", cfg.train.beta_sparse);
  r.get("learning_rate", cfg.train.learning_rate);
  r.get("batch_size", cfg.train.batch_size);
  r.get("epochs", cfg.train.epochs);
  r.get("temp_init", cfg.train.temp_init);
  r.get("temp_decay", cfg.train.temp_decay);
  r.get("temp_floor", cfg.train.temp_floor);
  r.get("anneal_factor", cfg.train.anneal_factor);
  r.get_enum("optimizer", cfg.train.optimizer, optimizer_from_string);
  r.get("adam_beta1", cfg.train.adam_beta1);
  r.get("adam_beta2", cfg.train.adam_beta2);
  r.get("adam_eps", cfg.train.adam_eps);
  r.get("grad_clip", cfg.train.grad_clip);
  r.get_enum("prior", cfg.train.prior_kind, prior_from_string);
  r.get("prior_p0", cfg.train.prior_p0);
  r.get("prior_floor", cfg.train.prior_floor);
  r.get("samples_per_example", cfg.train.samples_per_example);

  uint64_t seed = cfg.train.seed;
  r.get("seed", seed);
  cfg.train.seed = seed;
  cfg.model.seed = seed;

  r.get("max_vocab", cfg.max_vocab);
  r.get("min_freq", cfg.min_freq);

  for (const auto& [key, value] : kv) {
    (void)value;
    if (!r.used.count(key)) {
      throw std::runtime_error("unknown config key \"" + key + "\"");
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty key");
    }
    if (kv.count(key)) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": duplicate key \"" + key + "\"");
    }
    kv[key] = trim(t.substr(eq + 1));
  }
  return parse_run_config(kv);
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["vocab_size"] = cfg.model.vocab_size;
  j["num_classes"] = cfg.model.num_classes;
  j["max_len"] = cfg.model.max_len;
  j["embed_dim"] = cfg.model.embed_dim;
  j["hidden_dim"] = cfg.model.hidden_dim;
  j["mask_hidden"] = cfg.model.mask_hidden;
  j["encoder"] = to_string(cfg.model.encoder);
  j["variant"] = to_string(cfg.model.layer.variant);
  j["aggregation"] = to_string(cfg.model.layer.aggregation);
  j["use_layer"] = cfg.model.use_layer;
  j["freeze_embeddings"] = cfg.model.freeze_embeddings;
  j["gamma_init"] = to_string(cfg.model.gamma_init);
  j["gamma_sigma"] = cfg.model.gamma_sigma;
  j["beta_g"] = cfg.train.beta_g;
  j["beta_i"] = cfg.train.beta_i;
  j["beta_sparse"] = cfg.train.beta_sparse;
  j["learning_rate"] = cfg.train.learning_rate;
  j["batch_size"] = cfg.train.batch_size;
  j["epochs"] = cfg.train.epochs;
  j["temp_init"] = cfg.train.temp_init;
  j["temp_decay"] = cfg.train.temp_decay;
  j["temp_floor"] = cfg.train.temp_floor;
  j["anneal_factor"] = cfg.train.anneal_factor;
  j["optimizer"] = to_string(cfg.train.optimizer);
  j["adam_beta1"] = cfg.train.adam_beta1;
  j["adam_beta2"] = cfg.train.adam_beta2;
  j["adam_eps"] = cfg.train.adam_eps;
  j["grad_clip"] = cfg.train.grad_clip;
  j["prior"] = to_string(cfg.train.prior_kind);
  j["prior_p0"] = cfg.train.prior_p0;
  j["prior_floor"] = cfg.train.prior_floor;
  j["samples_per_example"] = cfg.train.samples_per_example;
  j["seed"] = cfg.train.seed;
  j["max_vocab"] = cfg.max_vocab;
  j["min_freq"] = cfg.min_freq;
  return j;
}

std::string utc_timestamp_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& m, const std::string& dir) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config_path"] = m.config_path;
  j["config"] = m.config;
  j["args"] = m.args;
  j["seed"] = m.seed;
  j["version"] = m.version;
  j["output_dir"] = m.output_dir;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  const std::string path = dir + "/manifest.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing: " + path);
}

}  // namespace wigraph
