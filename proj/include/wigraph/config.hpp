#pragma once

#include <map>
#include <string>

#include "json.hpp"
#include "wigraph/model.hpp"
#include "wigraph/training.hpp"

namespace wigraph {

inline constexpr const char* kVersion = "wigraph 0.1.0";

// Everything a training run needs beyond the data itself.  Model dimensions
// that depend on the data (vocab_size, num_classes, and max_len when left at
// 0) are resolved after the data is loaded; the manifest records the resolved
// values.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int max_vocab = 20000;  // vocabulary cap when building from text
  int min_freq = 1;       // minimum word frequency kept in the vocabulary
};

// Run settings as flat `key=value` lines ('#' comments and blank lines
// allowed).  Every key is optional; unknown keys raise std::runtime_error so
// typos cannot silently fall back to defaults.  The single "seed" key feeds
// both model init and training.
RunConfig parse_run_config(const std::map<std::string, std::string>& kv);
RunConfig load_run_config(const std::string& path);

// Complete resolved settings, every field explicit.
nlohmann::json run_config_to_json(const RunConfig& cfg);

// Run provenance record.  Written to <dir>/manifest.json when a command
// starts (finished_at empty) and rewritten on success with the end time.
struct RunManifest {
  std::string command;
  std::string config_path;  // empty when the command takes no config file
  nlohmann::json config;    // resolved values
  nlohmann::json args;      // subcommand flags as given/resolved
  uint64_t seed = 0;
  std::string version = kVersion;
  std::string output_dir;
  std::string started_at, finished_at;  // UTC ISO-8601
};

std::string utc_timestamp_now();
void write_manifest(const RunManifest& m, const std::string& dir);

}  // namespace wigraph
