#include "wigraph/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wigraph/config.hpp"
#include "wigraph/corpus.hpp"
#include "wigraph/explain.hpp"
#include "wigraph/harness.hpp"
#include "wigraph/model.hpp"
#include "wigraph/training.hpp"

namespace wigraph {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// --seed beats WIGRAPH_SEED beats the config/default value.
uint64_t resolve_seed(uint64_t base, bool flag_given, uint64_t flag_value) {
  uint64_t seed = base;
  if (const char* env = std::getenv("WIGRAPH_SEED")) {
    const std::string text(env);
    try {
      size_t pos = 0;
      seed = std::stoull(text, &pos);
      // stoull accepts (and wraps) negative numbers and stops at trailing
      // garbage; both are configuration mistakes.
      if (pos != text.size() || text.find('-') != std::string::npos) {
        throw std::invalid_argument(text);
      }
    } catch (const std::exception&) {
      throw std::runtime_error("WIGRAPH_SEED is not an unsigned integer");
    }
  }
  if (flag_given) seed = flag_value;
  return seed;
}

// Data arguments accept either a split directory or a single .jsonl file.
std::string split_path(const std::string& data, const std::string& split) {
  if (fs::is_regular_file(data)) return data;
  return data + "/" + split + ".jsonl";
}

RunManifest start_manifest(const std::string& command, const std::string& dir,
                           uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.output_dir = dir;
  m.seed = seed;
  m.started_at = utc_timestamp_now();
  return m;
}

void finish_manifest(RunManifest& m) {
  m.finished_at = utc_timestamp_now();
  write_manifest(m, m.output_dir);
}

std::vector<TokenSequence> head_slice(const Dataset& data, int cap) {
  size_t n = data.samples.size();
  if (cap > 0) n = std::min(n, static_cast<size_t>(cap));
  return {data.samples.begin(), data.samples.begin() + static_cast<long>(n)};
}

struct TrainArgs {
  std::string config_path, data, out_dir;
  uint64_t seed = 0;
  bool seed_given = false;
};

void cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config_path);
  const uint64_t seed = resolve_seed(cfg.train.seed, a.seed_given, a.seed);
  cfg.train.seed = seed;
  cfg.model.seed = seed;

  const int width = cfg.model.max_len > 0 ? cfg.model.max_len : -1;
  auto [train_split, vocab] = load_dataset_building_vocab(
      split_path(a.data, "train"), cfg.max_vocab, cfg.min_freq, width);
  Dataset dev = load_dataset(split_path(a.data, "dev"), vocab,
                             train_split.max_len, train_split.num_classes);
  Dataset test = load_dataset(split_path(a.data, "test"), vocab,
                              train_split.max_len, train_split.num_classes);

  cfg.model.vocab_size = vocab.size();
  cfg.model.num_classes = train_split.num_classes;
  cfg.model.max_len = train_split.max_len;
  cfg.model.validate();
  cfg.train.validate();

  fs::create_directories(a.out_dir);
  fs::create_directories(a.out_dir + "/metrics");
  RunManifest m = start_manifest("train", a.out_dir, seed);
  m.config_path = a.config_path;
  m.config = run_config_to_json(cfg);
  m.args = {{"data", a.data}};
  write_manifest(m, a.out_dir);

  WiGraphModel model = init_model(cfg.model);
  model.vocab = vocab;
  SplitDataset data;
  data.train = std::move(train_split);
  data.dev = std::move(dev);
  data.test = std::move(test);

  TrainHistory history = train(model, data, cfg.train);
  write_history_csv(history, a.out_dir + "/history.csv");
  save_model(model, a.out_dir + "/best.ckpt");

  std::vector<MetricReport> reports;
  MetricReport dev_acc{"accuracy", history.best_dev_acc,
                       0.0, static_cast<int>(data.dev.samples.size()), seed};
  MetricReport test_acc{"test_accuracy", accuracy(model, data.test), 0.0,
                        static_cast<int>(data.test.samples.size()), seed};
  reports.push_back(dev_acc);
  reports.push_back(test_acc);
  write_metric_csv(reports, a.out_dir + "/metrics/accuracy.csv");

  if (history.diverged) {
    std::cout << "diverged: " << history.divergence_note << "\n";
  }
  std::cout << "best_epoch " << history.best_epoch << " dev_acc "
            << history.best_dev_acc << " test_acc " << test_acc.value << "\n";
  finish_manifest(m);
}

struct EvalArgs {
  std::string ckpt, data, metric = "acc", method = "occlusion";
  std::string split = "test", out_dir = ".";
  int K = 10, k = 5, samples = 500, jobs = 1;
  uint64_t seed = 1;
  bool seed_given = false;
  AttributionParams params;
};

AttributionParams fill_params(const AttributionParams& base,
                              const std::string& deletion) {
  AttributionParams p = base;
  p.deletion =
      deletion == "zero_embed" ? DeletionMode::zero_embed : DeletionMode::remove;
  return p;
}

void cmd_eval(const EvalArgs& a, const std::string& deletion) {
  const uint64_t seed = resolve_seed(a.seed, a.seed_given, a.seed);
  WiGraphModel model = load_model(a.ckpt);
  Dataset data = load_dataset(split_path(a.data, a.split), model.vocab,
                              model.cfg.max_len, model.cfg.num_classes);

  fs::create_directories(a.out_dir + "/metrics");
  RunManifest m = start_manifest("eval", a.out_dir, seed);
  m.args = {{"ckpt", a.ckpt},     {"data", a.data},       {"split", a.split},
            {"metric", a.metric}, {"method", a.method},   {"K", a.K},
            {"k", a.k},           {"samples", a.samples}, {"jobs", a.jobs}};
  write_manifest(m, a.out_dir);

  MetricReport r;
  if (a.metric == "acc") {
    r.metric = "accuracy";
    r.value = accuracy(model, data);
    r.n_samples = static_cast<int>(data.samples.size());
    r.seed = seed;
  } else if (a.metric == "aopc") {
    auto slice = head_slice(data, a.samples);
    r = aopc(model, slice, attribution_from_string(a.method), a.K,
             fill_params(a.params, deletion), seed, a.jobs);
  } else {
    auto slice = head_slice(data, a.samples);
    r = ios(model, slice, static_cast<size_t>(a.k));
    r.seed = seed;
  }
  write_metric_csv({r}, a.out_dir + "/metrics/" + a.metric + ".csv");
  std::cout << r.metric << " " << r.value << "\n";
  finish_manifest(m);
}

struct ExplainArgs {
  std::string ckpt, data, method = "occlusion", out_path;
  std::string split = "test";
  int samples = 500, jobs = 1;
  uint64_t seed = 1;
  bool seed_given = false;
  AttributionParams params;
};

void cmd_explain(const ExplainArgs& a, const std::string& deletion) {
  const uint64_t seed = resolve_seed(a.seed, a.seed_given, a.seed);
  WiGraphModel model = load_model(a.ckpt);
  Dataset data = load_dataset(split_path(a.data, a.split), model.vocab,
                              model.cfg.max_len, model.cfg.num_classes);
  auto slice = head_slice(data, a.samples);

  fs::path out(a.out_path);
  std::string dir = out.has_parent_path() ? out.parent_path().string() : ".";
  if (!dir.empty()) fs::create_directories(dir);
  RunManifest m = start_manifest("explain", dir, seed);
  m.args = {{"ckpt", a.ckpt},       {"data", a.data},
            {"split", a.split},     {"method", a.method},
            {"samples", a.samples}, {"jobs", a.jobs},
            {"out", a.out_path}};
  write_manifest(m, dir);

  auto results =
      attribute_all(model, slice, attribution_from_string(a.method),
                    fill_params(a.params, deletion), seed, a.jobs);
  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(slice.size());
  for (const auto& seq : slice) tokens.push_back(decode_ids(seq, model.vocab));
  write_attributions_jsonl(results, tokens, a.out_path);
  std::cout << "wrote " << results.size() << " attributions to " << a.out_path
            << "\n";
  finish_manifest(m);
}

struct AnalyzeArgs {
  std::string ckpt, export_tsv, correlate, out_dir = ".";
  int top = 100;
  uint64_t seed = 1;
  bool seed_given = false;
};

void cmd_analyze(const AnalyzeArgs& a) {
  const uint64_t seed = resolve_seed(a.seed, a.seed_given, a.seed);
  WiGraphModel model = load_model(a.ckpt);

  fs::create_directories(a.out_dir);
  RunManifest m = start_manifest("analyze", a.out_dir, seed);
  m.args = {{"ckpt", a.ckpt},
            {"export_interactions", a.export_tsv},
            {"top", a.top},
            {"correlate", a.correlate}};
  write_manifest(m, a.out_dir);

  if (!a.export_tsv.empty()) {
    export_interactions(model.graph, model.vocab,
                        static_cast<size_t>(a.top), a.export_tsv);
    std::cout << "wrote top-" << a.top << " interactions to " << a.export_tsv
              << "\n";
  }
  if (!a.correlate.empty()) {
    Dataset data = load_dataset(split_path(a.correlate, "train"), model.vocab);
    CooccurrenceMatrix cooc = build_cooccurrence(data, model.vocab.size());
    MetricReport r = interaction_correlation(model.graph, cooc);
    r.seed = seed;
    fs::create_directories(a.out_dir + "/metrics");
    write_metric_csv({r}, a.out_dir + "/metrics/correlation.csv");
    std::cout << "correlation " << r.value << "\n";
  }
  finish_manifest(m);
}

struct SynthArgs {
  std::string spec_path, out_dir;
  uint64_t seed = 0;
  bool seed_given = false;
};

void cmd_synth(const SynthArgs& a) {
  std::ifstream in(a.spec_path);
  if (!in) throw std::runtime_error("cannot open task spec: " + a.spec_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("task spec " + a.spec_path +
                             " is not valid JSON: " + e.what());
  }
  PlantedTaskSpec spec;
  int n_train = 1000, n_dev = 200, n_test = 200;
  std::string rule = "pair_and";
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "V") spec.V = it->get<int>();
    else if (key == "L") spec.L = it->get<int>();
    else if (key == "rule") rule = it->get<std::string>();
    else if (key == "pairs") {
      for (const auto& p : *it) {
        spec.pairs.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
      }
    } else if (key == "noise_rate") spec.noise_rate = it->get<double>();
    else if (key == "seed") spec.seed = it->get<uint64_t>();
    else if (key == "n_train") n_train = it->get<int>();
    else if (key == "n_dev") n_dev = it->get<int>();
    else if (key == "n_test") n_test = it->get<int>();
    else throw std::runtime_error("unknown task spec key \"" + key + "\"");
  }
  spec.rule = rule_from_string(rule);
  spec.seed = resolve_seed(spec.seed, a.seed_given, a.seed);

  fs::create_directories(a.out_dir);
  RunManifest m = start_manifest("synth", a.out_dir, spec.seed);
  m.config_path = a.spec_path;
  m.config = j;
  m.args = {{"n_train", n_train}, {"n_dev", n_dev}, {"n_test", n_test}};
  write_manifest(m, a.out_dir);

  PlantedData data = generate_planted_task(spec, n_train, n_dev, n_test);
  write_planted_task(data, a.out_dir);
  std::cout << "wrote planted task (" << n_train << "/" << n_dev << "/"
            << n_test << " samples) to " << a.out_dir << "\n";
  finish_manifest(m);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Word-interaction graph classifier: train, evaluate, explain."};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a data directory");
  train_cmd->add_option("config", ta.config_path, "run config (key=value lines)")
      ->required()->check(CLI::ExistingFile);
  train_cmd->add_option("data", ta.data, "directory with {train,dev,test}.jsonl")
      ->required()->check(CLI::ExistingPath);
  train_cmd->add_option("-o,--out", ta.out_dir, "output directory")->required();
  auto* ta_seed = train_cmd->add_option("--seed", ta.seed, "override the run seed");
  train_cmd->callback([&] {
    ta.seed_given = ta_seed->count() > 0;
    cmd_train(ta);
  });

  EvalArgs ea;
  std::string ea_deletion = "remove";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("ckpt", ea.ckpt, "model checkpoint")
      ->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("data", ea.data, "data directory or .jsonl file")
      ->required()->check(CLI::ExistingPath);
  eval_cmd->add_option("--metric", ea.metric, "metric to compute")
      ->check(CLI::IsMember({"acc", "aopc", "ios"}));
  eval_cmd->add_option("--method", ea.method, "attribution method for aopc")
      ->check(CLI::IsMember({"occlusion", "lime", "shapley"}));
  eval_cmd->add_option("-K,--deletions", ea.K, "AOPC deletion steps");
  eval_cmd->add_option("-k,--top-edges", ea.k, "IoS edge budget");
  eval_cmd->add_option("--split", ea.split, "data split")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  eval_cmd->add_option("--samples", ea.samples, "sample cap, 0 = all");
  eval_cmd->add_option("--jobs", ea.jobs, "worker threads");
  eval_cmd->add_option("-o,--out", ea.out_dir, "output directory");
  eval_cmd->add_option("--lime-samples", ea.params.n_samples, "LIME draws");
  eval_cmd->add_option("--kernel-width", ea.params.kernel_width, "LIME kernel width");
  eval_cmd->add_option("--ridge", ea.params.ridge, "LIME ridge strength");
  eval_cmd->add_option("--permutations", ea.params.n_permutations,
                       "Shapley permutations");
  eval_cmd->add_option("--deletion", ea_deletion, "token deletion semantics")
      ->check(CLI::IsMember({"remove", "zero_embed"}));
  auto* ea_seed = eval_cmd->add_option("--seed", ea.seed, "override the run seed");
  eval_cmd->callback([&] {
    ea.seed_given = ea_seed->count() > 0;
    cmd_eval(ea, ea_deletion);
  });

  ExplainArgs xa;
  std::string xa_deletion = "remove";
  auto* explain_cmd = app.add_subcommand("explain", "Write per-token attributions");
  explain_cmd->add_option("ckpt", xa.ckpt, "model checkpoint")
      ->required()->check(CLI::ExistingFile);
  explain_cmd->add_option("data", xa.data, "data directory or .jsonl file")
      ->required()->check(CLI::ExistingPath);
  explain_cmd->add_option("--method", xa.method, "attribution method")
      ->check(CLI::IsMember({"occlusion", "lime", "shapley"}));
  explain_cmd->add_option("-o,--out", xa.out_path, "output JSONL path")->required();
  explain_cmd->add_option("--split", xa.split, "data split")
      ->check(CLI::IsMember({"train", "dev", "test"}));
  explain_cmd->add_option("--samples", xa.samples, "sample cap, 0 = all");
  explain_cmd->add_option("--jobs", xa.jobs, "worker threads");
  explain_cmd->add_option("--lime-samples", xa.params.n_samples, "LIME draws");
  explain_cmd->add_option("--kernel-width", xa.params.kernel_width,
                          "LIME kernel width");
  explain_cmd->add_option("--ridge", xa.params.ridge, "LIME ridge strength");
  explain_cmd->add_option("--permutations", xa.params.n_permutations,
                          "Shapley permutations");
  explain_cmd->add_option("--deletion", xa_deletion, "token deletion semantics")
      ->check(CLI::IsMember({"remove", "zero_embed"}));
  auto* xa_seed = explain_cmd->add_option("--seed", xa.seed, "override the run seed");
  explain_cmd->callback([&] {
    xa.seed_given = xa_seed->count() > 0;
    cmd_explain(xa, xa_deletion);
  });

  AnalyzeArgs aa;
  auto* analyze_cmd = app.add_subcommand("analyze", "Inspect a learned graph");
  analyze_cmd->add_option("ckpt", aa.ckpt, "model checkpoint")
      ->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--export-interactions", aa.export_tsv,
                          "write top edges to this TSV");
  analyze_cmd->add_option("--top", aa.top, "number of edges to export");
  analyze_cmd->add_option("--correlate", aa.correlate,
                          "data directory or .jsonl for co-occurrence");
  analyze_cmd->add_option("-o,--out", aa.out_dir, "output directory");
  auto* aa_seed = analyze_cmd->add_option("--seed", aa.seed, "override the run seed");
  analyze_cmd->callback([&] {
    aa.seed_given = aa_seed->count() > 0;
    cmd_analyze(aa);
  });

  SynthArgs sa;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a planted-pair task");
  synth_cmd->add_option("--spec", sa.spec_path, "task spec JSON")
      ->required()->check(CLI::ExistingFile);
  synth_cmd->add_option("-o,--out", sa.out_dir, "output directory")->required();
  auto* sa_seed = synth_cmd->add_option("--seed", sa.seed, "override the task seed");
  synth_cmd->callback([&] {
    sa.seed_given = sa_seed->count() > 0;
    cmd_synth(sa);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace wigraph
