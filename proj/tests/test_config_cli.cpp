#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "wigraph/cli.hpp"
#include "wigraph/config.hpp"

using namespace wigraph;
namespace fs = std::filesystem;

namespace {

int run(std::vector<const char*> argv) {
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  REQUIRE(out.good());
  out << content;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("run config defaults") {
  RunConfig cfg = parse_run_config({});
  CHECK(cfg.model.embed_dim == 64);
  CHECK(cfg.model.hidden_dim == 64);
  CHECK(cfg.model.use_layer);
  CHECK_FALSE(cfg.model.freeze_embeddings);
  CHECK(cfg.model.layer.variant == Variant::A);
  CHECK(cfg.model.layer.aggregation == Aggregation::residual_mean);
  CHECK(cfg.model.encoder == EncoderKind::mean_pool_mlp);
  CHECK(cfg.model.gamma_init == InteractionGraph::Init::zeros);
  CHECK(cfg.train.beta_g == 1e-3);
  CHECK(cfg.train.beta_i == 0.0);
  CHECK(cfg.train.beta_sparse == 1e-2);
  CHECK(cfg.train.learning_rate == 1e-3);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.train.epochs == 10);
  CHECK(cfg.train.optimizer == Optimizer::adam);
  CHECK(cfg.train.prior_kind == PriorKind::bernoulli_const);
  CHECK(cfg.train.samples_per_example == 1);
  CHECK(cfg.train.seed == 1);
  CHECK(cfg.model.seed == 1);
  CHECK(cfg.max_vocab == 20000);
  CHECK(cfg.min_freq == 1);
}

TEST_CASE("every config key lands in its field") {
  std::map<std::string, std::string> kv = {
      {"embed_dim", "16"},
      {"hidden_dim", "24"},
      {"mask_hidden", "12"},
      {"max_len", "32"},
      {"encoder", "recurrent"},
      {"variant", "A_R"},
      {"aggregation", "sym_normalized"},
      {"use_layer", "false"},
      {"freeze_embeddings", "true"},
      {"gamma_init", "gaussian"},
      {"gamma_sigma", "0.25"},
      {"beta_g", "0.5"},
      {"beta_i", "0.125"},
      {"beta_sparse", "0.0625"},
      {"learning_rate", "0.005"},
      {"batch_size", "16"},
      {"epochs", "7"},
      {"temp_init", "2"},
      {"temp_decay", "0.5"},
      {"temp_floor", "0.25"},
      {"anneal_factor", "0.75"},
      {"optimizer", "sgd"},
      {"adam_beta1", "0.8"},
      {"adam_beta2", "0.99"},
      {"adam_eps", "1e-7"},
      {"grad_clip", "2.5"},
      {"prior", "cooccurrence"},
      {"prior_p0", "0.25"},
      {"prior_floor", "0.001"},
      {"samples_per_example", "3"},
      {"seed", "987654321987"},
      {"max_vocab", "5000"},
      {"min_freq", "2"},
  };
  RunConfig cfg = parse_run_config(kv);
  CHECK(cfg.model.embed_dim == 16);
  CHECK(cfg.model.hidden_dim == 24);
  CHECK(cfg.model.mask_hidden == 12);
  CHECK(cfg.model.max_len == 32);
  CHECK(cfg.model.encoder == EncoderKind::recurrent);
  CHECK(cfg.model.layer.variant == Variant::A_R);
  CHECK(cfg.model.layer.aggregation == Aggregation::sym_normalized);
  CHECK_FALSE(cfg.model.use_layer);
  CHECK(cfg.model.freeze_embeddings);
  CHECK(cfg.model.gamma_init == InteractionGraph::Init::gaussian);
  CHECK(cfg.model.gamma_sigma == 0.25);
  CHECK(cfg.train.beta_g == 0.5);
  CHECK(cfg.train.beta_i == 0.125);
  CHECK(cfg.train.beta_sparse == 0.0625);
  CHECK(cfg.train.learning_rate == 0.005);
  CHECK(cfg.train.batch_size == 16);
  CHECK(cfg.train.epochs == 7);
  CHECK(cfg.train.temp_init == 2.0);
  CHECK(cfg.train.temp_decay == 0.5);
  CHECK(cfg.train.temp_floor == 0.25);
  CHECK(cfg.train.anneal_factor == 0.75);
  CHECK(cfg.train.optimizer == Optimizer::sgd);
  CHECK(cfg.train.adam_beta1 == 0.8);
  CHECK(cfg.train.adam_beta2 == 0.99);
  CHECK(cfg.train.adam_eps == 1e-7);
  CHECK(cfg.train.grad_clip == 2.5);
  CHECK(cfg.train.prior_kind == PriorKind::cooccurrence);
  CHECK(cfg.train.prior_p0 == 0.25);
  CHECK(cfg.train.prior_floor == 0.001);
  CHECK(cfg.train.samples_per_example == 3);
  // The one seed key feeds both model init and training.
  CHECK(cfg.train.seed == 987654321987ULL);
  CHECK(cfg.model.seed == 987654321987ULL);
  CHECK(cfg.max_vocab == 5000);
  CHECK(cfg.min_freq == 2);

  // The JSON mirror carries every key back out.
  nlohmann::json j = run_config_to_json(cfg);
  for (const auto& [key, value] : kv) {
    CAPTURE(key);
    CHECK(j.contains(key));
  }
  CHECK(j["variant"] == "A_R");
  CHECK(j["epochs"] == 7);
  CHECK(j["seed"] == 987654321987ULL);
}

TEST_CASE("config rejects unknown keys and bad values") {
  CHECK_THROWS_WITH_AS(parse_run_config({{"embeddim", "16"}}),
                       doctest::Contains("unknown config key"),
                       std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"epochs", "three"}}), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"epochs", "3.5"}}), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"learning_rate", "fast"}}),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"use_layer", "maybe"}}),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"optimizer", "lbfgs"}}),
                  std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"variant", "B"}}), std::runtime_error);
  CHECK_THROWS_AS(parse_run_config({{"seed", "-1"}}), std::runtime_error);
}

TEST_CASE("config file parsing") {
  const std::string path = "/tmp/wigraph_test_run.cfg";

  SUBCASE("comments, blanks and whitespace are tolerated") {
    write_file(path,
               "# run settings\n"
               "\n"
               "  epochs = 4  \n"
               "seed=42\n"
               "\t# trailing comment line\n"
               "optimizer = sgd\n");
    RunConfig cfg = load_run_config(path);
    CHECK(cfg.train.epochs == 4);
    CHECK(cfg.train.seed == 42);
    CHECK(cfg.model.seed == 42);
    CHECK(cfg.train.optimizer == Optimizer::sgd);
  }

  SUBCASE("missing equals reports the line number") {
    write_file(path, "epochs = 4\nbatch_size\n");
    CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains(":2"),
                         std::runtime_error);
  }

  SUBCASE("empty keys and duplicates are errors") {
    write_file(path, "= 4\n");
    CHECK_THROWS_AS(load_run_config(path), std::runtime_error);
    write_file(path, "epochs = 4\nepochs = 5\n");
    CHECK_THROWS_WITH_AS(load_run_config(path), doctest::Contains("duplicate"),
                         std::runtime_error);
  }

  SUBCASE("missing file is an error") {
    CHECK_THROWS_AS(load_run_config("/no_such_file_zz.cfg"),
                    std::runtime_error);
  }

  fs::remove(path);
}

TEST_CASE("manifest timestamps and serialization") {
  const std::string stamp = utc_timestamp_now();
  CHECK(std::regex_match(
      stamp, std::regex(R"(\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z)")));

  RunManifest m;
  m.command = "train";
  m.config_path = "run.cfg";
  m.config = run_config_to_json(parse_run_config({}));
  m.args = {{"out", "/tmp/x"}};
  m.seed = 5;
  m.output_dir = "/tmp/x";
  m.started_at = stamp;
  const std::string dir = "/tmp/wigraph_test_manifest";
  fs::create_directories(dir);
  write_manifest(m, dir);
  auto j = nlohmann::json::parse(slurp(dir + "/manifest.json"));
  CHECK(j["command"] == "train");
  CHECK(j["seed"] == 5);
  CHECK(j["version"] == kVersion);
  CHECK(j["started_at"] == stamp);
  CHECK(j["finished_at"] == "");
  CHECK(j["config"]["epochs"] == 10);
  fs::remove_all(dir);
  CHECK_THROWS_AS(write_manifest(m, "/no_such_dir_zz"), std::runtime_error);
}

TEST_CASE("cli usage errors exit with status 2") {
  CHECK(run({"wigraph"}) == 2);
  CHECK(run({"wigraph", "frobnicate"}) == 2);
  CHECK(run({"wigraph", "train"}) == 2);  // missing required arguments
  CHECK(run({"wigraph", "train", "/no_such.cfg", "/tmp", "-o", "/tmp/x"}) == 2);
  CHECK(run({"wigraph", "eval", "/no_such.ckpt", "/tmp"}) == 2);
  CHECK(run({"wigraph", "synth", "-o", "/tmp/x"}) == 2);  // --spec required
  CHECK(run({"wigraph", "train", "--bogus-flag"}) == 2);
}

TEST_CASE("cli help and version exit cleanly") {
  CHECK(run({"wigraph", "--version"}) == 0);
  CHECK(run({"wigraph", "--help"}) == 0);
  CHECK(run({"wigraph", "train", "--help"}) == 0);
}

TEST_CASE("cli end to end on a tiny planted task") {
  const std::string dir = "/tmp/wigraph_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string spec = dir + "/spec.json";
  write_file(spec, R"({
    "V": 12, "L": 6, "rule": "pair_and", "pairs": [[2, 3], [4, 5]],
    "noise_rate": 0.0, "seed": 5, "n_train": 40, "n_dev": 12, "n_test": 12
  })");
  const std::string task = dir + "/task";
  fs::create_directories(task);

  REQUIRE(run({"wigraph", "synth", "--spec", spec.c_str(), "-o",
               task.c_str()}) == 0);
  CHECK(fs::exists(task + "/train.jsonl"));
  CHECK(fs::exists(task + "/dev.jsonl"));
  CHECK(fs::exists(task + "/test.jsonl"));
  CHECK(fs::exists(task + "/planted.json"));
  CHECK(fs::exists(task + "/manifest.json"));

  const std::string cfg = dir + "/run.cfg";
  write_file(cfg,
             "embed_dim = 8\n"
             "hidden_dim = 8\n"
             "epochs = 2\n"
             "batch_size = 8\n"
             "seed = 9\n");
  const std::string out1 = dir + "/run1";
  const std::string out2 = dir + "/run2";
  REQUIRE(run({"wigraph", "train", cfg.c_str(), task.c_str(), "-o",
               out1.c_str()}) == 0);
  CHECK(fs::exists(out1 + "/best.ckpt"));
  CHECK(fs::exists(out1 + "/history.csv"));
  CHECK(fs::exists(out1 + "/metrics/accuracy.csv"));
  auto manifest = nlohmann::json::parse(slurp(out1 + "/manifest.json"));
  CHECK(manifest["command"] == "train");
  CHECK(manifest["seed"] == 9);
  CHECK(manifest["config"]["epochs"] == 2);
  CHECK(manifest["finished_at"] != "");

  SUBCASE("retraining reproduces the artifacts byte for byte") {
    REQUIRE(run({"wigraph", "train", cfg.c_str(), task.c_str(), "-o",
                 out2.c_str()}) == 0);
    CHECK(slurp(out1 + "/best.ckpt") == slurp(out2 + "/best.ckpt"));
    CHECK(slurp(out1 + "/history.csv") == slurp(out2 + "/history.csv"));
    CHECK(slurp(out1 + "/metrics/accuracy.csv") ==
          slurp(out2 + "/metrics/accuracy.csv"));
  }

  const std::string ckpt = out1 + "/best.ckpt";

  SUBCASE("eval computes accuracy, aopc and ios") {
    const std::string ev = dir + "/eval_acc";
    REQUIRE(run({"wigraph", "eval", ckpt.c_str(), task.c_str(), "--metric",
                 "acc", "-o", ev.c_str()}) == 0);
    CHECK(fs::exists(ev + "/metrics/acc.csv"));

    const std::string ev2 = dir + "/eval_aopc";
    REQUIRE(run({"wigraph", "eval", ckpt.c_str(), task.c_str(), "--metric",
                 "aopc", "--method", "occlusion", "-K", "3", "--samples", "5",
                 "-o", ev2.c_str()}) == 0);
    const std::string aopc_csv = slurp(ev2 + "/metrics/aopc.csv");
    CHECK(aopc_csv.find("aopc,") != std::string::npos);

    const std::string ev3 = dir + "/eval_ios";
    REQUIRE(run({"wigraph", "eval", ckpt.c_str(), task.c_str(), "--metric",
                 "ios", "-k", "2", "--samples", "8", "-o", ev3.c_str()}) == 0);
    CHECK(fs::exists(ev3 + "/metrics/ios.csv"));

    // A direct .jsonl path works in place of the split directory.
    const std::string ev4 = dir + "/eval_file";
    const std::string test_file = task + "/test.jsonl";
    REQUIRE(run({"wigraph", "eval", ckpt.c_str(), test_file.c_str(),
                 "--metric", "acc", "-o", ev4.c_str()}) == 0);

    CHECK(run({"wigraph", "eval", ckpt.c_str(), task.c_str(), "--metric",
               "bogus", "-o", ev.c_str()}) == 2);
  }

  SUBCASE("explain writes parseable attribution lines") {
    const std::string attr = dir + "/attr.jsonl";
    REQUIRE(run({"wigraph", "explain", ckpt.c_str(), task.c_str(), "--method",
                 "occlusion", "--samples", "4", "-o", attr.c_str()}) == 0);
    std::ifstream in(attr);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line);
      CHECK(j["tokens"].size() == j["scores"].size());
      CHECK(j["method"] == "occlusion");
      ++rows;
    }
    CHECK(rows == 4);
  }

  SUBCASE("analyze exports interactions and correlation") {
    const std::string an = dir + "/analysis";
    fs::create_directories(an);
    const std::string tsv = an + "/interactions.tsv";
    REQUIRE(run({"wigraph", "analyze", ckpt.c_str(), "--export-interactions",
                 tsv.c_str(), "--top", "5", "--correlate", task.c_str(), "-o",
                 an.c_str()}) == 0);
    std::istringstream lines(slurp(tsv));
    std::string line;
    int rows = 0;
    while (std::getline(lines, line)) {
      CHECK(std::count(line.begin(), line.end(), '\t') == 2);
      ++rows;
    }
    CHECK(rows == 5);
    const std::string corr = slurp(an + "/metrics/correlation.csv");
    CHECK(corr.find("correlation,") != std::string::npos);
  }

  SUBCASE("runtime failures exit with status 1") {
    const std::string empty = dir + "/empty";
    fs::create_directories(empty);
    CHECK(run({"wigraph", "train", cfg.c_str(), empty.c_str(), "-o",
               (dir + "/run_bad").c_str()}) == 1);
    const std::string bad_spec = dir + "/bad_spec.json";
    write_file(bad_spec, R"({"V": 12, "L": 6})");  // pairs missing
    CHECK(run({"wigraph", "synth", "--spec", bad_spec.c_str(), "-o",
               (dir + "/task_bad").c_str()}) == 1);
  }

  SUBCASE("seed precedence: flag over environment over config") {
    const std::string t1 = dir + "/seed_cfg";
    fs::create_directories(t1);
    REQUIRE(run({"wigraph", "synth", "--spec", spec.c_str(), "-o",
                 t1.c_str()}) == 0);
    CHECK(nlohmann::json::parse(slurp(t1 + "/planted.json"))["seed"] == 5);

    setenv("WIGRAPH_SEED", "18", 1);
    const std::string t2 = dir + "/seed_env";
    fs::create_directories(t2);
    REQUIRE(run({"wigraph", "synth", "--spec", spec.c_str(), "-o",
                 t2.c_str()}) == 0);
    CHECK(nlohmann::json::parse(slurp(t2 + "/planted.json"))["seed"] == 18);

    const std::string t3 = dir + "/seed_flag";
    fs::create_directories(t3);
    REQUIRE(run({"wigraph", "synth", "--spec", spec.c_str(), "-o", t3.c_str(),
                 "--seed", "19"}) == 0);
    CHECK(nlohmann::json::parse(slurp(t3 + "/planted.json"))["seed"] == 19);

    const std::string t4 = dir + "/seed_bad";
    fs::create_directories(t4);
    for (const char* bad : {"not-a-number", "-1", "18z"}) {
      setenv("WIGRAPH_SEED", bad, 1);
      CHECK(run({"wigraph", "synth", "--spec", spec.c_str(), "-o",
                 t4.c_str()}) == 1);
    }
    unsetenv("WIGRAPH_SEED");
  }

  fs::remove_all(dir);
}
