#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "wigraph/harness.hpp"

using namespace wigraph;

namespace {

PlantedTaskSpec small_spec() {
  PlantedTaskSpec spec;
  spec.V = 12;
  spec.L = 6;
  spec.pairs = {{2, 3}, {4, 5}};
  spec.seed = 17;
  return spec;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("planted rule names round-trip") {
  CHECK(rule_from_string("pair_and") == PlantedRule::pair_and);
  CHECK(rule_from_string("pair_xor") == PlantedRule::pair_xor);
  CHECK(std::string(to_string(PlantedRule::pair_and)) == "pair_and");
  CHECK(std::string(to_string(PlantedRule::pair_xor)) == "pair_xor");
  CHECK_THROWS_AS(rule_from_string("pair_or"), std::invalid_argument);
}

TEST_CASE("planted spec validation") {
  CHECK_NOTHROW(small_spec().validate());
  auto expect_bad = [](auto mutate) {
    PlantedTaskSpec spec;
    spec.V = 12;
    spec.L = 6;
    spec.pairs = {{2, 3}, {4, 5}};
    mutate(spec);
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  };
  expect_bad([](PlantedTaskSpec& s) { s.pairs.clear(); });
  expect_bad([](PlantedTaskSpec& s) { s.V = 7; });  // < 2*pairs + 4
  expect_bad([](PlantedTaskSpec& s) { s.L = 2; });
  expect_bad([](PlantedTaskSpec& s) { s.noise_rate = -0.1; });
  expect_bad([](PlantedTaskSpec& s) { s.noise_rate = 1.0; });
  expect_bad([](PlantedTaskSpec& s) { s.pairs[0] = {1, 3}; });   // special id
  expect_bad([](PlantedTaskSpec& s) { s.pairs[0] = {2, 12}; });  // out of range
  expect_bad([](PlantedTaskSpec& s) { s.pairs[0] = {4, 4}; });   // self pair
  expect_bad([](PlantedTaskSpec& s) { s.pairs[1] = {3, 2}; });   // duplicate
}

TEST_CASE("planted labels follow the rules with set semantics") {
  PlantedTaskSpec spec = small_spec();

  SUBCASE("pair_and fires when any pair is fully present") {
    CHECK(planted_label(spec, {2, 3, 9}) == 1);
    CHECK(planted_label(spec, {3, 2}) == 1);        // order irrelevant
    CHECK(planted_label(spec, {2, 2, 3}) == 1);     // duplicates irrelevant
    CHECK(planted_label(spec, {2, 3, 4, 5}) == 1);  // both pairs still 1
    CHECK(planted_label(spec, {2, 4}) == 0);        // halves of two pairs
    CHECK(planted_label(spec, {6, 7, 8}) == 0);
    CHECK(planted_label(spec, {2}) == 0);
    CHECK(planted_label(spec, {}) == 0);
  }

  SUBCASE("pair_xor counts fully present pairs mod 2") {
    spec.rule = PlantedRule::pair_xor;
    CHECK(planted_label(spec, {2, 3, 9}) == 1);
    CHECK(planted_label(spec, {2, 3, 4, 5}) == 0);  // two pairs cancel
    CHECK(planted_label(spec, {2, 3, 4, 5, 2}) == 0);
    CHECK(planted_label(spec, {4, 5}) == 1);
    CHECK(planted_label(spec, {2, 4}) == 0);
    CHECK(planted_label(spec, {}) == 0);
  }
}

TEST_CASE("planted generation: shape, balance, vocabulary and determinism") {
  PlantedTaskSpec spec = small_spec();
  PlantedData pd = generate_planted_task(spec, 40, 12, 16);

  SUBCASE("split sizes, width and classes") {
    CHECK(pd.data.train.samples.size() == 40);
    CHECK(pd.data.dev.samples.size() == 12);
    CHECK(pd.data.test.samples.size() == 16);
    for (const Dataset* ds : {&pd.data.train, &pd.data.dev, &pd.data.test}) {
      CHECK(ds->num_classes == 2);
      CHECK(ds->max_len == spec.L);
      for (const auto& s : ds->samples) {
        CHECK(static_cast<int>(s.ids.size()) == spec.L);
        CHECK(s.length >= 3);
        CHECK(s.length <= spec.L);
        for (int t = 0; t < s.length; ++t) {
          CHECK(s.ids[static_cast<size_t>(t)] >= 2);
          CHECK(s.ids[static_cast<size_t>(t)] < spec.V);
        }
        for (int t = s.length; t < spec.L; ++t) {
          CHECK(s.ids[static_cast<size_t>(t)] == 0);
        }
        CHECK((s.label == 0 || s.label == 1));
      }
    }
  }

  SUBCASE("clean labels are exactly balanced") {
    // noise_rate is 0, so the emitted labels are the clean labels.
    CHECK(pd.flipped_train.empty());
    for (const Dataset* ds : {&pd.data.train, &pd.data.dev, &pd.data.test}) {
      int ones = 0;
      for (const auto& s : ds->samples) ones += s.label;
      CHECK(ones == static_cast<int>(ds->samples.size()) / 2);
    }
  }

  SUBCASE("labels match the rule") {
    for (const auto& s : pd.data.train.samples) {
      std::vector<int> ids(s.ids.begin(), s.ids.begin() + s.length);
      CHECK(s.label == planted_label(spec, ids));
    }
  }

  SUBCASE("vocabulary is plain words at their own indices") {
    REQUIRE(pd.vocab.size() == spec.V);
    CHECK(pd.vocab.words[0] == "<pad>");
    CHECK(pd.vocab.words[1] == "<unk>");
    for (int i = 2; i < spec.V; ++i) {
      CHECK(pd.vocab.words[static_cast<size_t>(i)] == "w" + std::to_string(i));
    }
  }

  SUBCASE("regeneration is identical, another seed is not") {
    PlantedData again = generate_planted_task(spec, 40, 12, 16);
    REQUIRE(again.data.train.samples.size() == pd.data.train.samples.size());
    for (size_t i = 0; i < pd.data.train.samples.size(); ++i) {
      CHECK(again.data.train.samples[i].ids == pd.data.train.samples[i].ids);
      CHECK(again.data.train.samples[i].label == pd.data.train.samples[i].label);
    }
    PlantedTaskSpec other = spec;
    other.seed = 18;
    PlantedData changed = generate_planted_task(other, 40, 12, 16);
    bool differs = false;
    for (size_t i = 0; i < pd.data.train.samples.size() && !differs; ++i) {
      differs = changed.data.train.samples[i].ids != pd.data.train.samples[i].ids;
    }
    CHECK(differs);
  }

  SUBCASE("bad sizes throw") {
    CHECK_THROWS_AS(generate_planted_task(spec, 0, 12, 16),
                    std::invalid_argument);
    CHECK_THROWS_AS(generate_planted_task(spec, 40, 0, 16),
                    std::invalid_argument);
  }
}

TEST_CASE("label noise flips exactly the recorded indices") {
  PlantedTaskSpec spec = small_spec();
  spec.noise_rate = 0.25;
  spec.seed = 23;
  PlantedData pd = generate_planted_task(spec, 80, 20, 20);

  auto check_split = [&](const Dataset& ds, const std::vector<size_t>& flipped) {
    std::set<size_t> flip(flipped.begin(), flipped.end());
    CHECK(flip.size() == flipped.size());  // no duplicates
    for (size_t i = 0; i < ds.samples.size(); ++i) {
      const auto& s = ds.samples[i];
      std::vector<int> ids(s.ids.begin(), s.ids.begin() + s.length);
      const int clean = planted_label(spec, ids);
      if (flip.count(i)) {
        CHECK(s.label == 1 - clean);
      } else {
        CHECK(s.label == clean);
      }
    }
  };
  check_split(pd.data.train, pd.flipped_train);
  check_split(pd.data.dev, pd.flipped_dev);
  check_split(pd.data.test, pd.flipped_test);

  // At 25% noise over 80 samples, seeing zero flips would mean the noise
  // stream is dead (P < 1e-9).
  CHECK(!pd.flipped_train.empty());

  // The clean labels stay exactly balanced underneath the noise.
  int clean_ones = 0;
  for (const auto& s : pd.data.train.samples) {
    std::vector<int> ids(s.ids.begin(), s.ids.begin() + s.length);
    clean_ones += planted_label(spec, ids);
  }
  CHECK(clean_ones == 40);
}

TEST_CASE("pair_xor generation also balances and obeys the rule") {
  PlantedTaskSpec spec = small_spec();
  spec.rule = PlantedRule::pair_xor;
  PlantedData pd = generate_planted_task(spec, 30, 10, 10);
  int ones = 0;
  for (const auto& s : pd.data.train.samples) {
    std::vector<int> ids(s.ids.begin(), s.ids.begin() + s.length);
    CHECK(s.label == planted_label(spec, ids));
    ones += s.label;
  }
  CHECK(ones == 15);
}

TEST_CASE("written planted task round-trips") {
  PlantedTaskSpec spec = small_spec();
  spec.noise_rate = 0.1;
  PlantedData pd = generate_planted_task(spec, 20, 8, 8);

  const std::string dir = "/tmp/wigraph_test_planted";
  const std::string dir2 = "/tmp/wigraph_test_planted_b";
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
  std::filesystem::create_directories(dir);
  std::filesystem::create_directories(dir2);
  write_planted_task(pd, dir);
  write_planted_task(pd, dir2);

  SUBCASE("the JSONL encodes each sample's words and label") {
    std::ifstream in(dir + "/train.jsonl");
    std::string line;
    size_t i = 0;
    while (std::getline(in, line)) {
      auto j = nlohmann::json::parse(line);
      const auto& s = pd.data.train.samples[i];
      CHECK(j["label"] == s.label);
      const auto ids =
          encode_text(tokenize(j["text"].get<std::string>()), pd.vocab, spec.L);
      CHECK(ids.ids == s.ids);
      CHECK(ids.length == s.length);
      ++i;
    }
    CHECK(i == pd.data.train.samples.size());
  }

  SUBCASE("loading the JSONL with the planted vocabulary recovers the split") {
    Dataset loaded = load_dataset(dir + "/dev.jsonl", pd.vocab, spec.L, 2);
    REQUIRE(loaded.samples.size() == pd.data.dev.samples.size());
    for (size_t i = 0; i < loaded.samples.size(); ++i) {
      CHECK(loaded.samples[i].ids == pd.data.dev.samples[i].ids);
      CHECK(loaded.samples[i].label == pd.data.dev.samples[i].label);
    }
  }

  SUBCASE("the manifest records the task parameters") {
    auto j = nlohmann::json::parse(slurp(dir + "/planted.json"));
    CHECK(j["V"] == spec.V);
    CHECK(j["L"] == spec.L);
    CHECK(j["rule"] == "pair_and");
    CHECK(j["noise_rate"] == 0.1);
    CHECK(j["seed"] == 17);
    REQUIRE(j["pairs"].size() == 2);
    CHECK(j["pairs"][0][0] == 2);
    CHECK(j["pairs"][0][1] == 3);
    CHECK(j["pair_words"][0][0] == "w2");
    CHECK(j["pair_words"][1][1] == "w5");
    CHECK(j["flipped"]["train"].size() == pd.flipped_train.size());
    CHECK(j["flipped"]["dev"].size() == pd.flipped_dev.size());
    CHECK(j["flipped"]["test"].size() == pd.flipped_test.size());
  }

  SUBCASE("writing twice produces byte-identical files") {
    for (const char* name :
         {"train.jsonl", "dev.jsonl", "test.jsonl", "planted.json"}) {
      CHECK(slurp(dir + "/" + name) == slurp(dir2 + "/" + name));
    }
  }

  SUBCASE("missing directory is an error") {
    CHECK_THROWS_AS(write_planted_task(pd, "/no_such_dir_zz"),
                    std::runtime_error);
  }

  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("recovery precision against hand-built graphs") {
  const std::vector<std::pair<int, int>> planted = {{2, 3}, {4, 5}, {6, 7}};
  InteractionGraph graph(12);

  SUBCASE("planted pairs on top score 1") {
    for (auto [i, j] : planted) graph.set_gamma(i, j, 5.0);
    CHECK(recovery_precision(graph, planted, 3) == 1.0);
    // With m below the pair count the denominator shrinks to m.
    CHECK(recovery_precision(graph, planted, 2) == 1.0);
    CHECK(recovery_precision(graph, planted, 1) == 1.0);
  }

  SUBCASE("planted pairs at the bottom score 0") {
    graph.gamma().setConstant(1.0);
    for (auto [i, j] : planted) graph.set_gamma(i, j, -5.0);
    CHECK(recovery_precision(graph, planted, 3) == 0.0);
  }

  SUBCASE("partial hits give the exact fraction") {
    // One planted pair strong, the rest buried; distractors fill the top.
    graph.gamma().setConstant(0.0);
    graph.set_gamma(2, 3, 5.0);
    graph.set_gamma(8, 9, 4.0);
    graph.set_gamma(8, 10, 3.0);
    graph.set_gamma(4, 5, -5.0);
    graph.set_gamma(6, 7, -5.0);
    // top-3 = {(2,3),(8,9),(8,10)}: one hit of three pairs.
    CHECK(recovery_precision(graph, planted, 3) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    // m=5 still: min(m, pairs) = 3 in the denominator.
    graph.set_gamma(9, 10, 2.5);
    graph.set_gamma(9, 11, 2.25);
    CHECK(recovery_precision(graph, planted, 5) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  SUBCASE("bad arguments throw") {
    CHECK_THROWS_AS(recovery_precision(graph, planted, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(recovery_precision(graph, {}, 3), std::invalid_argument);
  }
}

TEST_CASE("random graphs recover planted pairs at the chance rate") {
  // For an i.i.d. gaussian graph the top-2 edges are a uniform 2-subset of
  // the C(18,2) = 153 rankable pairs (ids 2..19; <pad>/<unk> never rank), so
  // hits ~ Hypergeometric(N=153, K=2, n=2) and precision = hits/2.
  const int V = 20;
  const std::vector<std::pair<int, int>> planted = {{2, 3}, {4, 5}};
  const int trials = 1000;
  double sum = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(4242, "chance", static_cast<uint64_t>(trial)));
    InteractionGraph graph = init_interaction_graph(
        V, InteractionGraph::Init::gaussian, rng, 1.0);
    sum += recovery_precision(graph, planted, 2);
  }
  const double mean = sum / trials;

  const double N = 153, K = 2, n = 2;
  const double expect_hits = n * K / N;
  const double var_hits =
      n * (K / N) * (1.0 - K / N) * ((N - n) / (N - 1.0));
  const double expect_precision = expect_hits / n;
  const double sd_mean = std::sqrt(var_hits / (n * n) / trials);
  CHECK(std::abs(mean - expect_precision) <= 3.0 * sd_mean);
  CHECK(mean > 0.0);  // with 1000 trials, zero hits is astronomically unlikely
}
