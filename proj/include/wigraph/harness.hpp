#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wigraph/corpus.hpp"
#include "wigraph/graph.hpp"

namespace wigraph {

enum class PlantedRule { pair_and, pair_xor };
const char* to_string(PlantedRule r);
PlantedRule rule_from_string(const std::string& s);

// Synthetic binary task whose label depends on planted word pairs:
//   pair_and: label 1 iff any planted pair is fully present in the sentence;
//   pair_xor: label = parity of the number of fully present planted pairs.
// Sentences are uniform random bags over the real words (ids 2..V-1) with
// lengths 3..L.
struct PlantedTaskSpec {
  int V = 30;
  int L = 10;
  PlantedRule rule = PlantedRule::pair_and;
  std::vector<std::pair<int, int>> pairs;  // word ids >= 2, distinct
  double noise_rate = 0.0;                 // label flip probability
  uint64_t seed = 1;

  void validate() const;
};

// Clean rule label for a bag of word ids (noise-free ground truth).
int planted_label(const PlantedTaskSpec& spec, const std::vector<int>& ids);

struct PlantedData {
  PlantedTaskSpec spec;
  SplitDataset data;
  Vocabulary vocab;  // <pad>, <unk>, then w2..w{V-1} at their own indices
  // Per-split indices whose emitted label was noise-flipped.
  std::vector<size_t> flipped_train, flipped_dev, flipped_test;
};

// Deterministic given spec.seed.  Class balance is enforced at 50/50 (within
// one sample) on the clean labels by rejection sampling; throws when a quota
// cannot be filled within a bounded number of attempts.
PlantedData generate_planted_task(const PlantedTaskSpec& spec, int n_train,
                                  int n_dev, int n_test);

// Writes train/dev/test.jsonl plus planted.json (pairs, flipped indices)
// into an existing directory.
void write_planted_task(const PlantedData& data, const std::string& out_dir);

// |top_m edges of the graph  intersected with  planted pairs| / min(m, #pairs).
double recovery_precision(const InteractionGraph& graph,
                          const std::vector<std::pair<int, int>>& planted,
                          int m);

}  // namespace wigraph
