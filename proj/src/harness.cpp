#include "wigraph/harness.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "wigraph/rng.hpp"

namespace wigraph {

namespace {
constexpr int kFirstReal = 2;  // ids below this are <pad>/<unk>
}

const char* to_string(PlantedRule r) {
  switch (r) {
    case PlantedRule::pair_and: return "pair_and";
    case PlantedRule::pair_xor: return "pair_xor";
  }
  throw std::logic_error("unknown planted rule");
}

PlantedRule rule_from_string(const std::string& s) {
  if (s == "pair_and") return PlantedRule::pair_and;
  if (s == "pair_xor") return PlantedRule::pair_xor;
  throw std::invalid_argument("unknown planted rule: " + s);
}

void PlantedTaskSpec::validate() const {
  if (pairs.empty()) throw std::invalid_argument("planted task needs at least one pair");
  if (V < 2 * static_cast<int>(pairs.size()) + 4) {
    throw std::invalid_argument("planted task: V must be at least 2*pairs + 4");
  }
  if (L < 3) throw std::invalid_argument("planted task: L must be at least 3");
  if (noise_rate < 0.0 || noise_rate >= 1.0) {
    throw std::invalid_argument("planted task: noise_rate must be in [0, 1)");
  }
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : pairs) {
    if (a == b) throw std::invalid_argument("planted pair must join two distinct words");
    if (a < kFirstReal || b < kFirstReal || a >= V || b >= V) {
      throw std::invalid_argument("planted pair word id out of range");
    }
    auto key = std::minmax(a, b);
    if (!seen.insert(key).second) {
      throw std::invalid_argument("duplicate planted pair");
    }
  }
}

int planted_label(const PlantedTaskSpec& spec, const std::vector<int>& ids) {
  std::set<int> present(ids.begin(), ids.end());
  int hits = 0;
  for (auto [a, b] : spec.pairs) {
    if (present.count(a) && present.count(b)) ++hits;
  }
  if (spec.rule == PlantedRule::pair_and) return hits > 0 ? 1 : 0;
  return hits % 2;
}

namespace {

Dataset generate_split(const PlantedTaskSpec& spec, int n, int split_index,
                       std::vector<size_t>* flipped) {
  Dataset out;
  out.max_len = spec.L;
  out.num_classes = 2;
  if (n == 0) return out;

  Rng gen(derive_seed(spec.seed, "planted.gen", static_cast<uint64_t>(split_index)));
  const int quota1 = n / 2;
  const int quota0 = n - quota1;
  int c0 = 0, c1 = 0;
  // Bags over real ids are easy to balance for sane specs; the bound only
  // trips when the rule makes one class vanishingly rare.
  const long max_attempts = 1000L * n + 10000L;
  long attempts = 0;
  while (c0 + c1 < n) {
    if (++attempts > max_attempts) {
      throw std::runtime_error(
          "planted task: could not balance classes within attempt budget");
    }
    const int len = 3 + static_cast<int>(gen.below(static_cast<uint64_t>(spec.L - 2)));
    std::vector<int> ids(static_cast<size_t>(len));
    for (int& id : ids) {
      id = kFirstReal +
           static_cast<int>(gen.below(static_cast<uint64_t>(spec.V - kFirstReal)));
    }
    const int label = planted_label(spec, ids);
    if (label == 1) {
      if (c1 >= quota1) continue;
      ++c1;
    } else {
      if (c0 >= quota0) continue;
      ++c0;
    }
    TokenSequence seq;
    seq.length = len;
    seq.label = label;
    seq.ids.assign(static_cast<size_t>(spec.L), Vocabulary::kPad);
    std::copy(ids.begin(), ids.end(), seq.ids.begin());
    out.samples.push_back(std::move(seq));
  }

  Rng noise(derive_seed(spec.seed, "planted.noise", static_cast<uint64_t>(split_index)));
  for (size_t i = 0; i < out.samples.size(); ++i) {
    if (noise.uniform() < spec.noise_rate) {
      out.samples[i].label = 1 - out.samples[i].label;
      flipped->push_back(i);
    }
  }
  return out;
}

}  // namespace

PlantedData generate_planted_task(const PlantedTaskSpec& spec, int n_train,
                                  int n_dev, int n_test) {
  spec.validate();
  if (n_train < 1 || n_dev < 1 || n_test < 1) {
    throw std::invalid_argument("planted task: split sizes must be >= 1");
  }
  PlantedData out;
  out.spec = spec;
  out.data.train = generate_split(spec, n_train, 0, &out.flipped_train);
  out.data.dev = generate_split(spec, n_dev, 1, &out.flipped_dev);
  out.data.test = generate_split(spec, n_test, 2, &out.flipped_test);

  out.vocab.words.reserve(static_cast<size_t>(spec.V));
  out.vocab.words.push_back(Vocabulary::kPadWord);
  out.vocab.words.push_back(Vocabulary::kUnkWord);
  for (int i = kFirstReal; i < spec.V; ++i) {
    out.vocab.words.push_back("w" + std::to_string(i));
  }
  for (size_t i = 0; i < out.vocab.words.size(); ++i) {
    out.vocab.index[out.vocab.words[i]] = static_cast<int>(i);
  }
  for (const auto& seq : out.data.train.samples) {
    for (int t = 0; t < seq.length; ++t) {
      out.vocab.freq[out.vocab.words[static_cast<size_t>(seq.ids[static_cast<size_t>(t)])]] += 1;
    }
  }
  return out;
}

namespace {

void write_jsonl(const Dataset& ds, const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const auto& seq : ds.samples) {
    std::ostringstream text;
    for (int t = 0; t < seq.length; ++t) {
      if (t > 0) text << ' ';
      text << vocab.words[static_cast<size_t>(seq.ids[static_cast<size_t>(t)])];
    }
    out << "{\"text\": \"" << text.str() << "\", \"label\": " << seq.label << "}\n";
  }
  if (!out) throw std::runtime_error("failed writing: " + path);
}

void write_index_array(std::ostream& out, const std::vector<size_t>& v) {
  out << '[';
  for (size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out << ", ";
    out << v[i];
  }
  out << ']';
}

}  // namespace

void write_planted_task(const PlantedData& data, const std::string& out_dir) {
  write_jsonl(data.data.train, data.vocab, out_dir + "/train.jsonl");
  write_jsonl(data.data.dev, data.vocab, out_dir + "/dev.jsonl");
  write_jsonl(data.data.test, data.vocab, out_dir + "/test.jsonl");

  const std::string path = out_dir + "/planted.json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "{\n";
  out << "  \"V\": " << data.spec.V << ",\n";
  out << "  \"L\": " << data.spec.L << ",\n";
  out << "  \"rule\": \"" << to_string(data.spec.rule) << "\",\n";
  out << "  \"noise_rate\": " << data.spec.noise_rate << ",\n";
  out << "  \"seed\": " << data.spec.seed << ",\n";
  out << "  \"pairs\": [";
  for (size_t i = 0; i < data.spec.pairs.size(); ++i) {
    if (i > 0) out << ", ";
    out << '[' << data.spec.pairs[i].first << ", " << data.spec.pairs[i].second << ']';
  }
  out << "],\n";
  out << "  \"pair_words\": [";
  for (size_t i = 0; i < data.spec.pairs.size(); ++i) {
    if (i > 0) out << ", ";
    out << "[\"" << data.vocab.words[static_cast<size_t>(data.spec.pairs[i].first)]
        << "\", \"" << data.vocab.words[static_cast<size_t>(data.spec.pairs[i].second)]
        << "\"]";
  }
  out << "],\n";
  out << "  \"flipped\": {\"train\": ";
  write_index_array(out, data.flipped_train);
  out << ", \"dev\": ";
  write_index_array(out, data.flipped_dev);
  out << ", \"test\": ";
  write_index_array(out, data.flipped_test);
  out << "}\n}\n";
  if (!out) throw std::runtime_error("failed writing: " + path);
}

double recovery_precision(const InteractionGraph& graph,
                          const std::vector<std::pair<int, int>>& planted,
                          int m) {
  if (m < 1) throw std::invalid_argument("recovery_precision: m must be >= 1");
  if (planted.empty()) {
    throw std::invalid_argument("recovery_precision: no planted pairs");
  }
  std::set<std::pair<int, int>> want;
  for (auto [a, b] : planted) want.insert(std::minmax(a, b));
  int hit = 0;
  for (const auto& e : top_k_edges(graph, m)) {
    if (want.count(std::minmax(e.i, e.j))) ++hit;
  }
  const int denom = std::min<int>(m, static_cast<int>(planted.size()));
  return static_cast<double>(hit) / static_cast<double>(denom);
}

}  // namespace wigraph
