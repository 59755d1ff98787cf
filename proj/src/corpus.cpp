#include "wigraph/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace wigraph {

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (const auto& w : words) out << w << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read vocabulary file: " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    v.index.emplace(line, v.size());
    v.words.push_back(line);
  }
  if (v.size() < 2 || v.words[kPad] != kPadWord || v.words[kUnk] != kUnkWord) {
    throw std::runtime_error("vocabulary file " + path +
                             " does not start with the <pad>/<unk> rows");
  }
  return v;
}

void CooccurrenceMatrix::add_pair(int i, int j) {
  if (i == j) throw std::invalid_argument("co-occurrence self pair");
  counts_[pack(i, j)] += 1;
  total_directed_ += 2;  // the symmetric view holds the count at (i,j) and (j,i)
}

uint64_t CooccurrenceMatrix::pack(int i, int j) {
  if (i > j) std::swap(i, j);
  return (static_cast<uint64_t>(i) << 32) | static_cast<uint64_t>(j);
}

int64_t CooccurrenceMatrix::raw_count(int i, int j) const {
  if (i == j) return 0;
  auto it = counts_.find(pack(i, j));
  return it == counts_.end() ? 0 : it->second;
}

double CooccurrenceMatrix::prob(int i, int j) const {
  if (total_directed_ == 0) return 0.0;
  return static_cast<double>(raw_count(i, j)) /
         static_cast<double>(total_directed_);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      continue;  // punctuation is dropped entirely
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& texts,
                       int max_vocab, int min_freq) {
  if (texts.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (max_vocab < 2) {
    throw std::invalid_argument(
        "build_vocab: max_vocab must leave room for <pad> and <unk>");
  }
  std::unordered_map<std::string, int64_t> counts;
  std::vector<std::string> order;  // first-occurrence order
  for (const auto& sent : texts) {
    for (const auto& w : sent) {
      auto [it, inserted] = counts.emplace(w, 0);
      it->second += 1;
      if (inserted) order.push_back(w);
    }
  }
  // Stable sort by frequency keeps first-occurrence order among ties.
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) {
                     return counts[a] > counts[b];
                   });

  Vocabulary v;
  v.words = {Vocabulary::kPadWord, Vocabulary::kUnkWord};
  v.index = {{Vocabulary::kPadWord, Vocabulary::kPad},
             {Vocabulary::kUnkWord, Vocabulary::kUnk}};
  v.freq = {{Vocabulary::kPadWord, 0}, {Vocabulary::kUnkWord, 0}};
  for (const auto& w : order) {
    if (v.size() >= max_vocab) break;
    if (counts[w] < min_freq) continue;
    v.index.emplace(w, v.size());
    v.words.push_back(w);
    v.freq.emplace(w, counts[w]);
  }
  return v;
}

TokenSequence encode_text(const std::vector<std::string>& tokens,
                          const Vocabulary& vocab, int width) {
  if (width < 1) throw std::invalid_argument("encode_text: width must be >= 1");
  TokenSequence seq;
  seq.ids.assign(static_cast<size_t>(width), Vocabulary::kPad);
  seq.length = std::min<int>(width, static_cast<int>(tokens.size()));
  for (int t = 0; t < seq.length; ++t) {
    seq.ids[static_cast<size_t>(t)] = vocab.lookup(tokens[static_cast<size_t>(t)]);
  }
  return seq;
}

std::vector<std::string> decode_ids(const TokenSequence& seq,
                                    const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(seq.length));
  for (int t = 0; t < seq.length; ++t) {
    int id = seq.ids[static_cast<size_t>(t)];
    if (id < 0 || id >= vocab.size()) {
      throw std::out_of_range("decode_ids: id outside vocabulary");
    }
    out.push_back(vocab.words[static_cast<size_t>(id)]);
  }
  return out;
}

CooccurrenceMatrix build_cooccurrence(const Dataset& data,
                                      const Vocabulary& vocab) {
  return build_cooccurrence(data, vocab.size());
}

CooccurrenceMatrix build_cooccurrence(const Dataset& data, int vocab_size) {
  if (data.samples.empty()) {
    throw std::invalid_argument("build_cooccurrence: empty dataset");
  }
  CooccurrenceMatrix cooc(vocab_size);
  std::set<int> types;
  for (const auto& seq : data.samples) {
    types.clear();
    for (int t = 0; t < seq.length; ++t) {
      int id = seq.ids[static_cast<size_t>(t)];
      if (id >= 2) types.insert(id);  // skip <pad>/<unk>
    }
    for (auto it = types.begin(); it != types.end(); ++it) {
      for (auto jt = std::next(it); jt != types.end(); ++jt) {
        cooc.add_pair(*it, *jt);
      }
    }
  }
  return cooc;
}

namespace {

struct RawRecord {
  std::vector<std::string> tokens;
  int label;
};

std::vector<RawRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset file: " + path);
  std::vector<RawRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": record needs a string \"text\" field");
    }
    if (!j.contains("label") || !j["label"].is_number_integer()) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": record needs an integer \"label\" field");
    }
    int label = j["label"].get<int>();
    if (label < 0) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": label must be >= 0");
    }
    records.push_back({tokenize(j["text"].get<std::string>()), label});
  }
  if (records.empty()) {
    throw std::runtime_error("dataset file has no records: " + path);
  }
  return records;
}

Dataset encode_records(const std::vector<RawRecord>& records,
                       const Vocabulary& vocab, int width,
                       int expected_classes, const std::string& path) {
  if (width < 1) {
    size_t longest = 1;
    for (const auto& r : records) longest = std::max(longest, r.tokens.size());
    width = static_cast<int>(longest);
  }
  Dataset data;
  data.max_len = width;
  int max_label = -1;
  for (size_t n = 0; n < records.size(); ++n) {
    const auto& r = records[n];
    if (expected_classes >= 1 && r.label >= expected_classes) {
      throw std::runtime_error(path + ": record " + std::to_string(n + 1) +
                               " has label " + std::to_string(r.label) +
                               " but only " + std::to_string(expected_classes) +
                               " classes are expected");
    }
    max_label = std::max(max_label, r.label);
    TokenSequence seq = encode_text(r.tokens, vocab, width);
    seq.label = r.label;
    data.samples.push_back(std::move(seq));
  }
  data.num_classes = expected_classes >= 1 ? expected_classes : max_label + 1;
  return data;
}

}  // namespace

Dataset load_dataset(const std::string& path, const Vocabulary& vocab,
                     int width, int expected_classes) {
  return encode_records(read_jsonl(path), vocab, width, expected_classes, path);
}

std::pair<Dataset, Vocabulary> load_dataset_building_vocab(
    const std::string& path, int max_vocab, int min_freq, int width) {
  auto records = read_jsonl(path);
  std::vector<std::vector<std::string>> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.tokens);
  Vocabulary vocab = build_vocab(texts, max_vocab, min_freq);
  Dataset data = encode_records(records, vocab, width, -1, path);
  return {std::move(data), std::move(vocab)};
}

}  // namespace wigraph
