#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wigraph {

// Word-index table.  Index 0 is the padding token and index 1 the
// out-of-vocabulary token; real words start at index 2.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadWord = "<pad>";
  static constexpr const char* kUnkWord = "<unk>";

  std::vector<std::string> words;               // index -> word
  std::unordered_map<std::string, int> index;   // word -> index
  std::unordered_map<std::string, int64_t> freq;  // corpus frequency of kept words

  int size() const { return static_cast<int>(words.size()); }

  // Index of `w`, or kUnk when the word is not in the table.
  int lookup(const std::string& w) const {
    auto it = index.find(w);
    return it == index.end() ? kUnk : it->second;
  }

  // One word per line; the line number is the index.
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);
};

// A single encoded sentence, padded to a fixed width.
struct TokenSequence {
  std::vector<int> ids;  // size == padded width; ids[t] == kPad for t >= length
  int length = 0;        // number of real tokens
  int label = -1;        // class id, -1 when absent
};

// One split of a classification dataset.
struct Dataset {
  std::vector<TokenSequence> samples;
  int num_classes = 0;
  int max_len = 0;  // padded width shared by all samples
};

// Train/dev/test bundle sharing one vocabulary.
struct SplitDataset {
  Dataset train, dev, test;
};

// Sentence-level co-occurrence counts over the vocabulary.  Counts are
// symmetric with a zero diagonal and each unordered pair of distinct word
// types is counted once per sentence containing both.  Storage is sparse;
// raw_count/prob present the dense symmetric view.
class CooccurrenceMatrix {
 public:
  explicit CooccurrenceMatrix(int vocab_size) : vocab_size_(vocab_size) {}

  int vocab_size() const { return vocab_size_; }

  void add_pair(int i, int j);  // increments the (i, j) count; requires i != j

  int64_t raw_count(int i, int j) const;

  // raw_count(i, j) normalized by the sum of counts over all ordered (i, j);
  // the probabilities over the full matrix sum to one.
  double prob(int i, int j) const;

  // Sum of raw counts over all ordered pairs (twice the stored pair total).
  int64_t total() const { return total_directed_; }

  size_t nonzero_pairs() const { return counts_.size(); }

  // Applies fn(i, j, count) for every stored pair with i < j.
  template <typename F>
  void for_each_pair(F&& fn) const {
    for (const auto& [key, count] : counts_) {
      fn(static_cast<int>(key >> 32), static_cast<int>(key & 0xffffffffULL),
         count);
    }
  }

 private:
  static uint64_t pack(int i, int j);  // canonicalizes to i < j

  int vocab_size_ = 0;
  int64_t total_directed_ = 0;
  std::unordered_map<uint64_t, int64_t> counts_;
};

// Lowercases, strips punctuation characters and splits on whitespace.
// Tokens that are all punctuation disappear.
std::vector<std::string> tokenize(const std::string& text);

// Builds a vocabulary from pre-tokenized sentences.  Keeps the most frequent
// max_vocab - 2 words with frequency >= min_freq; ties are broken by first
// occurrence order.  Throws std::invalid_argument on an empty corpus or
// max_vocab < 2.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& texts,
                       int max_vocab, int min_freq = 1);

// Encodes tokens against the vocabulary, truncating to width and padding
// with kPad.  Unknown words map to kUnk.  Requires width >= 1.
TokenSequence encode_text(const std::vector<std::string>& tokens,
                          const Vocabulary& vocab, int width);

// Words for the real tokens of seq (inverse of encode_text up to UNK).
std::vector<std::string> decode_ids(const TokenSequence& seq,
                                    const Vocabulary& vocab);

// Counts co-occurrences over every sample of the dataset.  Padding and UNK
// positions are ignored; repeated word types within a sentence count once.
// Throws std::invalid_argument on an empty dataset.
CooccurrenceMatrix build_cooccurrence(const Dataset& data, int vocab_size);
CooccurrenceMatrix build_cooccurrence(const Dataset& data,
                                      const Vocabulary& vocab);

// Reads a JSONL file of {"text": str, "label": int} records and encodes it
// with an existing vocabulary.  width < 1 means "use the longest sentence".
// expected_classes >= 1 validates labels against a known class count;
// otherwise the count is inferred as max label + 1.  Malformed lines raise
// std::runtime_error naming the file and line.
Dataset load_dataset(const std::string& path, const Vocabulary& vocab,
                     int width = -1, int expected_classes = -1);

// As above but first builds the vocabulary from the file's own text.
std::pair<Dataset, Vocabulary> load_dataset_building_vocab(
    const std::string& path, int max_vocab, int min_freq = 1, int width = -1);

}  // namespace wigraph
