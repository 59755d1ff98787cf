#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "wigraph/corpus.hpp"
#include "wigraph/rng.hpp"

namespace wigraph {

class Rng;

// Numerically safe logistic function.  Underflows to an exact 0.0 (or 1.0)
// for very large |z|, which downstream code relies on for the "no neighbor"
// branch of message passing.
double sigmoid(double z);
double logit(double p);  // inverse; requires p in (0,1)

// The global word-interaction graph: one logit per unordered pair of real
// word ids.  Edge (i, j) is Bernoulli(sigmoid(gamma_ij)); storage is the
// strict upper triangle so symmetry holds by construction and self-edges do
// not exist.
class InteractionGraph {
 public:
  enum class Init { zeros, gaussian };

  explicit InteractionGraph(int vocab_size);

  int vocab_size() const { return vocab_size_; }
  size_t pair_count() const { return gamma_.size(); }

  Eigen::VectorXd& gamma() { return gamma_; }
  const Eigen::VectorXd& gamma() const { return gamma_; }

  double gamma_at(int i, int j) const { return gamma_[pair_index(i, j)]; }
  void set_gamma(int i, int j, double value) { gamma_[pair_index(i, j)] = value; }

  // sigmoid(gamma_ij); symmetric because storage is shared.
  double edge_prob(int i, int j) const { return sigmoid(gamma_at(i, j)); }

  // Flat index into the upper triangle; throws on self-edges or ids >= V.
  size_t pair_index(int i, int j) const;

 private:
  int vocab_size_;
  Eigen::VectorXd gamma_;  // length V*(V-1)/2, row-major upper triangle
};

// Throws on vocab_size < 2.  gaussian draws each logit from N(0, sigma^2).
InteractionGraph init_interaction_graph(int vocab_size,
                                        InteractionGraph::Init init, Rng& rng,
                                        double sigma = 0.01);

// A set of unordered word-id pairs, used to restrict inference to a chosen
// group of edges.
class EdgeSet {
 public:
  void insert(int i, int j);
  bool contains(int i, int j) const;
  size_t size() const { return pairs_.size(); }

 private:
  static uint64_t pack(int i, int j);
  std::set<uint64_t> pairs_;
};

enum class SampleMode { soft, hard };

// One sentence's sampled adjacency.
struct SubgraphSample {
  Eigen::MatrixXd values;      // L x L, symmetric, zero diagonal
  std::vector<int> token_ids;  // the positions' vocab ids
  SampleMode mode = SampleMode::soft;
};

// Binary-concrete relaxation: sigmoid((logit + g1 - g2) / temperature) with
// g1, g2 iid standard Gumbel.  Exactly two Gumbel draws are consumed.
// Throws on temperature <= 0.
double gumbel_sigmoid_sample(double logit_value, double temperature, Rng& rng);

// Same transform with the noise difference g1 - g2 supplied by the caller;
// this is the piece the training loop differentiates through.
double gumbel_sigmoid_from_noise(double logit_value, double temperature,
                                 double noise);

// d sample / d logit with the noise held fixed: s(1-s)/temperature.
double gumbel_sigmoid_grad(double sample_value, double temperature);

// Applies fn(p, q) to every position pair p < q < seq.length whose vocab ids
// are distinct real words (ids >= 2).  Pairs involving <pad> or <unk>, and
// repeated occurrences of the same word, carry no edge.  Every sampling and
// loss path iterates pairs through this one helper so noise draws line up.
template <typename F>
void for_each_eligible_pair(const TokenSequence& seq, F&& fn) {
  for (int p = 0; p + 1 < seq.length; ++p) {
    const int a = seq.ids[static_cast<size_t>(p)];
    if (a < 2) continue;
    for (int q = p + 1; q < seq.length; ++q) {
      const int b = seq.ids[static_cast<size_t>(q)];
      if (b < 2 || b == a) continue;
      fn(p, q);
    }
  }
}

// Samples the in-sentence adjacency.  Eligible position pairs (see
// for_each_eligible_pair) get, in row-major order:
//   soft: gumbel_sigmoid_sample of gamma for the pair's word ids;
//   hard: indicator[edge_prob > 0.5], deterministic, rng untouched.
// All other entries are exactly zero.  `allowed`, when present, zeroes every
// pair of word ids not in the set (their noise is still drawn in soft mode so
// restriction does not shift the stream).
SubgraphSample sample_subgraph(const InteractionGraph& graph,
                               const TokenSequence& seq, double temperature,
                               SampleMode mode, Rng& rng,
                               const EdgeSet* allowed = nullptr);

// -p ln p - (1-p) ln(1-p) in nats, 0 ln 0 := 0.  Throws outside [0,1].
double bernoulli_entropy(double p);

// KL(Bernoulli(p) || Bernoulli(q0)) in nats.  Throws when q0 is 0 or 1.
double kl_bernoulli(double p, double q0);

// Prior over edges: either a constant Bernoulli(p0) or per-pair co-occurrence
// probabilities clamped to [floor, 1-floor] so the divergence stays finite.
class EdgePrior {
 public:
  static EdgePrior bernoulli_const(double p0);
  static EdgePrior cooccurrence(const CooccurrenceMatrix* cooc,
                                double floor = 1e-4);

  double prob(int i, int j) const;
  bool is_const() const { return cooc_ == nullptr; }

 private:
  double p0_ = 0.5;
  const CooccurrenceMatrix* cooc_ = nullptr;
  double floor_ = 1e-4;
};

// Sum of KL(Bernoulli(p) || prior) over probs; for pair-dependent priors the
// ids vector supplies the word pair behind each probability.
double kl_to_prior(const std::vector<double>& probs, const EdgePrior& prior,
                   const std::vector<std::pair<int, int>>* ids = nullptr);

// Sum of absolute edge values over the strict upper triangle: each unordered
// edge counted once.
double l1_sparsity(const SubgraphSample& sample);

struct ScoredEdge {
  int i, j;     // word ids, i < j
  double prob;  // edge_prob(i, j)
};

// The k most probable edges, descending; ties broken by (i, j) lexicographic
// order.  Pairs touching <pad>/<unk> are skipped (they carry no edge).
// `restrict_ids`, when present, keeps only pairs with both endpoints in the
// set.
std::vector<ScoredEdge> top_k_edges(const InteractionGraph& graph, size_t k,
                                    const std::set<int>* restrict_ids = nullptr);

}  // namespace wigraph
