#include "wigraph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wigraph {

double sigmoid(double z) {
  if (z >= 0.0) {
    return 1.0 / (1.0 + std::exp(-z));
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logit(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("logit: p must lie strictly inside (0,1)");
  }
  return std::log(p) - std::log1p(-p);
}

InteractionGraph::InteractionGraph(int vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size < 2) {
    throw std::invalid_argument("interaction graph needs at least two words");
  }
  const size_t n = static_cast<size_t>(vocab_size) *
                   static_cast<size_t>(vocab_size - 1) / 2;
  gamma_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
}

size_t InteractionGraph::pair_index(int i, int j) const {
  if (i == j) throw std::invalid_argument("self-edge undefined");
  if (i < 0 || j < 0 || i >= vocab_size_ || j >= vocab_size_) {
    throw std::out_of_range("edge endpoint outside vocabulary");
  }
  if (i > j) std::swap(i, j);
  const size_t vi = static_cast<size_t>(i), vj = static_cast<size_t>(j);
  const size_t v = static_cast<size_t>(vocab_size_);
  // Row-major strict upper triangle.
  return vi * v - vi * (vi + 1) / 2 + (vj - vi - 1);
}

InteractionGraph init_interaction_graph(int vocab_size,
                                        InteractionGraph::Init init, Rng& rng,
                                        double sigma) {
  InteractionGraph g(vocab_size);
  if (init == InteractionGraph::Init::gaussian) {
    for (Eigen::Index n = 0; n < g.gamma().size(); ++n) {
      g.gamma()[n] = sigma * rng.gaussian();
    }
  }
  return g;
}

void EdgeSet::insert(int i, int j) {
  if (i == j) throw std::invalid_argument("self-edge undefined");
  pairs_.insert(pack(i, j));
}

bool EdgeSet::contains(int i, int j) const {
  return pairs_.count(pack(i, j)) > 0;
}

uint64_t EdgeSet::pack(int i, int j) {
  if (i > j) std::swap(i, j);
  return (static_cast<uint64_t>(i) << 32) | static_cast<uint64_t>(j);
}

double gumbel_sigmoid_sample(double logit_value, double temperature, Rng& rng) {
  if (temperature <= 0.0) {
    throw std::invalid_argument("gumbel_sigmoid_sample: temperature must be > 0");
  }
  const double g1 = rng.gumbel();
  const double g2 = rng.gumbel();
  return gumbel_sigmoid_from_noise(logit_value, temperature, g1 - g2);
}

double gumbel_sigmoid_from_noise(double logit_value, double temperature,
                                 double noise) {
  return sigmoid((logit_value + noise) / temperature);
}

double gumbel_sigmoid_grad(double sample_value, double temperature) {
  return sample_value * (1.0 - sample_value) / temperature;
}

SubgraphSample sample_subgraph(const InteractionGraph& graph,
                               const TokenSequence& seq, double temperature,
                               SampleMode mode, Rng& rng,
                               const EdgeSet* allowed) {
  const int L = static_cast<int>(seq.ids.size());
  SubgraphSample sample;
  sample.values = Eigen::MatrixXd::Zero(L, L);
  sample.token_ids = seq.ids;
  sample.mode = mode;
  for_each_eligible_pair(seq, [&](int p, int q) {
    const int i = seq.ids[static_cast<size_t>(p)];
    const int j = seq.ids[static_cast<size_t>(q)];
    double v;
    if (mode == SampleMode::hard) {
      v = graph.edge_prob(i, j) > 0.5 ? 1.0 : 0.0;
    } else {
      v = gumbel_sigmoid_sample(graph.gamma_at(i, j), temperature, rng);
    }
    if (allowed != nullptr && !allowed->contains(i, j)) v = 0.0;
    sample.values(p, q) = v;
    sample.values(q, p) = v;
  });
  return sample;
}

double bernoulli_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("bernoulli_entropy: p outside [0,1]");
  }
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
  return h;
}

double kl_bernoulli(double p, double q0) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("kl_bernoulli: p outside [0,1]");
  }
  if (!(q0 > 0.0 && q0 < 1.0)) {
    throw std::invalid_argument(
        "kl_bernoulli: divergence undefined for a degenerate prior");
  }
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q0);
  if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q0));
  return kl;
}

EdgePrior EdgePrior::bernoulli_const(double p0) {
  if (!(p0 > 0.0 && p0 < 1.0)) {
    throw std::invalid_argument("edge prior probability must be in (0,1)");
  }
  EdgePrior prior;
  prior.p0_ = p0;
  return prior;
}

EdgePrior EdgePrior::cooccurrence(const CooccurrenceMatrix* cooc, double floor) {
  if (cooc == nullptr) {
    throw std::invalid_argument("co-occurrence prior needs a matrix");
  }
  if (!(floor > 0.0 && floor < 0.5)) {
    throw std::invalid_argument("prior floor must be in (0, 0.5)");
  }
  EdgePrior prior;
  prior.cooc_ = cooc;
  prior.floor_ = floor;
  return prior;
}

double EdgePrior::prob(int i, int j) const {
  if (cooc_ == nullptr) return p0_;
  return std::clamp(cooc_->prob(i, j), floor_, 1.0 - floor_);
}

double kl_to_prior(const std::vector<double>& probs, const EdgePrior& prior,
                   const std::vector<std::pair<int, int>>* ids) {
  if (!prior.is_const() && (ids == nullptr || ids->size() != probs.size())) {
    throw std::invalid_argument(
        "kl_to_prior: pair-dependent prior needs one id pair per probability");
  }
  double kl = 0.0;
  for (size_t n = 0; n < probs.size(); ++n) {
    const double q0 = prior.is_const() ? prior.prob(0, 1)
                                       : prior.prob((*ids)[n].first, (*ids)[n].second);
    kl += kl_bernoulli(probs[n], q0);
  }
  return kl;
}

double l1_sparsity(const SubgraphSample& sample) {
  double sum = 0.0;
  const Eigen::Index L = sample.values.rows();
  for (Eigen::Index p = 0; p < L; ++p) {
    for (Eigen::Index q = p + 1; q < L; ++q) {
      sum += std::abs(sample.values(p, q));
    }
  }
  return sum;
}

std::vector<ScoredEdge> top_k_edges(const InteractionGraph& graph, size_t k,
                                    const std::set<int>* restrict_ids) {
  // Total order: probability descending, then (i, j) lexicographic.
  auto better = [](const ScoredEdge& a, const ScoredEdge& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  };
  if (k == 0) return {};
  // Bounded heap; with `better` as the heap's less-than, the front holds the
  // worst edge kept so far.
  std::vector<ScoredEdge> heap;
  const int V = graph.vocab_size();
  // Pairs touching <pad>/<unk> carry no edge and never rank.
  for (int i = 2; i < V; ++i) {
    if (restrict_ids != nullptr && restrict_ids->count(i) == 0) continue;
    for (int j = i + 1; j < V; ++j) {
      if (restrict_ids != nullptr && restrict_ids->count(j) == 0) continue;
      ScoredEdge e{i, j, graph.edge_prob(i, j)};
      if (heap.size() < k) {
        heap.push_back(e);
        std::push_heap(heap.begin(), heap.end(), better);
      } else if (better(e, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), better);
        heap.back() = e;
        std::push_heap(heap.begin(), heap.end(), better);
      }
    }
  }
  std::sort(heap.begin(), heap.end(), better);
  return heap;
}

}  // namespace wigraph
