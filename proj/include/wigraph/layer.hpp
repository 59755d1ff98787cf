#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "wigraph/graph.hpp"

namespace wigraph {

// Exact Gaussian-CDF GeLU: x * Phi(x).  The tanh approximation is close but
// not equal; hand-checked values here assume the exact form.
inline double gelu(double x) { return 0.5 * x * std::erfc(-x * M_SQRT1_2); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * std::erfc(-x * M_SQRT1_2);
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

enum class Variant { A, A_R };
enum class Aggregation { residual_mean, sym_normalized };

struct LayerConfig {
  Variant variant = Variant::A;
  Aggregation aggregation = Aggregation::residual_mean;
};

// Per-token mask network: embedding -> hidden (GeLU) -> logit.
struct MaskNet {
  Eigen::MatrixXd W1;  // hidden x d
  Eigen::VectorXd b1;  // hidden
  Eigen::VectorXd w2;  // hidden
  Eigen::VectorXd b2;  // 1

  int hidden_dim() const { return static_cast<int>(W1.rows()); }
  bool empty() const { return W1.size() == 0; }
};

MaskNet init_masknet(int hidden_dim, int embed_dim, Rng& rng);

struct MaskNetCache {
  Eigen::MatrixXd h_pre, h;   // L x hidden
  Eigen::VectorXd logits;     // L (zero past length)
};

// Mask logit per token position (positions >= length left at zero).
Eigen::VectorXd masknet_logits(const MaskNet& net, const Eigen::MatrixXd& X,
                               int length, MaskNetCache* cache = nullptr);

struct MaskSample {
  Eigen::VectorXd values;  // length L; zero at PAD positions
  SampleMode mode = SampleMode::soft;
};

// Token-keep mask.  Soft: gumbel_sigmoid of the masknet logit (two Gumbel
// draws per real token, in position order).  Hard: logit > 0, deterministic.
// PAD positions are forced to zero.
MaskSample sample_word_mask(const MaskNet& net, const Eigen::MatrixXd& X,
                            int length, double temperature, SampleMode mode,
                            Rng& rng, MaskNetCache* cache = nullptr);

// Soft mask built from caller-supplied noise differences, one per real token.
MaskSample mask_from_noise(const Eigen::VectorXd& logits, int length,
                           double temperature,
                           const std::vector<double>& noise);

// Soft adjacency built from caller-supplied noise differences, one per
// eligible pair in for_each_eligible_pair order.
SubgraphSample subgraph_from_noise(const InteractionGraph& graph,
                                   const TokenSequence& seq,
                                   double temperature,
                                   const std::vector<double>& noise);

// D^{-1/2} (A + I) D^{-1/2} where D is the degree diagonal of A + I.
// Symmetric, spectral radius <= 1.
Eigen::MatrixXd normalize_adjacency(const SubgraphSample& sample);

struct MessagePassCache {
  Aggregation mode = Aggregation::residual_mean;
  Eigen::MatrixXd X;
  // residual_mean
  Eigen::VectorXd wsum;  // per-row total edge weight
  Eigen::MatrixXd M;     // neighbor means (rows with wsum == 0 are zero)
  // sym_normalized
  Eigen::VectorXd deg;
  Eigen::MatrixXd Aprime;
  Eigen::MatrixXd P;  // pre-activation Aprime * X
};

// Neighbor aggregation.
//   residual_mean: e'_i = x_i + GeLU(weighted mean of neighbor rows), and
//                  e'_i = x_i exactly when row i has zero total edge weight;
//   sym_normalized: E' = GeLU(normalize_adjacency(A) * X).
// Hard samples make the weighted mean an ordinary neighbor mean.
Eigen::MatrixXd message_pass(const Eigen::MatrixXd& X,
                             const SubgraphSample& sample, Aggregation mode,
                             MessagePassCache* cache = nullptr);

// Accumulates d loss / d X and d loss / d A (as a dense L x L matrix whose
// upper triangle holds the per-unordered-pair gradient) given d loss / d E'.
void message_pass_backward(const Eigen::MatrixXd& dE,
                           const SubgraphSample& sample,
                           const MessagePassCache& cache, Eigen::MatrixXd& dX,
                           Eigen::MatrixXd& dA);

// Row-wise scaling z_i = R[i] * e'_i.  Throws on length mismatch.
Eigen::MatrixXd apply_mask(const Eigen::MatrixXd& Eprime,
                           const MaskSample& mask);

struct LayerForwardCache {
  SubgraphSample A;
  MessagePassCache mp;
  Eigen::MatrixXd Eprime;
  MaskNetCache mn;
  MaskSample R;
};

// The full X -> Z transform: sample the in-sentence subgraph, aggregate, and
// (variant A_R) gate tokens with the sampled word mask.  Throws when variant
// A_R is requested without a mask network.
Eigen::MatrixXd wigraph_forward(const Eigen::MatrixXd& X,
                                const InteractionGraph& graph,
                                const MaskNet* masknet,
                                const TokenSequence& seq,
                                const LayerConfig& cfg, double temperature,
                                SampleMode mode, Rng& rng,
                                const EdgeSet* allowed = nullptr,
                                LayerForwardCache* cache = nullptr);

}  // namespace wigraph
