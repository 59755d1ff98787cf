#pragma once

#include <functional>
#include <string>
#include <vector>

#include "wigraph/model.hpp"

namespace wigraph {

enum class AttributionMethod { occlusion, lime, sample_shapley };
const char* to_string(AttributionMethod m);
AttributionMethod attribution_from_string(const std::string& s);

// Token deletion semantics: `remove` shortens the sequence (canonical);
// `zero_embed` keeps the position but zeroes its embedding row.
enum class DeletionMode { remove, zero_embed };

struct AttributionParams {
  int n_samples = 500;        // lime mask draws
  double kernel_width = 5.0;  // lime exponential kernel on hamming distance
  double ridge = 1e-3;        // lime ridge strength (intercept unpenalized)
  int n_permutations = 50;    // sampled-Shapley permutations
  DeletionMode deletion = DeletionMode::remove;
};

struct AttributionResult {
  std::vector<double> token_scores;  // one per real token
  AttributionMethod method = AttributionMethod::occlusion;
  AttributionParams params;
  uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Method cores.  All three attributions and AOPC are defined over an opaque
// subset-value function v(keep) -> real, where keep is a 0/1 vector over the
// n real tokens.  The model adapter below supplies v as "probability of the
// full input's predicted class after deleting the dropped tokens"; tests
// plug in synthetic black boxes with known ground truth.
// ---------------------------------------------------------------------------

using SubsetValueFn = std::function<double(const std::vector<uint8_t>&)>;

// v evaluated with every token kept / every token dropped.
double full_value(const SubsetValueFn& v, int n);
double empty_value(const SubsetValueFn& v, int n);

// Leave-one-out: score_t = v(full) - v(full minus t).
std::vector<double> occlusion_scores(const SubsetValueFn& v, int n);

// Weighted ridge fit of v on uniformly sampled keep-masks; weight =
// exp(-hamming^2 / width^2) where hamming counts dropped tokens.  Returns the
// n feature coefficients.  Throws when n_samples < n.
std::vector<double> lime_scores(const SubsetValueFn& v, int n, int n_samples,
                                double kernel_width, double ridge, Rng& rng);

// Monte-Carlo Shapley over sampled insertion orders.
std::vector<double> shapley_scores(const SubsetValueFn& v, int n,
                                   int n_permutations, Rng& rng);

// Deterministic Shapley over all n! insertion orders (small n only).
std::vector<double> shapley_scores_exact(const SubsetValueFn& v, int n);

// AOPC for one sample given its attribution scores:
//   (1/(K+1)) * sum_{k=1..K} [v(full) - v(full minus top-k)],
// where tokens are dropped by score descending (ties: earlier position
// first).  Once everything is dropped further deletions contribute
// v(full) - v(empty).
double aopc_for_scores(const SubsetValueFn& v, const std::vector<double>& scores,
                       int n, int K);

// Subset evaluator for a model + sequence: fixes the predicted class on the
// full input, then maps keep-masks to that class's probability.  An empty
// keep-set hits the model's uniform zero-length fallback in `remove` mode.
SubsetValueFn subset_value_fn(const WiGraphModel& model,
                              const TokenSequence& seq, DeletionMode mode);

// ---------------------------------------------------------------------------
// Spec-level operations.
// ---------------------------------------------------------------------------

AttributionResult occlusion_attribution(const WiGraphModel& model,
                                        const TokenSequence& seq,
                                        DeletionMode mode = DeletionMode::remove);

AttributionResult lime_attribution(const WiGraphModel& model,
                                   const TokenSequence& seq, int n_samples,
                                   double kernel_width, Rng& rng,
                                   double ridge = 1e-3,
                                   DeletionMode mode = DeletionMode::remove);

AttributionResult shapley_attribution(const WiGraphModel& model,
                                      const TokenSequence& seq,
                                      int n_permutations, Rng& rng,
                                      DeletionMode mode = DeletionMode::remove);

// Dispatch on method; rng is only consumed by the stochastic methods.
AttributionResult attribute(const WiGraphModel& model, const TokenSequence& seq,
                            AttributionMethod method,
                            const AttributionParams& params, Rng& rng);

// Attribution for every sample of a slice.  Each sample draws from its own
// substream derived from (seed, sample index), so results are identical for
// any `jobs` count and any thread schedule.
std::vector<AttributionResult> attribute_all(
    const WiGraphModel& model, const std::vector<TokenSequence>& slice,
    AttributionMethod method, const AttributionParams& params, uint64_t seed,
    int jobs = 1);

struct MetricReport {
  std::string metric;  // aopc | ios | accuracy | correlation
  double value = 0;
  double param = 0;  // K for aopc, k for ios, 0 otherwise
  int n_samples = 0;
  uint64_t seed = 0;
};

// Mean AOPC over the slice under the given attribution method.
MetricReport aopc(const WiGraphModel& model,
                  const std::vector<TokenSequence>& slice,
                  AttributionMethod method, int K,
                  const AttributionParams& params, uint64_t seed, int jobs = 1);

// Fraction of samples whose hard prediction is unchanged when inference may
// only use the k most probable global edges.
MetricReport ios(const WiGraphModel& model,
                 const std::vector<TokenSequence>& slice, size_t k);

// Pearson correlation between learned edge probabilities and corpus
// co-occurrence probabilities over pairs that co-occur at least once.
// Throws when fewer than 2 such pairs exist or either side has zero
// variance.
MetricReport interaction_correlation(const InteractionGraph& graph,
                                     const CooccurrenceMatrix& cooc);

// TSV `word_i<TAB>word_j<TAB>edge_prob` (6 decimals), strongest first.
void export_interactions(const InteractionGraph& graph, const Vocabulary& vocab,
                         size_t k, const std::string& path);

// CSV `metric,value,param,n_samples,seed` with one row per report.
void write_metric_csv(const std::vector<MetricReport>& reports,
                      const std::string& path);

// JSONL rows {"tokens": [...], "scores": [...], "method": ..., "seed": ...};
// tokens[i] must align with results[i].
void write_attributions_jsonl(const std::vector<AttributionResult>& results,
                              const std::vector<std::vector<std::string>>& tokens,
                              const std::string& path);

}  // namespace wigraph
