#include "wigraph/explain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace wigraph {

const char* to_string(AttributionMethod m) {
  switch (m) {
    case AttributionMethod::occlusion: return "occlusion";
    case AttributionMethod::lime: return "lime";
    case AttributionMethod::sample_shapley: return "sample_shapley";
  }
  return "?";
}

AttributionMethod attribution_from_string(const std::string& s) {
  if (s == "occlusion") return AttributionMethod::occlusion;
  if (s == "lime") return AttributionMethod::lime;
  if (s == "sample_shapley" || s == "shapley") {
    return AttributionMethod::sample_shapley;
  }
  throw std::invalid_argument("unknown attribution method: \"" + s + "\"");
}

double full_value(const SubsetValueFn& v, int n) {
  return v(std::vector<uint8_t>(static_cast<size_t>(n), 1));
}
double empty_value(const SubsetValueFn& v, int n) {
  return v(std::vector<uint8_t>(static_cast<size_t>(n), 0));
}

std::vector<double> occlusion_scores(const SubsetValueFn& v, int n) {
  const double base = full_value(v, n);
  std::vector<double> scores(static_cast<size_t>(n));
  std::vector<uint8_t> keep(static_cast<size_t>(n), 1);
  for (int t = 0; t < n; ++t) {
    keep[static_cast<size_t>(t)] = 0;
    scores[static_cast<size_t>(t)] = base - v(keep);
    keep[static_cast<size_t>(t)] = 1;
  }
  return scores;
}

std::vector<double> lime_scores(const SubsetValueFn& v, int n, int n_samples,
                                double kernel_width, double ridge, Rng& rng) {
  if (n_samples < n) {
    throw std::invalid_argument(
        "lime: n_samples must be at least the token count");
  }
  if (kernel_width <= 0) throw std::invalid_argument("lime: bad kernel width");
  // Design matrix column 0 is the intercept; the rest are the mask bits.
  const int dim = n + 1;
  Eigen::MatrixXd AtWA = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd AtWy = Eigen::VectorXd::Zero(dim);
  std::vector<uint8_t> keep(static_cast<size_t>(n));
  Eigen::VectorXd row(dim);
  for (int s = 0; s < n_samples; ++s) {
    int dropped = 0;
    for (int t = 0; t < n; ++t) {
      keep[static_cast<size_t>(t)] = rng.uniform() < 0.5 ? 1 : 0;
      if (keep[static_cast<size_t>(t)] == 0) ++dropped;
    }
    const double y = v(keep);
    const double w =
        std::exp(-static_cast<double>(dropped) * dropped /
                 (kernel_width * kernel_width));
    row[0] = 1.0;
    for (int t = 0; t < n; ++t) row[t + 1] = keep[static_cast<size_t>(t)];
    AtWA.noalias() += w * row * row.transpose();
    AtWy.noalias() += w * y * row;
  }
  for (int t = 1; t < dim; ++t) AtWA(t, t) += ridge;  // intercept unpenalized
  Eigen::VectorXd beta = AtWA.ldlt().solve(AtWy);
  return std::vector<double>(beta.data() + 1, beta.data() + dim);
}

namespace {

std::vector<double> shapley_accumulate(
    const SubsetValueFn& v, int n,
    const std::function<bool(std::vector<int>&)>& next_order, double norm) {
  std::vector<double> scores(static_cast<size_t>(n), 0.0);
  const double base = empty_value(v, n);
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<uint8_t> keep(static_cast<size_t>(n));
  while (next_order(order)) {
    std::fill(keep.begin(), keep.end(), 0);
    double prev = base;
    for (int pos : order) {
      keep[static_cast<size_t>(pos)] = 1;
      const double cur = v(keep);
      scores[static_cast<size_t>(pos)] += cur - prev;
      prev = cur;
    }
  }
  for (double& s : scores) s *= norm;
  return scores;
}

}  // namespace

std::vector<double> shapley_scores(const SubsetValueFn& v, int n,
                                   int n_permutations, Rng& rng) {
  if (n_permutations < 1) {
    throw std::invalid_argument("shapley: n_permutations must be >= 1");
  }
  int remaining = n_permutations;
  auto next_order = [&](std::vector<int>& order) {
    if (remaining-- <= 0) return false;
    rng.shuffle(order);
    return true;
  };
  return shapley_accumulate(v, n, next_order, 1.0 / n_permutations);
}

std::vector<double> shapley_scores_exact(const SubsetValueFn& v, int n) {
  if (n > 8) {
    throw std::invalid_argument("exact shapley is factorial; n capped at 8");
  }
  double total = 1.0;
  for (int t = 2; t <= n; ++t) total *= t;
  bool first = true;
  auto next_order = [&](std::vector<int>& order) {
    if (first) {
      std::sort(order.begin(), order.end());
      first = false;
      return true;
    }
    return std::next_permutation(order.begin(), order.end());
  };
  return shapley_accumulate(v, n, next_order, 1.0 / total);
}

double aopc_for_scores(const SubsetValueFn& v, const std::vector<double>& scores,
                       int n, int K) {
  if (K < 1) throw std::invalid_argument("aopc: K must be >= 1");
  if (static_cast<int>(scores.size()) != n) {
    throw std::invalid_argument("aopc: one score per token expected");
  }
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });  // stable: equal scores keep the earlier position first
  const double base = full_value(v, n);
  std::vector<uint8_t> keep(static_cast<size_t>(n), 1);
  double sum = 0.0;
  double current = base;
  for (int k = 1; k <= K; ++k) {
    if (k <= n) {
      keep[static_cast<size_t>(order[static_cast<size_t>(k - 1)])] = 0;
      current = v(keep);
    }
    // Past k == n the keep-set stays empty and each further deletion
    // contributes base - v(empty).
    sum += base - current;
  }
  return sum / static_cast<double>(K + 1);
}

SubsetValueFn subset_value_fn(const WiGraphModel& model,
                              const TokenSequence& seq, DeletionMode mode) {
  if (seq.length < 1) {
    throw std::invalid_argument("attribution needs at least one token");
  }
  const int cls = predict(model, seq).label;
  if (mode == DeletionMode::remove) {
    return [&model, seq, cls](const std::vector<uint8_t>& keep) {
      TokenSequence sub;
      sub.ids.assign(seq.ids.size(), Vocabulary::kPad);
      sub.label = seq.label;
      int m = 0;
      for (int t = 0; t < seq.length; ++t) {
        if (keep[static_cast<size_t>(t)]) {
          sub.ids[static_cast<size_t>(m++)] = seq.ids[static_cast<size_t>(t)];
        }
      }
      sub.length = m;
      return forward(model, sub).probs[cls];
    };
  }
  return [&model, seq, cls](const std::vector<uint8_t>& keep) {
    std::vector<int> zero_rows;
    for (int t = 0; t < seq.length; ++t) {
      if (!keep[static_cast<size_t>(t)]) zero_rows.push_back(t);
    }
    ForwardOptions opt;
    opt.zero_rows = &zero_rows;
    return forward(model, seq, opt).probs[cls];
  };
}

AttributionResult occlusion_attribution(const WiGraphModel& model,
                                        const TokenSequence& seq,
                                        DeletionMode mode) {
  AttributionResult res;
  res.method = AttributionMethod::occlusion;
  res.params.deletion = mode;
  res.token_scores = occlusion_scores(subset_value_fn(model, seq, mode),
                                      seq.length);
  return res;
}

AttributionResult lime_attribution(const WiGraphModel& model,
                                   const TokenSequence& seq, int n_samples,
                                   double kernel_width, Rng& rng, double ridge,
                                   DeletionMode mode) {
  AttributionResult res;
  res.method = AttributionMethod::lime;
  res.params.n_samples = n_samples;
  res.params.kernel_width = kernel_width;
  res.params.ridge = ridge;
  res.params.deletion = mode;
  res.token_scores = lime_scores(subset_value_fn(model, seq, mode), seq.length,
                                 n_samples, kernel_width, ridge, rng);
  return res;
}

AttributionResult shapley_attribution(const WiGraphModel& model,
                                      const TokenSequence& seq,
                                      int n_permutations, Rng& rng,
                                      DeletionMode mode) {
  AttributionResult res;
  res.method = AttributionMethod::sample_shapley;
  res.params.n_permutations = n_permutations;
  res.params.deletion = mode;
  res.token_scores = shapley_scores(subset_value_fn(model, seq, mode),
                                    seq.length, n_permutations, rng);
  return res;
}

AttributionResult attribute(const WiGraphModel& model, const TokenSequence& seq,
                            AttributionMethod method,
                            const AttributionParams& params, Rng& rng) {
  switch (method) {
    case AttributionMethod::occlusion:
      return occlusion_attribution(model, seq, params.deletion);
    case AttributionMethod::lime:
      return lime_attribution(model, seq, params.n_samples,
                              params.kernel_width, rng, params.ridge,
                              params.deletion);
    case AttributionMethod::sample_shapley:
      return shapley_attribution(model, seq, params.n_permutations, rng,
                                 params.deletion);
  }
  throw std::logic_error("unreachable");
}

namespace {

// Runs fn(i) for i in [0, count) on `jobs` threads.  Each index owns its
// output slot and rng stream, so the result is schedule-independent.
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn) {
  if (jobs <= 1 || count <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_threads = std::min<int>(jobs, static_cast<int>(count));
  threads.reserve(static_cast<size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<AttributionResult> attribute_all(
    const WiGraphModel& model, const std::vector<TokenSequence>& slice,
    AttributionMethod method, const AttributionParams& params, uint64_t seed,
    int jobs) {
  std::vector<AttributionResult> results(slice.size());
  parallel_for(slice.size(), jobs, [&](size_t i) {
    Rng rng(derive_seed(seed, "explain.sample", i));
    results[i] = attribute(model, slice[i], method, params, rng);
    results[i].seed = seed;
  });
  return results;
}

MetricReport aopc(const WiGraphModel& model,
                  const std::vector<TokenSequence>& slice,
                  AttributionMethod method, int K,
                  const AttributionParams& params, uint64_t seed, int jobs) {
  if (K < 1) throw std::invalid_argument("aopc: K must be >= 1");
  if (slice.empty()) throw std::invalid_argument("aopc: empty slice");
  for (const auto& seq : slice) {
    if (seq.length < 1) {
      throw std::invalid_argument("aopc: every sample needs >= 1 token");
    }
  }
  std::vector<double> per_sample(slice.size());
  parallel_for(slice.size(), jobs, [&](size_t i) {
    Rng rng(derive_seed(seed, "explain.sample", i));
    AttributionResult attr = attribute(model, slice[i], method, params, rng);
    SubsetValueFn v = subset_value_fn(model, slice[i], params.deletion);
    per_sample[i] = aopc_for_scores(v, attr.token_scores, slice[i].length, K);
  });
  MetricReport rep;
  rep.metric = "aopc";
  rep.value = std::accumulate(per_sample.begin(), per_sample.end(), 0.0) /
              static_cast<double>(per_sample.size());
  rep.param = K;
  rep.n_samples = static_cast<int>(slice.size());
  rep.seed = seed;
  return rep;
}

MetricReport ios(const WiGraphModel& model,
                 const std::vector<TokenSequence>& slice, size_t k) {
  if (slice.empty()) throw std::invalid_argument("ios: empty slice");
  EdgeSet allowed;
  for (const auto& e : top_k_edges(model.graph, k)) allowed.insert(e.i, e.j);
  ForwardOptions opt;
  opt.allowed = &allowed;
  size_t agree = 0;
  for (const auto& seq : slice) {
    const int full = predict(model, seq).label;
    const Eigen::VectorXd probs = forward(model, seq, opt).probs;
    int restricted = 0;
    for (int c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[restricted]) restricted = c;
    }
    if (full == restricted) ++agree;
  }
  MetricReport rep;
  rep.metric = "ios";
  rep.value = static_cast<double>(agree) / static_cast<double>(slice.size());
  rep.param = static_cast<double>(k);
  rep.n_samples = static_cast<int>(slice.size());
  return rep;
}

MetricReport interaction_correlation(const InteractionGraph& graph,
                                     const CooccurrenceMatrix& cooc) {
  if (graph.vocab_size() != cooc.vocab_size()) {
    throw std::invalid_argument(
        "correlation: graph and co-occurrence vocabulary sizes differ");
  }
  std::vector<double> xs, ys;
  cooc.for_each_pair([&](int i, int j, int64_t count) {
    if (count <= 0) return;
    xs.push_back(graph.edge_prob(i, j));
    ys.push_back(cooc.prob(i, j));
  });
  if (xs.size() < 2) {
    throw std::invalid_argument(
        "correlation undefined: fewer than two co-occurring pairs");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t t = 0; t < xs.size(); ++t) {
    sxy += (xs[t] - mx) * (ys[t] - my);
    sxx += (xs[t] - mx) * (xs[t] - mx);
    syy += (ys[t] - my) * (ys[t] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("correlation undefined: zero variance");
  }
  MetricReport rep;
  rep.metric = "correlation";
  rep.value = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  rep.n_samples = static_cast<int>(xs.size());
  return rep;
}

void export_interactions(const InteractionGraph& graph, const Vocabulary& vocab,
                         size_t k, const std::string& path) {
  if (k < 1) throw std::invalid_argument("export_interactions: k must be >= 1");
  if (vocab.size() != graph.vocab_size()) {
    throw std::invalid_argument(
        "export_interactions: vocabulary does not match the graph");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write interactions: " + path);
  char buf[64];
  for (const auto& e : top_k_edges(graph, k)) {
    std::snprintf(buf, sizeof(buf), "%.6f", e.prob);
    out << vocab.words[static_cast<size_t>(e.i)] << '\t'
        << vocab.words[static_cast<size_t>(e.j)] << '\t' << buf << '\n';
  }
  if (!out) throw std::runtime_error("short write on interactions: " + path);
}

void write_metric_csv(const std::vector<MetricReport>& reports,
                      const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write metrics: " + path);
  out << "metric,value,param,n_samples,seed\n";
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d,%llu\n",
                  r.metric.c_str(), r.value, r.param, r.n_samples,
                  static_cast<unsigned long long>(r.seed));
    out << buf;
  }
}

void write_attributions_jsonl(const std::vector<AttributionResult>& results,
                              const std::vector<std::vector<std::string>>& tokens,
                              const std::string& path) {
  if (results.size() != tokens.size()) {
    throw std::invalid_argument("one token list per attribution expected");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write attributions: " + path);
  for (size_t i = 0; i < results.size(); ++i) {
    nlohmann::json j = {{"tokens", tokens[i]},
                        {"scores", results[i].token_scores},
                        {"method", to_string(results[i].method)},
                        {"seed", results[i].seed}};
    out << j.dump() << "\n";
  }
}

}  // namespace wigraph
