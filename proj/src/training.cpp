#include "wigraph/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>

namespace wigraph {

const char* to_string(Optimizer o) {
  return o == Optimizer::sgd ? "sgd" : "adam";
}
const char* to_string(PriorKind p) {
  return p == PriorKind::bernoulli_const ? "bernoulli" : "cooccurrence";
}
Optimizer optimizer_from_string(const std::string& s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw std::invalid_argument("unknown optimizer: \"" + s + "\"");
}
PriorKind prior_from_string(const std::string& s) {
  if (s == "bernoulli") return PriorKind::bernoulli_const;
  if (s == "cooccurrence") return PriorKind::cooccurrence;
  throw std::invalid_argument("unknown edge prior: \"" + s + "\"");
}

void TrainConfig::validate() const {
  if (beta_g < 0 || beta_i < 0 || beta_sparse < 0) {
    throw std::invalid_argument("betas must be >= 0");
  }
  if (learning_rate <= 0) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (temp_init <= 0 || temp_floor <= 0) {
    throw std::invalid_argument("temperatures must be > 0");
  }
  if (temp_decay <= 0 || temp_decay > 1) {
    throw std::invalid_argument("temp_decay must be in (0, 1]");
  }
  if (anneal_factor <= 0 || anneal_factor > 1) {
    throw std::invalid_argument("anneal_factor must be in (0, 1]");
  }
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1 ||
      adam_eps <= 0) {
    throw std::invalid_argument("bad adam parameters");
  }
  if (prior_p0 <= 0 || prior_p0 >= 1) {
    throw std::invalid_argument("prior_p0 must be in (0, 1)");
  }
  if (prior_floor <= 0 || prior_floor >= 0.5) {
    throw std::invalid_argument("prior_floor must be in (0, 0.5)");
  }
  if (samples_per_example < 1) {
    throw std::invalid_argument("samples_per_example must be >= 1");
  }
}

AnnealState initial_anneal_state(const TrainConfig& cfg) {
  return {cfg.beta_g, cfg.beta_i, cfg.beta_sparse, cfg.temp_init};
}

void anneal(const TrainConfig& cfg, AnnealState& state, int epoch) {
  if (epoch < 1) throw std::invalid_argument("anneal: epoch must be >= 1");
  state.beta_g *= cfg.anneal_factor;
  state.beta_i *= cfg.anneal_factor;
  state.beta_sparse *= cfg.anneal_factor;
  state.temperature =
      std::max(cfg.temp_floor, cfg.temp_init * std::pow(cfg.temp_decay, epoch));
}

SampleNoise draw_sample_noise(const WiGraphModel& model,
                              const TokenSequence& seq, Rng& rng) {
  SampleNoise noise;
  if (!model.cfg.use_layer) return noise;
  for_each_eligible_pair(seq, [&](int, int) {
    const double g1 = rng.gumbel();
    const double g2 = rng.gumbel();
    noise.edge.push_back(g1 - g2);
  });
  if (model.cfg.layer.variant == Variant::A_R) {
    for (int t = 0; t < seq.length; ++t) {
      const double g1 = rng.gumbel();
      const double g2 = rng.gumbel();
      noise.mask.push_back(g1 - g2);
    }
  }
  return noise;
}

namespace {

struct SampleTerms {
  double nll = 0, h_a = 0, h_r = 0, l1 = 0;
};

// Forward and (optionally) backward for one example and one noise draw.
// Gradients are accumulated pre-scaled by `scale` = 1 / (batch * draws).
SampleTerms sample_loss_and_grad(const WiGraphModel& m,
                                 const TokenSequence& seq,
                                 const AnnealState& st, const EdgePrior& prior,
                                 const SampleNoise& noise, double scale,
                                 ModelGrads* grads) {
  SampleTerms terms;
  const ModelConfig& cfg = m.cfg;
  if (seq.label < 0 || seq.label >= cfg.num_classes) {
    throw std::invalid_argument("training sample without a valid label");
  }
  if (seq.length <= 0) {
    // Uniform prediction, constant loss, no gradient.
    terms.nll = std::log(static_cast<double>(cfg.num_classes));
    return terms;
  }
  const bool use_mask = cfg.use_layer && cfg.layer.variant == Variant::A_R;
  const int L = static_cast<int>(seq.ids.size());

  Eigen::MatrixXd X = embed_tokens(m, seq);
  std::vector<std::pair<int, int>> pairs;
  if (cfg.use_layer) {
    for_each_eligible_pair(seq, [&](int p, int q) { pairs.emplace_back(p, q); });
  }

  SubgraphSample A;
  MessagePassCache mp;
  Eigen::MatrixXd Eprime;
  MaskNetCache mn;
  MaskSample R;
  ForwardCache fc;
  fc.seq = seq;
  if (cfg.use_layer) {
    A = subgraph_from_noise(m.graph, seq, st.temperature, noise.edge);
    Eprime = message_pass(X, A, cfg.layer.aggregation, &mp);
    if (use_mask) {
      masknet_logits(m.masknet, X, seq.length, &mn);
      R = mask_from_noise(mn.logits, seq.length, st.temperature, noise.mask);
      fc.Z = apply_mask(Eprime, R);
    } else {
      fc.Z = Eprime;
    }
  } else {
    fc.Z = X;
  }
  encode_logits(m, fc.Z, seq.length, &fc);
  terms.nll = nll_from_logits(fc.logits, seq.label);

  if (cfg.use_layer) {
    for (const auto& [p, q] : pairs) {
      const int i = seq.ids[static_cast<size_t>(p)];
      const int j = seq.ids[static_cast<size_t>(q)];
      // ln2 - KL(edge_prob || prior): the Bernoulli entropy when the prior
      // is the non-informative 0.5.
      terms.h_a += M_LN2 - kl_bernoulli(m.graph.edge_prob(i, j), prior.prob(i, j));
    }
    terms.l1 = l1_sparsity(A);
    if (use_mask) {
      for (int t = 0; t < seq.length; ++t) {
        terms.h_r += bernoulli_entropy(sigmoid(mn.logits[t]));
      }
    }
  }
  if (grads == nullptr) return terms;

  // ---- backward ----
  Eigen::VectorXd dlogits = fc.probs;
  dlogits[seq.label] -= 1.0;
  dlogits *= scale;
  Eigen::MatrixXd dZ = encode_backward(m, fc, dlogits, *grads);
  Eigen::MatrixXd dX = Eigen::MatrixXd::Zero(L, cfg.embed_dim);

  if (!cfg.use_layer) {
    dX = dZ;
  } else {
    Eigen::MatrixXd dE;
    Eigen::VectorXd dmask_logit;
    if (use_mask) {
      dE = R.values.asDiagonal() * dZ;
      dmask_logit = Eigen::VectorXd::Zero(seq.length);
      for (int t = 0; t < seq.length; ++t) {
        const double dr = dZ.row(t).dot(Eprime.row(t));
        dmask_logit[t] += dr * gumbel_sigmoid_grad(R.values[t], st.temperature);
        // -beta_i * H(sigmoid(l)) term: dH/dl = -l p (1-p).
        const double l = mn.logits[t];
        const double p = sigmoid(l);
        dmask_logit[t] += scale * st.beta_i * l * p * (1.0 - p);
      }
    } else {
      dE = dZ;
    }

    Eigen::MatrixXd dA = Eigen::MatrixXd::Zero(L, L);
    message_pass_backward(dE, A, mp, dX, dA);
    for (const auto& [p, q] : pairs) {
      // + beta_sparse * |a_pq|, with a_pq >= 0 always.
      dA(p, q) += scale * st.beta_sparse;
    }
    for (const auto& [p, q] : pairs) {
      const int i = seq.ids[static_cast<size_t>(p)];
      const int j = seq.ids[static_cast<size_t>(q)];
      const Eigen::Index idx =
          static_cast<Eigen::Index>(m.graph.pair_index(i, j));
      // Through the concrete sample, noise fixed.
      grads->gamma[idx] +=
          dA(p, q) * gumbel_sigmoid_grad(A.values(p, q), st.temperature);
      // Through the closed-form divergence: d(-h_a)/dgamma.
      const double g = m.graph.gamma_at(i, j);
      const double pr = sigmoid(g);
      grads->gamma[idx] +=
          scale * st.beta_g * (g - logit(prior.prob(i, j))) * pr * (1.0 - pr);
    }
    if (use_mask) {
      for (int t = 0; t < seq.length; ++t) {
        const double dl = dmask_logit[t];
        grads->mask_w2 += dl * mn.h.row(t).transpose();
        grads->mask_b2[0] += dl;
        Eigen::VectorXd dh = dl * m.masknet.w2;
        Eigen::VectorXd dhpre = dh.cwiseProduct(
            mn.h_pre.row(t).transpose().unaryExpr(
                [](double v) { return gelu_grad(v); }));
        grads->mask_W1 += dhpre * X.row(t);
        grads->mask_b1 += dhpre;
        dX.row(t) += (m.masknet.W1.transpose() * dhpre).transpose();
      }
    }
  }

  for (int t = 0; t < L; ++t) {
    grads->embedding.row(seq.ids[static_cast<size_t>(t)]) += dX.row(t);
  }
  grads->embedding.row(Vocabulary::kPad).setZero();
  return terms;
}

void check_finite(const LossBreakdown& lb) {
  if (!std::isfinite(lb.nll)) throw NonFiniteLoss("nll", lb.nll);
  if (!std::isfinite(lb.h_a)) throw NonFiniteLoss("h_a", lb.h_a);
  if (!std::isfinite(lb.h_r)) throw NonFiniteLoss("h_r", lb.h_r);
  if (!std::isfinite(lb.l1)) throw NonFiniteLoss("l1", lb.l1);
  if (!std::isfinite(lb.total)) throw NonFiniteLoss("total", lb.total);
}

}  // namespace

LossBreakdown vib_wi_loss_with_noise(
    const WiGraphModel& model, const std::vector<TokenSequence>& batch,
    const AnnealState& state, const EdgePrior& prior,
    const std::vector<std::vector<SampleNoise>>& noise, ModelGrads* grads) {
  if (batch.empty()) throw std::invalid_argument("vib_wi_loss: empty batch");
  if (noise.size() != batch.size()) {
    throw std::invalid_argument("vib_wi_loss: one noise list per sample");
  }
  const size_t draws = noise.front().size();
  if (draws == 0) throw std::invalid_argument("vib_wi_loss: no noise draws");
  for (const auto& per_sample : noise) {
    if (per_sample.size() != draws) {
      throw std::invalid_argument("vib_wi_loss: uneven noise draw counts");
    }
  }
  const double scale = 1.0 / (static_cast<double>(batch.size()) *
                              static_cast<double>(draws));
  LossBreakdown lb;
  for (size_t m = 0; m < batch.size(); ++m) {
    for (size_t k = 0; k < draws; ++k) {
      SampleTerms t = sample_loss_and_grad(model, batch[m], state, prior,
                                           noise[m][k], scale, grads);
      lb.nll += t.nll * scale;
      lb.h_a += t.h_a * scale;
      lb.h_r += t.h_r * scale;
      lb.l1 += t.l1 * scale;
    }
  }
  lb.total = lb.nll - state.beta_g * lb.h_a - state.beta_i * lb.h_r +
             state.beta_sparse * lb.l1;
  check_finite(lb);
  return lb;
}

LossBreakdown vib_wi_loss(const WiGraphModel& model,
                          const std::vector<TokenSequence>& batch,
                          const TrainConfig& cfg, double temperature, Rng& rng,
                          const EdgePrior* prior) {
  cfg.validate();
  if (temperature <= 0) {
    throw std::invalid_argument("vib_wi_loss: temperature must be > 0");
  }
  AnnealState state = initial_anneal_state(cfg);
  state.temperature = temperature;
  EdgePrior fallback = EdgePrior::bernoulli_const(cfg.prior_p0);
  std::vector<std::vector<SampleNoise>> noise;
  noise.reserve(batch.size());
  for (const auto& seq : batch) {
    std::vector<SampleNoise> per_sample;
    for (int k = 0; k < cfg.samples_per_example; ++k) {
      per_sample.push_back(draw_sample_noise(model, seq, rng));
    }
    noise.push_back(std::move(per_sample));
  }
  return vib_wi_loss_with_noise(model, batch, state,
                                prior != nullptr ? *prior : fallback, noise,
                                nullptr);
}

double accuracy(const WiGraphModel& model, const Dataset& data) {
  if (data.samples.empty()) return 0.0;
  size_t hits = 0;
  for (const auto& seq : data.samples) {
    if (predict(model, seq).label == seq.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.samples.size());
}

double restricted_accuracy(const WiGraphModel& model, const Dataset& data,
                           const EdgeSet& allowed) {
  if (data.samples.empty()) return 0.0;
  ForwardOptions opt;
  opt.allowed = &allowed;
  size_t hits = 0;
  for (const auto& seq : data.samples) {
    const Eigen::VectorXd probs = forward(model, seq, opt).probs;
    int label = 0;
    for (int c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[label]) label = c;
    }
    if (label == seq.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.samples.size());
}

namespace {

double global_grad_norm(std::vector<TensorRef>& refs) {
  double sq = 0.0;
  for (const auto& ref : refs) {
    for (size_t n = 0; n < ref.size; ++n) sq += ref.data[n] * ref.data[n];
  }
  return std::sqrt(sq);
}

void apply_update(WiGraphModel& model, ModelGrads& grads, ModelGrads& adam_m,
                  ModelGrads& adam_v, int64_t step, const TrainConfig& cfg) {
  auto params = param_tensors(model);
  auto g = grad_tensors(grads, model);
  if (cfg.optimizer == Optimizer::sgd) {
    for (size_t i = 0; i < params.size(); ++i) {
      for (size_t n = 0; n < params[i].size; ++n) {
        params[i].data[n] -= cfg.learning_rate * g[i].data[n];
      }
    }
    return;
  }
  auto ms = grad_tensors(adam_m, model);
  auto vs = grad_tensors(adam_v, model);
  const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
  for (size_t i = 0; i < params.size(); ++i) {
    for (size_t n = 0; n < params[i].size; ++n) {
      const double grad = g[i].data[n];
      double& m = ms[i].data[n];
      double& v = vs[i].data[n];
      m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
      v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad * grad;
      params[i].data[n] -=
          cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps);
    }
  }
}

}  // namespace

TrainHistory train(WiGraphModel& model, const SplitDataset& data,
                   const TrainConfig& cfg) {
  cfg.validate();
  model.cfg.validate();
  if (data.train.samples.empty()) {
    throw std::invalid_argument("train: training split is empty");
  }
  if (data.dev.samples.empty()) {
    throw std::invalid_argument("train: dev split is empty");
  }
  TrainHistory hist;
  if (cfg.epochs == 0) return hist;

  std::optional<CooccurrenceMatrix> cooc;
  EdgePrior prior = EdgePrior::bernoulli_const(cfg.prior_p0);
  if (cfg.prior_kind == PriorKind::cooccurrence) {
    cooc.emplace(build_cooccurrence(data.train, model.cfg.vocab_size));
    prior = EdgePrior::cooccurrence(&*cooc, cfg.prior_floor);
  }

  const size_t N = data.train.samples.size();
  const size_t B = static_cast<size_t>(cfg.batch_size);
  ModelGrads grads = zero_grads_like(model);
  ModelGrads adam_m = zero_grads_like(model);
  ModelGrads adam_v = zero_grads_like(model);
  int64_t adam_step = 0;
  AnnealState st = initial_anneal_state(cfg);
  std::vector<size_t> order(N);
  std::iota(order.begin(), order.end(), size_t{0});
  WiGraphModel best;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle",
                                static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double nll_sum = 0, ha_sum = 0, hr_sum = 0, l1_sum = 0;
    bool aborted = false;
    uint64_t step = 0;
    for (size_t start = 0; start < N; start += B, ++step) {
      const size_t stop = std::min(N, start + B);
      std::vector<TokenSequence> batch;
      batch.reserve(stop - start);
      for (size_t n = start; n < stop; ++n) {
        batch.push_back(data.train.samples[order[n]]);
      }
      Rng noise_rng(derive_seed(cfg.seed, "train.noise",
                                static_cast<uint64_t>(epoch), step));
      std::vector<std::vector<SampleNoise>> noise;
      noise.reserve(batch.size());
      for (const auto& seq : batch) {
        std::vector<SampleNoise> per_sample;
        for (int k = 0; k < cfg.samples_per_example; ++k) {
          per_sample.push_back(draw_sample_noise(model, seq, noise_rng));
        }
        noise.push_back(std::move(per_sample));
      }
      grads.set_zero();
      LossBreakdown lb;
      try {
        lb = vib_wi_loss_with_noise(model, batch, st, prior, noise, &grads);
      } catch (const NonFiniteLoss& err) {
        hist.diverged = true;
        hist.divergence_note = err.what();
        aborted = true;
        break;
      }
      const double bs = static_cast<double>(batch.size());
      nll_sum += lb.nll * bs;
      ha_sum += lb.h_a * bs;
      hr_sum += lb.h_r * bs;
      l1_sum += lb.l1 * bs;

      if (model.cfg.freeze_embeddings) grads.embedding.setZero();
      auto grefs = grad_tensors(grads, model);
      if (cfg.grad_clip > 0) {
        const double norm = global_grad_norm(grefs);
        if (norm > cfg.grad_clip) {
          const double rescale = cfg.grad_clip / norm;
          for (auto& ref : grefs) {
            for (size_t n = 0; n < ref.size; ++n) ref.data[n] *= rescale;
          }
        }
      }
      apply_update(model, grads, adam_m, adam_v, ++adam_step, cfg);
    }
    if (aborted) break;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.nll = nll_sum / static_cast<double>(N);
    rec.h_a = ha_sum / static_cast<double>(N);
    rec.h_r = hr_sum / static_cast<double>(N);
    rec.l1 = l1_sum / static_cast<double>(N);
    rec.train_acc = accuracy(model, data.train);
    rec.dev_acc = accuracy(model, data.dev);
    rec.temperature = st.temperature;
    rec.beta_g = st.beta_g;
    rec.beta_i = st.beta_i;
    rec.beta_sparse = st.beta_sparse;
    hist.epochs.push_back(rec);

    if (hist.best_epoch == 0 || rec.dev_acc > hist.best_dev_acc) {
      hist.best_epoch = epoch;
      hist.best_dev_acc = rec.dev_acc;
      best = model;
    }
    anneal(cfg, st, epoch);
  }

  if (hist.best_epoch > 0) model = best;  // keep the best-dev parameters
  return hist;
}

void write_history_csv(const TrainHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history: " + path);
  out << "epoch,nll,h_a,h_r,l1,train_acc,dev_acc,temperature,beta_g,beta_i,"
         "beta_sparse\n";
  char buf[512];
  for (const auto& r : history.epochs) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                  "%.17g\n",
                  r.epoch, r.nll, r.h_a, r.h_r, r.l1, r.train_acc, r.dev_acc,
                  r.temperature, r.beta_g, r.beta_i, r.beta_sparse);
    out << buf;
  }
}

}  // namespace wigraph
