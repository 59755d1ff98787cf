#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "wigraph/model.hpp"

namespace wigraph {

enum class Optimizer { sgd, adam };
enum class PriorKind { bernoulli_const, cooccurrence };

const char* to_string(Optimizer o);
const char* to_string(PriorKind p);
Optimizer optimizer_from_string(const std::string& s);
PriorKind prior_from_string(const std::string& s);

struct TrainConfig {
  double beta_g = 1e-3;      // edge-entropy weight
  double beta_i = 0.0;       // mask-entropy weight (variant A_R)
  double beta_sparse = 1e-2; // adjacency L1 weight
  double learning_rate = 1e-3;
  int batch_size = 64;
  int epochs = 10;
  double temp_init = 1.0;    // concrete-relaxation temperature schedule
  double temp_decay = 0.9;
  double temp_floor = 0.1;
  double anneal_factor = 0.1;  // per-epoch multiplier on all betas
  Optimizer optimizer = Optimizer::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 5.0;  // global-norm clip; <= 0 disables
  PriorKind prior_kind = PriorKind::bernoulli_const;
  double prior_p0 = 0.5;
  double prior_floor = 1e-4;
  int samples_per_example = 1;  // soft draws averaged per example per step
  uint64_t seed = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double nll = 0, h_a = 0, h_r = 0, l1 = 0;
  double train_acc = 0, dev_acc = 0;
  double temperature = 0, beta_g = 0, beta_i = 0, beta_sparse = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based; 0 when no epoch completed
  double best_dev_acc = 0.0;
  bool diverged = false;
  std::string divergence_note;
};

// CSV with header epoch,nll,h_a,h_r,l1,train_acc,dev_acc,temperature,beta_g,
// beta_i,beta_sparse; doubles printed with %.17g so values round-trip.
void write_history_csv(const TrainHistory& history, const std::string& path);

// Per-batch loss means.  The decomposition identity
//   total == nll - beta_g * h_a - beta_i * h_r + beta_sparse * l1
// holds exactly because total is computed from these components.  h_a is the
// per-pair ln2 - KL(edge_prob || prior): with the Bernoulli(0.5) prior this
// is exactly the Bernoulli entropy of the edge probability.
struct LossBreakdown {
  double total = 0, nll = 0, h_a = 0, h_r = 0, l1 = 0;
};

// Thrown when a loss component evaluates non-finite.
class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& component, double value)
      : std::runtime_error("non-finite loss component \"" + component +
                           "\" = " + std::to_string(value)),
        component_(component) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

// Betas and temperature live in mutable schedule state; epoch e runs with
// the values present before anneal(e) is applied.
struct AnnealState {
  double beta_g = 0, beta_i = 0, beta_sparse = 0;
  double temperature = 1.0;
};
AnnealState initial_anneal_state(const TrainConfig& cfg);

// After epoch `epoch` (1-based): betas *= anneal_factor, temperature =
// max(floor, init * decay^epoch).
void anneal(const TrainConfig& cfg, AnnealState& state, int epoch);

// Concrete-relaxation noise for one example: one Gumbel difference per
// eligible edge position pair (row-major order) and, for variant A_R, one
// per real token.
struct SampleNoise {
  std::vector<double> edge;
  std::vector<double> mask;
};
SampleNoise draw_sample_noise(const WiGraphModel& model,
                              const TokenSequence& seq, Rng& rng);

// Loss (and optionally gradients) with caller-supplied noise: noise[m][k] is
// draw k for batch sample m.  Used by the training loop and by the
// finite-difference oracle, which must evaluate the loss at fixed noise.
LossBreakdown vib_wi_loss_with_noise(
    const WiGraphModel& model, const std::vector<TokenSequence>& batch,
    const AnnealState& state, const EdgePrior& prior,
    const std::vector<std::vector<SampleNoise>>& noise,
    ModelGrads* grads = nullptr);

// Spec-level entry point: soft mode, betas from cfg, noise drawn from rng.
// A pair-dependent prior can be supplied explicitly; the default is the
// config's constant Bernoulli prior.
LossBreakdown vib_wi_loss(const WiGraphModel& model,
                          const std::vector<TokenSequence>& batch,
                          const TrainConfig& cfg, double temperature, Rng& rng,
                          const EdgePrior* prior = nullptr);

// Hard-inference accuracy over a dataset (empty dataset -> 0).
double accuracy(const WiGraphModel& model, const Dataset& data);

// As accuracy, but inference only sees edges in `allowed`.
double restricted_accuracy(const WiGraphModel& model, const Dataset& data,
                           const EdgeSet& allowed);

// Minibatch optimization with per-epoch annealing.  Deterministic given
// (seed, config, data): shuffles and sampling noise come from named
// substreams of cfg.seed.  The best-dev parameters are restored into the
// model on return.  A non-finite loss stops training and sets
// history.diverged instead of throwing.
TrainHistory train(WiGraphModel& model, const SplitDataset& data,
                   const TrainConfig& cfg);

}  // namespace wigraph
