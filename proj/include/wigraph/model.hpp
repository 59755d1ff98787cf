#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "wigraph/corpus.hpp"
#include "wigraph/layer.hpp"

namespace wigraph {

enum class EncoderKind { mean_pool_mlp, recurrent };
enum class InferMode { train_soft, infer_hard };

const char* to_string(Variant v);
const char* to_string(Aggregation a);
const char* to_string(EncoderKind e);
const char* to_string(InteractionGraph::Init i);
Variant variant_from_string(const std::string& s);
Aggregation aggregation_from_string(const std::string& s);
EncoderKind encoder_from_string(const std::string& s);
InteractionGraph::Init gamma_init_from_string(const std::string& s);

struct ModelConfig {
  int vocab_size = 0;
  int num_classes = 0;
  int max_len = 0;      // padded sequence width L
  int embed_dim = 64;   // d
  int hidden_dim = 64;  // encoder hidden width
  int mask_hidden = 64; // mask network hidden width (variant A_R)
  EncoderKind encoder = EncoderKind::mean_pool_mlp;
  LayerConfig layer;
  bool use_layer = true;  // false: plain base classifier, no interaction layer
  bool freeze_embeddings = false;
  InteractionGraph::Init gamma_init = InteractionGraph::Init::zeros;
  double gamma_sigma = 0.01;
  uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument on bad dimensions
};

// The classifier: embedding -> (interaction layer) -> encoder -> head.
struct WiGraphModel {
  ModelConfig cfg;
  Vocabulary vocab;  // may be empty for in-memory synthetic data

  Eigen::MatrixXd embedding;  // V x d; the PAD row is pinned to zero
  InteractionGraph graph{2};
  MaskNet masknet;          // empty unless variant A_R
  Eigen::MatrixXd enc_W1;   // hidden x d (input weights)
  Eigen::VectorXd enc_b1;   // hidden
  Eigen::MatrixXd enc_Wr;   // hidden x hidden, recurrent encoder only
  Eigen::MatrixXd head_W;   // C x hidden
  Eigen::VectorXd head_b;   // C
};

// Fresh model with parameters drawn from substreams of cfg.seed, so two
// models built from the same config are identical.
WiGraphModel init_model(const ModelConfig& cfg);

// Flat named view over every parameter tensor, in a fixed order shared with
// grad_tensors.  Backs the optimizer, the finite-difference checks and the
// checkpoint writer.
struct TensorRef {
  std::string name;
  double* data;
  size_t size;
};
std::vector<TensorRef> param_tensors(WiGraphModel& model);

// Gradient (or optimizer-state) buffers shaped like the model parameters.
struct ModelGrads {
  Eigen::MatrixXd embedding;
  Eigen::VectorXd gamma;
  Eigen::MatrixXd mask_W1;
  Eigen::VectorXd mask_b1, mask_w2, mask_b2;
  Eigen::MatrixXd enc_W1;
  Eigen::VectorXd enc_b1;
  Eigen::MatrixXd enc_Wr;
  Eigen::MatrixXd head_W;
  Eigen::VectorXd head_b;

  void set_zero();
};
ModelGrads zero_grads_like(const WiGraphModel& model);
std::vector<TensorRef> grad_tensors(ModelGrads& grads, const WiGraphModel& model);

// Embedding lookup; rows past seq.length are the (zero) PAD embedding.
Eigen::MatrixXd embed_tokens(const WiGraphModel& model,
                             const TokenSequence& seq);

struct ForwardCache {
  TokenSequence seq;
  Eigen::MatrixXd X;
  bool layer_used = false;
  LayerForwardCache layer;
  Eigen::MatrixXd Z;
  // mean_pool_mlp
  Eigen::VectorXd pool, enc_pre, enc_h;
  // recurrent
  std::vector<Eigen::VectorXd> rnn_h;  // hidden states, one per real token
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
  bool degenerate = false;
};

struct ForwardOptions {
  InferMode mode = InferMode::infer_hard;
  double temperature = 1.0;
  Rng* rng = nullptr;                   // required in train_soft mode
  const EdgeSet* allowed = nullptr;     // restrict inference to these edges
  const std::vector<int>* zero_rows = nullptr;  // zero-embedding ablation
};

struct ForwardResult {
  Eigen::VectorXd probs;
  bool degenerate = false;  // zero-length input; probs are uniform
};

// Full forward pass; probabilities sum to one.  Zero-length sequences give
// the uniform distribution and set the degenerate flag instead of failing.
ForwardResult forward(const WiGraphModel& model, const TokenSequence& seq,
                      const ForwardOptions& opt = {},
                      ForwardCache* cache = nullptr);

struct Prediction {
  int label = 0;
  Eigen::VectorXd probs;
  bool degenerate = false;
};

// Hard-inference argmax; ties go to the lowest class index.
Prediction predict(const WiGraphModel& model, const TokenSequence& seq);

// Encoder + head on the layer output Z (logits, pre-softmax).  Shared by
// forward and the training loss so the two cannot drift apart.
Eigen::VectorXd encode_logits(const WiGraphModel& model,
                              const Eigen::MatrixXd& Z, int length,
                              ForwardCache* cache = nullptr);

// Backward through head and encoder; accumulates into grads and returns
// d loss / d Z.
Eigen::MatrixXd encode_backward(const WiGraphModel& model,
                                const ForwardCache& cache,
                                const Eigen::VectorXd& dlogits,
                                ModelGrads& grads);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// -log softmax(logits)[label] via log-sum-exp.
double nll_from_logits(const Eigen::VectorXd& logits, int label);

// Versioned binary checkpoint (magic "WIGRAPH1"): config, vocabulary and all
// named parameter tensors, bit-exact on round trip.  load throws on a bad
// magic, version mismatch or truncation and never returns a partial model.
void save_model(const WiGraphModel& model, const std::string& path);
WiGraphModel load_model(const std::string& path);

}  // namespace wigraph
