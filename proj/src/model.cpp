#include "wigraph/model.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace wigraph {

const char* to_string(Variant v) { return v == Variant::A ? "A" : "A_R"; }
const char* to_string(Aggregation a) {
  return a == Aggregation::residual_mean ? "residual_mean" : "sym_normalized";
}
const char* to_string(EncoderKind e) {
  return e == EncoderKind::mean_pool_mlp ? "mean_pool_mlp" : "recurrent";
}
const char* to_string(InteractionGraph::Init i) {
  return i == InteractionGraph::Init::zeros ? "zeros" : "gaussian";
}

namespace {
[[noreturn]] void bad_enum(const std::string& what, const std::string& s) {
  throw std::invalid_argument("unknown " + what + ": \"" + s + "\"");
}
}  // namespace

Variant variant_from_string(const std::string& s) {
  if (s == "A") return Variant::A;
  if (s == "A_R") return Variant::A_R;
  bad_enum("layer variant", s);
}
Aggregation aggregation_from_string(const std::string& s) {
  if (s == "residual_mean") return Aggregation::residual_mean;
  if (s == "sym_normalized") return Aggregation::sym_normalized;
  bad_enum("aggregation mode", s);
}
EncoderKind encoder_from_string(const std::string& s) {
  if (s == "mean_pool_mlp") return EncoderKind::mean_pool_mlp;
  if (s == "recurrent") return EncoderKind::recurrent;
  bad_enum("encoder kind", s);
}
InteractionGraph::Init gamma_init_from_string(const std::string& s) {
  if (s == "zeros") return InteractionGraph::Init::zeros;
  if (s == "gaussian") return InteractionGraph::Init::gaussian;
  bad_enum("gamma init", s);
}

void ModelConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (embed_dim < 1 || hidden_dim < 1) {
    throw std::invalid_argument("embed_dim and hidden_dim must be >= 1");
  }
  if (layer.variant == Variant::A_R && mask_hidden < 1) {
    throw std::invalid_argument("mask_hidden must be >= 1 for variant A_R");
  }
  if (gamma_sigma < 0.0) throw std::invalid_argument("gamma_sigma must be >= 0");
}

WiGraphModel init_model(const ModelConfig& cfg) {
  cfg.validate();
  WiGraphModel m;
  m.cfg = cfg;

  Rng emb_rng(derive_seed(cfg.seed, "init.embedding"));
  m.embedding.resize(cfg.vocab_size, cfg.embed_dim);
  for (int r = 0; r < cfg.vocab_size; ++r) {
    for (int c = 0; c < cfg.embed_dim; ++c) {
      m.embedding(r, c) = 0.1 * emb_rng.gaussian();
    }
  }
  m.embedding.row(Vocabulary::kPad).setZero();

  Rng graph_rng(derive_seed(cfg.seed, "init.graph"));
  m.graph = init_interaction_graph(cfg.vocab_size, cfg.gamma_init, graph_rng,
                                   cfg.gamma_sigma);

  if (cfg.layer.variant == Variant::A_R) {
    Rng mask_rng(derive_seed(cfg.seed, "init.mask"));
    m.masknet = init_masknet(cfg.mask_hidden, cfg.embed_dim, mask_rng);
  }

  Rng enc_rng(derive_seed(cfg.seed, "init.encoder"));
  const double in_scale = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  m.enc_W1.resize(cfg.hidden_dim, cfg.embed_dim);
  for (int r = 0; r < cfg.hidden_dim; ++r) {
    for (int c = 0; c < cfg.embed_dim; ++c) {
      m.enc_W1(r, c) = in_scale * enc_rng.gaussian();
    }
  }
  m.enc_b1 = Eigen::VectorXd::Zero(cfg.hidden_dim);
  if (cfg.encoder == EncoderKind::recurrent) {
    const double rec_scale = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
    m.enc_Wr.resize(cfg.hidden_dim, cfg.hidden_dim);
    for (int r = 0; r < cfg.hidden_dim; ++r) {
      for (int c = 0; c < cfg.hidden_dim; ++c) {
        m.enc_Wr(r, c) = rec_scale * enc_rng.gaussian();
      }
    }
  }

  Rng head_rng(derive_seed(cfg.seed, "init.head"));
  m.head_W.resize(cfg.num_classes, cfg.hidden_dim);
  for (int r = 0; r < cfg.num_classes; ++r) {
    for (int c = 0; c < cfg.hidden_dim; ++c) {
      m.head_W(r, c) = 0.01 * head_rng.gaussian();
    }
  }
  m.head_b = Eigen::VectorXd::Zero(cfg.num_classes);
  return m;
}

namespace {

void push(std::vector<TensorRef>& refs, const std::string& name,
          Eigen::MatrixXd& t) {
  refs.push_back({name, t.data(), static_cast<size_t>(t.size())});
}
void push(std::vector<TensorRef>& refs, const std::string& name,
          Eigen::VectorXd& t) {
  refs.push_back({name, t.data(), static_cast<size_t>(t.size())});
}

}  // namespace

std::vector<TensorRef> param_tensors(WiGraphModel& m) {
  std::vector<TensorRef> refs;
  push(refs, "embedding", m.embedding);
  push(refs, "graph.gamma", m.graph.gamma());
  if (m.cfg.layer.variant == Variant::A_R) {
    push(refs, "mask.W1", m.masknet.W1);
    push(refs, "mask.b1", m.masknet.b1);
    push(refs, "mask.w2", m.masknet.w2);
    push(refs, "mask.b2", m.masknet.b2);
  }
  push(refs, "encoder.W1", m.enc_W1);
  push(refs, "encoder.b1", m.enc_b1);
  if (m.cfg.encoder == EncoderKind::recurrent) {
    push(refs, "encoder.Wr", m.enc_Wr);
  }
  push(refs, "head.W", m.head_W);
  push(refs, "head.b", m.head_b);
  return refs;
}

void ModelGrads::set_zero() {
  embedding.setZero();
  gamma.setZero();
  mask_W1.setZero();
  mask_b1.setZero();
  mask_w2.setZero();
  mask_b2.setZero();
  enc_W1.setZero();
  enc_b1.setZero();
  enc_Wr.setZero();
  head_W.setZero();
  head_b.setZero();
}

ModelGrads zero_grads_like(const WiGraphModel& m) {
  ModelGrads g;
  g.embedding = Eigen::MatrixXd::Zero(m.embedding.rows(), m.embedding.cols());
  g.gamma = Eigen::VectorXd::Zero(m.graph.gamma().size());
  if (m.cfg.layer.variant == Variant::A_R) {
    g.mask_W1 = Eigen::MatrixXd::Zero(m.masknet.W1.rows(), m.masknet.W1.cols());
    g.mask_b1 = Eigen::VectorXd::Zero(m.masknet.b1.size());
    g.mask_w2 = Eigen::VectorXd::Zero(m.masknet.w2.size());
    g.mask_b2 = Eigen::VectorXd::Zero(1);
  }
  g.enc_W1 = Eigen::MatrixXd::Zero(m.enc_W1.rows(), m.enc_W1.cols());
  g.enc_b1 = Eigen::VectorXd::Zero(m.enc_b1.size());
  if (m.cfg.encoder == EncoderKind::recurrent) {
    g.enc_Wr = Eigen::MatrixXd::Zero(m.enc_Wr.rows(), m.enc_Wr.cols());
  }
  g.head_W = Eigen::MatrixXd::Zero(m.head_W.rows(), m.head_W.cols());
  g.head_b = Eigen::VectorXd::Zero(m.head_b.size());
  return g;
}

std::vector<TensorRef> grad_tensors(ModelGrads& g, const WiGraphModel& m) {
  std::vector<TensorRef> refs;
  push(refs, "embedding", g.embedding);
  push(refs, "graph.gamma", g.gamma);
  if (m.cfg.layer.variant == Variant::A_R) {
    push(refs, "mask.W1", g.mask_W1);
    push(refs, "mask.b1", g.mask_b1);
    push(refs, "mask.w2", g.mask_w2);
    push(refs, "mask.b2", g.mask_b2);
  }
  push(refs, "encoder.W1", g.enc_W1);
  push(refs, "encoder.b1", g.enc_b1);
  if (m.cfg.encoder == EncoderKind::recurrent) {
    push(refs, "encoder.Wr", g.enc_Wr);
  }
  push(refs, "head.W", g.head_W);
  push(refs, "head.b", g.head_b);
  return refs;
}

Eigen::MatrixXd embed_tokens(const WiGraphModel& m, const TokenSequence& seq) {
  const int L = static_cast<int>(seq.ids.size());
  Eigen::MatrixXd X(L, m.cfg.embed_dim);
  for (int t = 0; t < L; ++t) {
    const int id = seq.ids[static_cast<size_t>(t)];
    if (id < 0 || id >= m.cfg.vocab_size) {
      throw std::out_of_range("token id outside the model vocabulary");
    }
    X.row(t) = m.embedding.row(id);
  }
  return X;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double nll_from_logits(const Eigen::VectorXd& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw std::out_of_range("label outside the class range");
  }
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits[label];
}

Eigen::VectorXd encode_logits(const WiGraphModel& m, const Eigen::MatrixXd& Z,
                              int length, ForwardCache* cache) {
  Eigen::VectorXd logits;
  if (m.cfg.encoder == EncoderKind::mean_pool_mlp) {
    Eigen::VectorXd pool = Eigen::VectorXd::Zero(m.cfg.embed_dim);
    for (int t = 0; t < length; ++t) pool += Z.row(t).transpose();
    pool /= static_cast<double>(length);
    Eigen::VectorXd pre = m.enc_W1 * pool + m.enc_b1;
    Eigen::VectorXd h = pre.unaryExpr([](double v) { return gelu(v); });
    logits = m.head_W * h + m.head_b;
    if (cache != nullptr) {
      cache->pool = std::move(pool);
      cache->enc_pre = std::move(pre);
      cache->enc_h = std::move(h);
    }
  } else {
    Eigen::VectorXd h = Eigen::VectorXd::Zero(m.cfg.hidden_dim);
    std::vector<Eigen::VectorXd> states;
    states.reserve(static_cast<size_t>(length));
    for (int t = 0; t < length; ++t) {
      Eigen::VectorXd pre = m.enc_W1 * Z.row(t).transpose() + m.enc_Wr * h + m.enc_b1;
      h = pre.array().tanh();
      states.push_back(h);
    }
    logits = m.head_W * h + m.head_b;
    if (cache != nullptr) cache->rnn_h = std::move(states);
  }
  if (cache != nullptr) {
    cache->logits = logits;
    cache->probs = softmax(logits);
  }
  return logits;
}

Eigen::MatrixXd encode_backward(const WiGraphModel& m, const ForwardCache& cache,
                                const Eigen::VectorXd& dlogits,
                                ModelGrads& grads) {
  const int length = cache.seq.length;
  Eigen::MatrixXd dZ = Eigen::MatrixXd::Zero(cache.Z.rows(), cache.Z.cols());
  if (m.cfg.encoder == EncoderKind::mean_pool_mlp) {
    grads.head_W += dlogits * cache.enc_h.transpose();
    grads.head_b += dlogits;
    Eigen::VectorXd dh = m.head_W.transpose() * dlogits;
    Eigen::VectorXd dpre = dh.cwiseProduct(
        cache.enc_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    grads.enc_W1 += dpre * cache.pool.transpose();
    grads.enc_b1 += dpre;
    Eigen::VectorXd dpool = m.enc_W1.transpose() * dpre;
    for (int t = 0; t < length; ++t) {
      dZ.row(t) = dpool.transpose() / static_cast<double>(length);
    }
  } else {
    grads.head_W += dlogits * cache.rnn_h.back().transpose();
    grads.head_b += dlogits;
    Eigen::VectorXd dh = m.head_W.transpose() * dlogits;
    for (int t = length - 1; t >= 0; --t) {
      const Eigen::VectorXd& h = cache.rnn_h[static_cast<size_t>(t)];
      Eigen::VectorXd da =
          dh.cwiseProduct((1.0 - h.array().square()).matrix());
      grads.enc_W1 += da * cache.Z.row(t);
      grads.enc_b1 += da;
      if (t > 0) {
        grads.enc_Wr += da * cache.rnn_h[static_cast<size_t>(t - 1)].transpose();
        dh = m.enc_Wr.transpose() * da;
      }
      dZ.row(t) = (m.enc_W1.transpose() * da).transpose();
    }
  }
  return dZ;
}

ForwardResult forward(const WiGraphModel& m, const TokenSequence& seq,
                      const ForwardOptions& opt, ForwardCache* cache) {
  m.cfg.validate();
  ForwardResult res;
  if (seq.length <= 0) {
    res.probs = Eigen::VectorXd::Constant(m.cfg.num_classes,
                                          1.0 / m.cfg.num_classes);
    res.degenerate = true;
    if (cache != nullptr) {
      cache->seq = seq;
      cache->degenerate = true;
      cache->probs = res.probs;
    }
    return res;
  }
  Eigen::MatrixXd X = embed_tokens(m, seq);
  if (opt.zero_rows != nullptr) {
    for (int t : *opt.zero_rows) {
      if (t >= 0 && t < X.rows()) X.row(t).setZero();
    }
  }
  Eigen::MatrixXd Z;
  bool layer_used = false;
  if (m.cfg.use_layer) {
    const SampleMode mode =
        opt.mode == InferMode::train_soft ? SampleMode::soft : SampleMode::hard;
    Rng* rng = opt.rng;
    Rng dummy(0);
    if (mode == SampleMode::soft && rng == nullptr) {
      throw std::invalid_argument("soft-mode forward needs an rng");
    }
    const MaskNet* mask =
        m.cfg.layer.variant == Variant::A_R ? &m.masknet : nullptr;
    Z = wigraph_forward(X, m.graph, mask, seq, m.cfg.layer, opt.temperature,
                        mode, rng != nullptr ? *rng : dummy, opt.allowed,
                        cache != nullptr ? &cache->layer : nullptr);
    layer_used = true;
  } else {
    Z = X;
  }
  if (cache != nullptr) {
    cache->seq = seq;
    cache->X = std::move(X);
    cache->layer_used = layer_used;
    cache->Z = Z;
    cache->degenerate = false;
  }
  Eigen::VectorXd logits = encode_logits(m, Z, seq.length, cache);
  res.probs = softmax(logits);
  return res;
}

Prediction predict(const WiGraphModel& m, const TokenSequence& seq) {
  ForwardResult r = forward(m, seq);
  Prediction p;
  p.probs = r.probs;
  p.degenerate = r.degenerate;
  p.label = 0;
  for (int c = 1; c < p.probs.size(); ++c) {
    if (p.probs[c] > p.probs[p.label]) p.label = c;  // strict: ties keep lowest
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint format, version 1.  All integers are little-endian uint64.
//   "WIGRAPH1" | version | config-JSON blob | vocab words | tensor table
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'W', 'I', 'G', 'R', 'A', 'P', 'H', '1'};
constexpr uint64_t kVersion = 1;

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (in.gcount() != 8) throw std::runtime_error("truncated checkpoint");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, uint64_t cap = 1ull << 32) {
  const uint64_t n = read_u64(in);
  if (n > cap) throw std::runtime_error("corrupt checkpoint: oversized field");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (static_cast<uint64_t>(in.gcount()) != n) {
    throw std::runtime_error("truncated checkpoint");
  }
  return s;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"num_classes", c.num_classes},
          {"max_len", c.max_len},
          {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},
          {"mask_hidden", c.mask_hidden},
          {"encoder", to_string(c.encoder)},
          {"variant", to_string(c.layer.variant)},
          {"aggregation", to_string(c.layer.aggregation)},
          {"use_layer", c.use_layer},
          {"freeze_embeddings", c.freeze_embeddings},
          {"gamma_init", to_string(c.gamma_init)},
          {"gamma_sigma", c.gamma_sigma},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.mask_hidden = j.at("mask_hidden").get<int>();
  c.encoder = encoder_from_string(j.at("encoder").get<std::string>());
  c.layer.variant = variant_from_string(j.at("variant").get<std::string>());
  c.layer.aggregation =
      aggregation_from_string(j.at("aggregation").get<std::string>());
  c.use_layer = j.at("use_layer").get<bool>();
  c.freeze_embeddings = j.at("freeze_embeddings").get<bool>();
  c.gamma_init = gamma_init_from_string(j.at("gamma_init").get<std::string>());
  c.gamma_sigma = j.at("gamma_sigma").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

}  // namespace

void save_model(const WiGraphModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 8);
  write_u64(out, kVersion);
  write_string(out, config_to_json(model.cfg).dump());
  write_u64(out, model.vocab.words.size());
  for (const auto& w : model.vocab.words) write_string(out, w);
  // Tensors, in param_tensors order.  Raw doubles in Eigen storage order.
  auto& mutable_model = const_cast<WiGraphModel&>(model);
  auto refs = param_tensors(mutable_model);
  write_u64(out, refs.size());
  for (const auto& ref : refs) {
    write_string(out, ref.name);
    write_u64(out, ref.size);
    out.write(reinterpret_cast<const char*>(ref.data),
              static_cast<std::streamsize>(ref.size * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

WiGraphModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a model checkpoint (bad magic): " + path);
  }
  const uint64_t version = read_u64(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + " in " + path);
  }
  nlohmann::json cfg_json;
  try {
    cfg_json = nlohmann::json::parse(read_string(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("corrupt checkpoint config: ") +
                             e.what());
  }
  ModelConfig cfg = config_from_json(cfg_json);
  WiGraphModel model = init_model(cfg);  // right shapes; values overwritten
  const uint64_t vocab_count = read_u64(in);
  model.vocab = Vocabulary{};
  for (uint64_t n = 0; n < vocab_count; ++n) {
    std::string w = read_string(in);
    model.vocab.index.emplace(w, model.vocab.size());
    model.vocab.words.push_back(std::move(w));
  }
  const uint64_t tensor_count = read_u64(in);
  auto refs = param_tensors(model);
  if (tensor_count != refs.size()) {
    throw std::runtime_error("checkpoint tensor table mismatch in " + path);
  }
  for (auto& ref : refs) {
    const std::string name = read_string(in);
    const uint64_t size = read_u64(in);
    if (name != ref.name || size != ref.size) {
      throw std::runtime_error("checkpoint tensor \"" + name +
                               "\" does not match model layout in " + path);
    }
    in.read(reinterpret_cast<char*>(ref.data),
            static_cast<std::streamsize>(size * sizeof(double)));
    if (static_cast<uint64_t>(in.gcount()) != size * sizeof(double)) {
      throw std::runtime_error("truncated checkpoint");
    }
  }
  return model;
}

}  // namespace wigraph
