#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "wigraph/model.hpp"
#include "wigraph/rng.hpp"

using namespace wigraph;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.vocab_size = 8;
  cfg.num_classes = 2;
  cfg.max_len = 5;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 6;
  cfg.mask_hidden = 3;
  cfg.seed = 21;
  return cfg;
}

TokenSequence make_seq(std::vector<int> ids, int width) {
  TokenSequence seq;
  seq.length = static_cast<int>(ids.size());
  ids.resize(static_cast<size_t>(width), Vocabulary::kPad);
  seq.ids = std::move(ids);
  return seq;
}

bool models_equal(WiGraphModel& a, WiGraphModel& b) {
  auto ta = param_tensors(a), tb = param_tensors(b);
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || ta[i].size != tb[i].size) return false;
    for (size_t k = 0; k < ta[i].size; ++k) {
      if (ta[i].data[k] != tb[i].data[k]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("config validation rejects bad dimensions") {
  ModelConfig cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
  ModelConfig bad = cfg;
  bad.vocab_size = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.embed_dim = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.max_len = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("init_model is deterministic and pins the PAD embedding to zero") {
  ModelConfig cfg = tiny_config();
  WiGraphModel a = init_model(cfg);
  WiGraphModel b = init_model(cfg);
  CHECK(models_equal(a, b));
  CHECK(a.embedding.row(Vocabulary::kPad).isZero(0.0));
  CHECK(a.embedding.rows() == cfg.vocab_size);
  CHECK(a.embedding.cols() == cfg.embed_dim);
  CHECK(a.graph.vocab_size() == cfg.vocab_size);
  CHECK(a.masknet.empty());  // variant A has no mask network

  ModelConfig other = cfg;
  other.seed = 22;
  WiGraphModel c = init_model(other);
  CHECK_FALSE(a.embedding.isApprox(c.embedding, 1e-12));

  ModelConfig ar = cfg;
  ar.layer.variant = Variant::A_R;
  WiGraphModel d = init_model(ar);
  CHECK_FALSE(d.masknet.empty());
  CHECK(d.masknet.hidden_dim() == cfg.mask_hidden);
  // Shared streams: embedding identical whether or not a masknet exists.
  CHECK(d.embedding == a.embedding);
}

TEST_CASE("embed_tokens looks rows up and zeroes PAD positions") {
  WiGraphModel m = init_model(tiny_config());
  TokenSequence pads = make_seq({}, 5);
  CHECK(embed_tokens(m, pads).isZero(0.0));

  TokenSequence seq = make_seq({3, 5, 3}, 5);
  Eigen::MatrixXd X = embed_tokens(m, seq);
  CHECK(X.rows() == 5);
  CHECK(X.cols() == 4);
  CHECK(X.row(0) == m.embedding.row(3));
  CHECK(X.row(1) == m.embedding.row(5));
  CHECK(X.row(2) == m.embedding.row(3));
  CHECK(X.row(3).isZero(0.0));
  CHECK(X.row(4).isZero(0.0));
}

TEST_CASE("forward produces normalized, deterministic probabilities") {
  for (EncoderKind enc : {EncoderKind::mean_pool_mlp, EncoderKind::recurrent}) {
    ModelConfig cfg = tiny_config();
    cfg.encoder = enc;
    WiGraphModel m = init_model(cfg);
    TokenSequence seq = make_seq({2, 4, 6}, 5);

    ForwardResult r1 = forward(m, seq);
    CHECK(r1.probs.size() == 2);
    CHECK(r1.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(r1.degenerate);
    ForwardResult r2 = forward(m, seq);
    CHECK(r1.probs == r2.probs);  // hard inference is deterministic

    ForwardResult empty = forward(m, make_seq({}, 5));
    CHECK(empty.degenerate);
    CHECK(empty.probs(0) == 0.5);
    CHECK(empty.probs(1) == 0.5);
  }
}

TEST_CASE("soft forward requires an rng") {
  WiGraphModel m = init_model(tiny_config());
  TokenSequence seq = make_seq({2, 4}, 5);
  ForwardOptions opt;
  opt.mode = InferMode::train_soft;
  CHECK_THROWS_AS(forward(m, seq, opt), std::invalid_argument);
  Rng rng(3);
  opt.rng = &rng;
  ForwardResult r = forward(m, seq, opt);
  CHECK(r.probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("the no-edge layer model equals the layer-free model exactly") {
  ModelConfig with = tiny_config();
  WiGraphModel m = init_model(with);
  // Drive every edge to an exact zero sample.
  m.graph.gamma().setConstant(-1e6);

  WiGraphModel base = init_model(with);
  base.graph.gamma().setConstant(-1e6);
  base.cfg.use_layer = false;

  TokenSequence seq = make_seq({2, 4, 6, 2}, 5);
  ForwardResult rm = forward(m, seq);
  ForwardResult rb = forward(base, seq);
  CHECK(rm.probs == rb.probs);  // bitwise

  Rng ra(7), rc(7);
  ForwardOptions oa;
  oa.mode = InferMode::train_soft;
  oa.rng = &ra;
  ForwardOptions ob = oa;
  ob.rng = &rc;
  CHECK(forward(m, seq, oa).probs == forward(base, seq, ob).probs);
}

TEST_CASE("predict takes the argmax with ties to the lower class") {
  WiGraphModel m = init_model(tiny_config());
  TokenSequence seq = make_seq({2, 3}, 5);

  m.head_W.setZero();
  m.head_b << 0.0, 1.0;
  CHECK(predict(m, seq).label == 1);

  m.head_b << 0.0, 0.0;  // exact tie
  Prediction tie = predict(m, seq);
  CHECK(tie.label == 0);
  CHECK(tie.probs(0) == doctest::Approx(0.5).epsilon(1e-12));

  m.head_b << 2.0, 1.0;
  CHECK(predict(m, seq).label == 0);
}

TEST_CASE("softmax and nll are stable at extreme logits") {
  Eigen::VectorXd logits(3);
  logits << 1e4, 1e4 - 1, -1e4;
  Eigen::VectorXd p = softmax(logits);
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p(0) > p(1));
  CHECK(p(2) == 0.0);
  CHECK(std::isfinite(nll_from_logits(logits, 2)));

  Eigen::VectorXd small(2);
  small << 0.3, -0.2;
  const double direct = -std::log(softmax(small)(1));
  CHECK(nll_from_logits(small, 1) == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  ModelConfig cfg = tiny_config();
  cfg.layer.variant = Variant::A_R;
  cfg.encoder = EncoderKind::recurrent;
  WiGraphModel m = init_model(cfg);
  m.vocab.words = {"<pad>", "<unk>", "alpha", "beta", "gamma", "delta", "eps", "zeta"};
  for (size_t i = 0; i < m.vocab.words.size(); ++i) {
    m.vocab.index[m.vocab.words[i]] = static_cast<int>(i);
  }

  const std::string path = "/tmp/wigraph_test_model.ckpt";
  save_model(m, path);
  WiGraphModel back = load_model(path);
  CHECK(models_equal(m, back));
  CHECK(back.vocab.words == m.vocab.words);
  CHECK(back.cfg.vocab_size == cfg.vocab_size);
  CHECK(back.cfg.encoder == EncoderKind::recurrent);
  CHECK(back.cfg.layer.variant == Variant::A_R);

  TokenSequence seq = make_seq({2, 3, 4}, 5);
  CHECK(forward(m, seq).probs == forward(back, seq).probs);
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected without partial loads") {
  WiGraphModel m = init_model(tiny_config());
  const std::string path = "/tmp/wigraph_test_corrupt.ckpt";
  save_model(m, path);

  // Bad magic.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("NOTMAGIC", 8);
  }
  CHECK_THROWS_AS(load_model(path), std::runtime_error);

  // Truncation.
  save_model(m, path);
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full / 2);
  try {
    load_model(path);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  // Future version.
  save_model(m, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const uint64_t v = 999;
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  CHECK_THROWS_AS(load_model(path), std::runtime_error);
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_model("/nonexistent/m.ckpt"), std::runtime_error);
}

TEST_CASE("param and grad tensor tables stay aligned") {
  ModelConfig cfg = tiny_config();
  cfg.layer.variant = Variant::A_R;
  cfg.encoder = EncoderKind::recurrent;
  WiGraphModel m = init_model(cfg);
  ModelGrads g = zero_grads_like(m);
  auto pt = param_tensors(m);
  auto gt = grad_tensors(g, m);
  REQUIRE(pt.size() == gt.size());
  for (size_t i = 0; i < pt.size(); ++i) {
    CHECK(pt[i].name == gt[i].name);
    CHECK(pt[i].size == gt[i].size);
  }
  size_t total = 0;
  for (const auto& t : pt) total += t.size;
  const size_t expect =
      static_cast<size_t>(cfg.vocab_size * cfg.embed_dim) +      // embedding
      static_cast<size_t>(cfg.vocab_size * (cfg.vocab_size - 1) / 2) +  // gamma
      static_cast<size_t>(cfg.mask_hidden * cfg.embed_dim + cfg.mask_hidden +
                          cfg.mask_hidden + 1) +                 // masknet
      static_cast<size_t>(cfg.hidden_dim * cfg.embed_dim + cfg.hidden_dim) +
      static_cast<size_t>(cfg.hidden_dim * cfg.hidden_dim) +     // recurrent
      static_cast<size_t>(cfg.num_classes * cfg.hidden_dim + cfg.num_classes);
  CHECK(total == expect);
}
