#include "wigraph/layer.hpp"

#include <stdexcept>

namespace wigraph {

MaskNet init_masknet(int hidden_dim, int embed_dim, Rng& rng) {
  if (hidden_dim < 1 || embed_dim < 1) {
    throw std::invalid_argument("mask network dimensions must be positive");
  }
  MaskNet net;
  const double scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  net.W1.resize(hidden_dim, embed_dim);
  for (int r = 0; r < hidden_dim; ++r) {
    for (int c = 0; c < embed_dim; ++c) net.W1(r, c) = scale * rng.gaussian();
  }
  net.b1 = Eigen::VectorXd::Zero(hidden_dim);
  const double scale2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  net.w2.resize(hidden_dim);
  for (int r = 0; r < hidden_dim; ++r) net.w2[r] = scale2 * rng.gaussian();
  net.b2 = Eigen::VectorXd::Zero(1);
  return net;
}

Eigen::VectorXd masknet_logits(const MaskNet& net, const Eigen::MatrixXd& X,
                               int length, MaskNetCache* cache) {
  if (net.empty()) throw std::invalid_argument("mask network is empty");
  if (X.cols() != net.W1.cols()) {
    throw std::invalid_argument("mask network embedding width mismatch");
  }
  const Eigen::Index L = X.rows();
  Eigen::MatrixXd h_pre = Eigen::MatrixXd::Zero(L, net.hidden_dim());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(L, net.hidden_dim());
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(L);
  for (int t = 0; t < length; ++t) {
    h_pre.row(t) = (net.W1 * X.row(t).transpose() + net.b1).transpose();
    h.row(t) = h_pre.row(t).unaryExpr([](double v) { return gelu(v); });
    logits[t] = net.w2.dot(h.row(t)) + net.b2[0];
  }
  if (cache != nullptr) {
    cache->h_pre = std::move(h_pre);
    cache->h = std::move(h);
    cache->logits = logits;
  }
  return logits;
}

MaskSample sample_word_mask(const MaskNet& net, const Eigen::MatrixXd& X,
                            int length, double temperature, SampleMode mode,
                            Rng& rng, MaskNetCache* cache) {
  if (mode == SampleMode::soft && temperature <= 0.0) {
    throw std::invalid_argument("sample_word_mask: temperature must be > 0");
  }
  const Eigen::VectorXd logits = masknet_logits(net, X, length, cache);
  MaskSample mask;
  mask.mode = mode;
  mask.values = Eigen::VectorXd::Zero(X.rows());
  for (int t = 0; t < length; ++t) {
    if (mode == SampleMode::hard) {
      mask.values[t] = logits[t] > 0.0 ? 1.0 : 0.0;
    } else {
      mask.values[t] = gumbel_sigmoid_sample(logits[t], temperature, rng);
    }
  }
  return mask;
}

MaskSample mask_from_noise(const Eigen::VectorXd& logits, int length,
                           double temperature,
                           const std::vector<double>& noise) {
  if (static_cast<int>(noise.size()) != length) {
    throw std::invalid_argument("mask_from_noise: one noise value per token");
  }
  MaskSample mask;
  mask.mode = SampleMode::soft;
  mask.values = Eigen::VectorXd::Zero(logits.size());
  for (int t = 0; t < length; ++t) {
    mask.values[t] = gumbel_sigmoid_from_noise(logits[t], temperature,
                                               noise[static_cast<size_t>(t)]);
  }
  return mask;
}

SubgraphSample subgraph_from_noise(const InteractionGraph& graph,
                                   const TokenSequence& seq,
                                   double temperature,
                                   const std::vector<double>& noise) {
  const int L = static_cast<int>(seq.ids.size());
  SubgraphSample sample;
  sample.values = Eigen::MatrixXd::Zero(L, L);
  sample.token_ids = seq.ids;
  sample.mode = SampleMode::soft;
  size_t n = 0;
  for_each_eligible_pair(seq, [&](int p, int q) {
    if (n >= noise.size()) {
      throw std::invalid_argument("subgraph_from_noise: not enough noise");
    }
    const int i = seq.ids[static_cast<size_t>(p)];
    const int j = seq.ids[static_cast<size_t>(q)];
    const double v = gumbel_sigmoid_from_noise(graph.gamma_at(i, j),
                                               temperature, noise[n++]);
    sample.values(p, q) = v;
    sample.values(q, p) = v;
  });
  if (n != noise.size()) {
    throw std::invalid_argument("subgraph_from_noise: too much noise");
  }
  return sample;
}

Eigen::MatrixXd normalize_adjacency(const SubgraphSample& sample) {
  const Eigen::Index L = sample.values.rows();
  Eigen::MatrixXd ahat = sample.values;
  ahat.diagonal().array() += 1.0;  // self-loops
  Eigen::VectorXd deg = ahat.rowwise().sum();
  Eigen::VectorXd dinv_sqrt = deg.array().rsqrt();
  Eigen::MatrixXd out(L, L);
  for (Eigen::Index r = 0; r < L; ++r) {
    for (Eigen::Index c = 0; c < L; ++c) {
      out(r, c) = dinv_sqrt[r] * ahat(r, c) * dinv_sqrt[c];
    }
  }
  return out;
}

Eigen::MatrixXd message_pass(const Eigen::MatrixXd& X,
                             const SubgraphSample& sample, Aggregation mode,
                             MessagePassCache* cache) {
  const Eigen::Index L = X.rows();
  if (sample.values.rows() != L || sample.values.cols() != L) {
    throw std::invalid_argument("message_pass: adjacency/embedding mismatch");
  }
  Eigen::MatrixXd out(L, X.cols());
  if (cache != nullptr) {
    cache->mode = mode;
    cache->X = X;
  }
  if (mode == Aggregation::residual_mean) {
    Eigen::VectorXd wsum = sample.values.rowwise().sum();
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(L, X.cols());
    for (Eigen::Index i = 0; i < L; ++i) {
      if (wsum[i] == 0.0) {
        out.row(i) = X.row(i);  // no neighbors: the layer is the identity
        continue;
      }
      M.row(i) = (sample.values.row(i) * X) / wsum[i];
      out.row(i) =
          X.row(i) + M.row(i).unaryExpr([](double v) { return gelu(v); });
    }
    if (cache != nullptr) {
      cache->wsum = std::move(wsum);
      cache->M = std::move(M);
    }
  } else {
    Eigen::MatrixXd ahat = sample.values;
    ahat.diagonal().array() += 1.0;
    Eigen::VectorXd deg = ahat.rowwise().sum();
    Eigen::MatrixXd aprime = normalize_adjacency(sample);
    Eigen::MatrixXd P = aprime * X;
    out = P.unaryExpr([](double v) { return gelu(v); });
    if (cache != nullptr) {
      cache->deg = std::move(deg);
      cache->Aprime = std::move(aprime);
      cache->P = std::move(P);
    }
  }
  return out;
}

void message_pass_backward(const Eigen::MatrixXd& dE,
                           const SubgraphSample& sample,
                           const MessagePassCache& cache, Eigen::MatrixXd& dX,
                           Eigen::MatrixXd& dA) {
  const Eigen::Index L = dE.rows();
  const Eigen::MatrixXd& X = cache.X;
  if (cache.mode == Aggregation::residual_mean) {
    for (Eigen::Index i = 0; i < L; ++i) {
      dX.row(i) += dE.row(i);  // residual path
      if (cache.wsum[i] == 0.0) continue;
      // u = GeLU'(m_i) .* dE_i is the gradient at the neighbor mean.
      Eigen::RowVectorXd u =
          cache.M.row(i)
              .unaryExpr([](double v) { return gelu_grad(v); })
              .cwiseProduct(dE.row(i));
      const double w = cache.wsum[i];
      for (Eigen::Index j = 0; j < L; ++j) {
        const double a = sample.values(i, j);
        if (a == 0.0 && i != j) {
          // Entry may still be a live pair elsewhere; only nonzero entries
          // contribute to the mean here.
          continue;
        }
        if (i == j) continue;
        dX.row(j) += (a / w) * u;
        // d m_i / d a_ij = (x_j - m_i) / w
        dA(i, j) += u.dot((X.row(j) - cache.M.row(i)) / w);
      }
    }
    // Fold the directed contributions into the shared unordered value.
    for (Eigen::Index p = 0; p < L; ++p) {
      for (Eigen::Index q = p + 1; q < L; ++q) {
        dA(p, q) += dA(q, p);
        dA(q, p) = 0.0;
      }
    }
  } else {
    Eigen::MatrixXd dP =
        cache.P.unaryExpr([](double v) { return gelu_grad(v); })
            .cwiseProduct(dE);
    dX += cache.Aprime.transpose() * dP;
    Eigen::MatrixXd G = dP * X.transpose();  // d loss / d Aprime
    Eigen::VectorXd s = cache.deg.array().rsqrt();
    // Degree chain: ds_i/dd_i = -0.5 d_i^{-3/2}; Aprime_ij = s_i ahat_ij s_j.
    Eigen::VectorXd dd = Eigen::VectorXd::Zero(L);
    for (Eigen::Index i = 0; i < L; ++i) {
      double row_term = 0.0, col_term = 0.0;
      for (Eigen::Index j = 0; j < L; ++j) {
        const double ahat_ij = sample.values(i, j) + (i == j ? 1.0 : 0.0);
        const double ahat_ji = sample.values(j, i) + (i == j ? 1.0 : 0.0);
        row_term += G(i, j) * ahat_ij * s[j];
        col_term += G(j, i) * ahat_ji * s[j];
      }
      dd[i] = (row_term + col_term) * (-0.5) * std::pow(cache.deg[i], -1.5);
    }
    for (Eigen::Index p = 0; p < L; ++p) {
      for (Eigen::Index q = p + 1; q < L; ++q) {
        dA(p, q) += G(p, q) * s[p] * s[q] + G(q, p) * s[q] * s[p] + dd[p] + dd[q];
      }
    }
  }
}

Eigen::MatrixXd apply_mask(const Eigen::MatrixXd& Eprime,
                           const MaskSample& mask) {
  if (mask.values.size() != Eprime.rows()) {
    throw std::invalid_argument("apply_mask: mask length mismatch");
  }
  return mask.values.asDiagonal() * Eprime;
}

Eigen::MatrixXd wigraph_forward(const Eigen::MatrixXd& X,
                                const InteractionGraph& graph,
                                const MaskNet* masknet,
                                const TokenSequence& seq,
                                const LayerConfig& cfg, double temperature,
                                SampleMode mode, Rng& rng,
                                const EdgeSet* allowed,
                                LayerForwardCache* cache) {
  if (static_cast<Eigen::Index>(seq.ids.size()) != X.rows()) {
    throw std::invalid_argument("wigraph_forward: sequence/embedding mismatch");
  }
  SubgraphSample A =
      sample_subgraph(graph, seq, temperature, mode, rng, allowed);
  MessagePassCache* mp = cache != nullptr ? &cache->mp : nullptr;
  Eigen::MatrixXd Eprime = message_pass(X, A, cfg.aggregation, mp);
  Eigen::MatrixXd Z;
  if (cfg.variant == Variant::A_R) {
    if (masknet == nullptr || masknet->empty()) {
      throw std::invalid_argument("variant A_R needs a mask network");
    }
    MaskNetCache* mn = cache != nullptr ? &cache->mn : nullptr;
    MaskSample R =
        sample_word_mask(*masknet, X, seq.length, temperature, mode, rng, mn);
    Z = apply_mask(Eprime, R);
    if (cache != nullptr) cache->R = std::move(R);
  } else {
    Z = Eprime;
  }
  if (cache != nullptr) {
    cache->A = std::move(A);
    cache->Eprime = std::move(Eprime);
  }
  return Z;
}

}  // namespace wigraph
