#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sample/nn.hpp"
#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

namespace sample {

// Plain-vector cosine similarity; norms below 1e-12 count as degenerate and
// give similarity 0 (dropout and relu can legitimately zero a feature).
inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: lengths " + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < kDegenerateNorm || nb < kDegenerateNorm) return 0.0;
  return dot / (na * nb);
}

// Index of the image embedding closest (by cosine) to the text embedding;
// ties break toward the lowest index.
inline int select_image(const std::vector<float>& text_embedding,
                        const std::vector<std::vector<float>>& image_embeddings) {
  if (image_embeddings.empty()) {
    throw std::invalid_argument("select_image: empty image list");
  }
  int best = 0;
  double best_sim = cosine_similarity(text_embedding, image_embeddings[0]);
  for (std::size_t i = 1; i < image_embeddings.size(); ++i) {
    const double sim = cosine_similarity(text_embedding, image_embeddings[i]);
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<int>(i);
    }
  }
  return best;
}

// Two blocks of FC -> batch norm -> relu -> dropout.
struct ProjectionHead {
  Linear fc1;
  BatchNorm1d bn1;
  Linear fc2;
  BatchNorm1d bn2;
  float dropout_p = 0.6f;

  static ProjectionHead create(int in_dim, int out_dim, float dropout_p, SeededRng& rng) {
    ProjectionHead head;
    head.fc1 = Linear::create(in_dim, out_dim, rng, std::sqrt(2.0f / static_cast<float>(in_dim)));
    head.bn1 = BatchNorm1d::create(out_dim);
    head.fc2 = Linear::create(out_dim, out_dim, rng, std::sqrt(2.0f / static_cast<float>(out_dim)));
    head.bn2 = BatchNorm1d::create(out_dim);
    head.dropout_p = dropout_p;
    return head;
  }

  int out_dim() const { return fc1.out_dim(); }

  Tensor forward(const Tensor& x, Tape* tape, SeededRng& rng, bool training) {
    Tensor h = dropout(relu(bn1.forward(fc1.forward(x, tape), tape, training), tape),
                       dropout_p, rng, training, tape);
    return dropout(relu(bn2.forward(fc2.forward(h, tape), tape, training), tape),
                   dropout_p, rng, training, tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    fc1.collect_params(prefix + ".fc1", out);
    bn1.collect_params(prefix + ".bn1", out);
    fc2.collect_params(prefix + ".fc2", out);
    bn2.collect_params(prefix + ".bn2", out);
  }

  void collect_state(const std::string& prefix, NamedParams& out) const {
    bn1.collect_state(prefix + ".bn1", out);
    bn2.collect_state(prefix + ".bn2", out);
  }
};

enum class FusionStrategy { kConcat, kMax, kAvg, kProduct };

inline const char* to_string(FusionStrategy s) {
  switch (s) {
    case FusionStrategy::kConcat: return "CONCAT";
    case FusionStrategy::kMax: return "MAX";
    case FusionStrategy::kAvg: return "AVG";
    case FusionStrategy::kProduct: return "PRODUCT";
  }
  return "?";
}

inline int fused_dim(FusionStrategy s, int p) {
  return s == FusionStrategy::kConcat ? 2 * p : p;
}

struct FusionConfig {
  FusionStrategy strategy = FusionStrategy::kConcat;
  float alpha = 1.0f;
  bool gate_enabled = true;  // false realizes the similarity-adjustment ablation

  void validate() const {
    if (alpha < 0.0f || alpha > 1.0f) {
      throw std::invalid_argument("fusion: alpha " + std::to_string(alpha) +
                                  " outside [0,1]");
    }
  }
};

// Rule-based combination of equally sized projected features.
inline Tensor fuse(const Tensor& p_txt, const Tensor& p_img, FusionStrategy strategy,
                   Tape* tape = nullptr) {
  detail::require(p_txt.same_shape(p_img),
                  "fuse: shapes " + p_txt.shape() + " vs " + p_img.shape());
  switch (strategy) {
    case FusionStrategy::kConcat: return concat_cols(p_txt, p_img, tape);
    case FusionStrategy::kMax: return elementwise_max(p_txt, p_img, tape);
    case FusionStrategy::kAvg: return scale(add(p_txt, p_img, tape), 0.5f, tape);
    case FusionStrategy::kProduct: return mul(p_txt, p_img, tape);
  }
  throw std::invalid_argument("fuse: unknown strategy");
}

// Scalar standardize-and-squash state. Running statistics follow batch-norm
// semantics: batch statistics during training (momentum-updated), frozen
// running statistics in eval.
struct FusionGate {
  Tensor running;  // [1 x 2]: running mean, running variance
  float momentum = 0.1f;
  float eps = 1e-5f;
  float last_sim = 0.0f;
  float last_gate = 0.5f;

  static FusionGate create() {
    FusionGate g;
    g.running = Tensor::from(1, 2, {0.0f, 1.0f});
    return g;
  }

  float running_mean() const { return running.at(0, 0); }
  float running_var() const { return running.at(0, 1); }

  void collect_state(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".running", running);
  }
};

// m_fused = alpha * sigmoid(standardized sim) * f_fused, batch form.
// With the gate disabled the similarities are ignored, statistics stay
// untouched, and only the alpha scaling applies.
inline Tensor gate(const Tensor& sims, const Tensor& fused, FusionGate& state,
                   const FusionConfig& config, bool training, Tape* tape = nullptr) {
  detail::require(sims.cols() == 1 && sims.rows() == fused.rows(),
                  "gate: sims " + sims.shape() + " vs fused " + fused.shape());
  config.validate();
  Tensor out;
  if (config.gate_enabled) {
    Tensor standardized;
    if (training) {
      std::vector<float> batch_mean, batch_var;
      standardized = standardize_cols(sims, state.eps, tape, &batch_mean, &batch_var);
      state.running.at(0, 0) =
          (1.0f - state.momentum) * state.running.at(0, 0) + state.momentum * batch_mean[0];
      state.running.at(0, 1) =
          (1.0f - state.momentum) * state.running.at(0, 1) + state.momentum * batch_var[0];
    } else {
      const std::vector<float> mean = {state.running_mean()};
      const std::vector<float> inv_std = {1.0f / std::sqrt(state.running_var() + state.eps)};
      standardized = standardize_affine_const(sims, mean, inv_std, tape);
    }
    Tensor g = sigmoid(standardized, tape);
    state.last_sim = sims.at(sims.rows() - 1, 0);
    state.last_gate = g.at(g.rows() - 1, 0);
    out = row_scale(fused, g, tape);
  } else {
    out = fused;
  }
  if (config.alpha != 1.0f) out = scale(out, config.alpha, tape);
  return out;
}

// Single-instance view of a fused-and-gated feature.
struct FusedFeature {
  std::vector<float> values;
  FusionStrategy strategy = FusionStrategy::kConcat;
  float gate_value = 1.0f;
};

inline FusedFeature fuse_single(const std::vector<float>& p_txt,
                                const std::vector<float>& p_img, FusionGate& state,
                                const FusionConfig& config, bool training) {
  Tensor t = Tensor::row(std::vector<float>(p_txt));
  Tensor i = Tensor::row(std::vector<float>(p_img));
  Tensor sims = rowwise_cosine(t, i);
  Tensor fused = fuse(t, i, config.strategy);
  Tensor gated = gate(sims, fused, state, config, training);
  FusedFeature out;
  out.values = gated.data();
  out.strategy = config.strategy;
  out.gate_value = config.gate_enabled ? state.last_gate : 1.0f;
  return out;
}

}  // namespace sample
