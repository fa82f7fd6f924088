#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sample/nn.hpp"
#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

namespace sample {

constexpr int kLabelReal = 0;
constexpr int kLabelFake = 1;
constexpr int kNumClasses = 2;

// Soft verbalizer: one trainable embedding per class; a class logit is the
// dot product of its embedding with the fused representation.
struct VerbalizerHead {
  Tensor class_embeddings;  // [num_classes x d_out]

  static VerbalizerHead create(int num_classes, int d_out, SeededRng& rng) {
    VerbalizerHead v;
    v.class_embeddings = Tensor::zeros(num_classes, d_out, true);
    for (auto& x : v.class_embeddings.data()) x = rng.normal(0.0f, 0.02f);
    return v;
  }

  int num_classes() const { return class_embeddings.rows(); }

  Tensor logits(const Tensor& x_fused, Tape* tape = nullptr) const {
    return matmul_transb(x_fused, class_embeddings, tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".class_embeddings", class_embeddings);
  }
};

inline Tensor class_probabilities(const Tensor& x_fused, const VerbalizerHead& verbalizer,
                                  Tape* tape = nullptr) {
  return softmax_rows(verbalizer.logits(x_fused, tape), tape);
}

// Residual combine: x_fused = OutputMap(h_mask + Adapter(m_fused)).
// The adapter is bias-free so that a zero multimodal feature contributes
// exactly nothing — the text-only ablations rely on that identity.
struct CombineLayer {
  Linear adapter;     // fused_dim -> d_lm, no bias
  Linear output_map;  // d_lm -> d_out

  static CombineLayer create(int fused_dim, int d_lm, int d_out, SeededRng& rng) {
    CombineLayer c;
    c.adapter = Linear::create(fused_dim, d_lm, rng,
                               std::sqrt(1.0f / static_cast<float>(fused_dim)),
                               /*with_bias=*/false);
    c.output_map = Linear::create(d_lm, d_out, rng,
                                  std::sqrt(1.0f / static_cast<float>(d_lm)));
    return c;
  }

  Tensor forward(const Tensor& h_mask, const Tensor& m_fused, Tape* tape = nullptr) const {
    return output_map.forward(add(h_mask, adapter.forward(m_fused, tape), tape), tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    adapter.collect_params(prefix + ".adapter", out);
    output_map.collect_params(prefix + ".output_map", out);
  }
};

// Argmax decision rule; ties go to the lowest class index (real).
inline int predict(const std::vector<float>& probabilities) {
  if (probabilities.empty()) throw std::invalid_argument("predict: empty probabilities");
  int best = 0;
  for (std::size_t i = 1; i < probabilities.size(); ++i)
    if (probabilities[i] > probabilities[static_cast<std::size_t>(best)])
      best = static_cast<int>(i);
  return best;
}

inline int predict_row(const Tensor& probs, int row) {
  int best = 0;
  for (int c = 1; c < probs.cols(); ++c)
    if (probs.at(row, c) > probs.at(row, best)) best = c;
  return best;
}

}  // namespace sample
