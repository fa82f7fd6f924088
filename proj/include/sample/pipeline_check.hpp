#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "sample/gradcheck.hpp"
#include "sample/harness.hpp"
#include "sample/model.hpp"

namespace sample {

struct PipelineCheckResult {
  PromptKind kind = PromptKind::kDiscrete;
  GradCheckReport report;
  double seconds = 0.0;
  long long parameters = 0;
};

// Finite-difference check of the complete training loss — prompt encoding
// through the frozen masked LM, projection heads, similarity gate, residual
// combine, soft verbalizer, cross entropy — on a 2-instance batch. Dims are
// compact so the element-by-element FD sweep stays fast; the loss expression
// is the full one.
inline PipelineCheckResult check_full_loss_gradients(PromptKind kind,
                                                     double tolerance = 1e-3) {
  ExperimentConfig cfg;
  cfg.prompt.kind = kind;
  cfg.prompt.t = 2;
  cfg.fusion.strategy = FusionStrategy::kConcat;
  cfg.fusion.gate_enabled = true;
  cfg.projection_dim = 8;
  cfg.model.d_lm = 16;
  cfg.model.d_img = 16;
  cfg.model.shared_dim = 16;
  cfg.model.num_layers = 1;
  cfg.model.num_heads = 2;
  cfg.model.feedforward_dim = 32;
  cfg.model.max_seq_len = 24;
  cfg.normalize_and_validate();

  Vocab vocab;
  for (const auto& surface : discrete_preset_surfaces())
    for (const auto& word : tokenize(surface))
      if (word != Vocab::mask_token()) vocab.add(word);
  for (int i = 0; i < 16; ++i) vocab.add("w" + std::to_string(i));

  SeededRng rng(1234);
  TextEncoder mlm = TextEncoder::create(cfg.text_encoder_config(vocab.size()), rng);
  mlm.set_trainable(false);
  SampleModel model = SampleModel::create(cfg, vocab, &mlm, rng);

  PreparedDataset data;
  const int first_word = Vocab::first_word_id();
  for (int i = 0; i < 2; ++i) {
    PreparedInstance item;
    item.label = i;
    for (int t = 0; t < 7; ++t)
      item.text_ids.push_back(first_word + rng.uniform_int(0, 15));
    item.clip_text = Tensor::zeros(1, cfg.model.shared_dim);
    item.clip_image = Tensor::zeros(1, cfg.model.shared_dim);
    for (auto& v : item.clip_text.data()) v = rng.normal(0.0f, 1.0f);
    for (auto& v : item.clip_image.data()) v = rng.normal(0.0f, 1.0f);
    data.items.push_back(std::move(item));
  }
  const VariantData variant = model.prepare_variant(data);
  const std::vector<int> batch = {0, 1};
  const std::vector<int> labels = {0, 1};

  auto loss_fn = [&](Tape* tape) {
    SeededRng dropout_rng(777);  // identical masks on every evaluation
    Tensor probs = model.forward(batch, data, variant, tape, dropout_rng, true);
    return cross_entropy_mean(probs, labels, tape);
  };

  PipelineCheckResult result;
  result.kind = kind;
  const NamedParams params = model.trainable_named();
  result.parameters = count_params(params);
  const auto start = std::chrono::steady_clock::now();
  result.report = grad_check(loss_fn, params, tolerance);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

inline std::vector<PipelineCheckResult> check_all_template_kinds(double tolerance = 1e-3) {
  std::vector<PipelineCheckResult> out;
  for (PromptKind kind :
       {PromptKind::kDiscrete, PromptKind::kContinuous, PromptKind::kMixed}) {
    out.push_back(check_full_loss_gradients(kind, tolerance));
  }
  return out;
}

}  // namespace sample
