#pragma once

#include <map>
#include <string>
#include <vector>

#include "sample/classifier.hpp"
#include "sample/config.hpp"
#include "sample/data.hpp"
#include "sample/dual_encoder.hpp"
#include "sample/encoder.hpp"
#include "sample/fusion.hpp"
#include "sample/prompt.hpp"

namespace sample {

// Frozen per-instance inputs shared by every trial: raw text tokens plus the
// dual-encoder features of the text and of its best-matching image.
struct PreparedInstance {
  int label = 0;
  std::vector<int> text_ids;
  Tensor clip_text;   // [1 x shared]
  Tensor clip_image;  // [1 x shared], the selected image's embedding
  int selected_image = 0;
};

struct PreparedDataset {
  std::vector<PreparedInstance> items;
  std::vector<int> labels_of(const std::vector<int>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(items[static_cast<std::size_t>(i)].label);
    return out;
  }
};

// Per-model-variant caches: built prompts, and for templates without soft
// slots the frozen mask-position states (they cannot change during training).
struct VariantData {
  std::vector<BuiltPrompt> prompts;
  std::vector<Tensor> h_mask_cache;
};

// The full classifier: frozen masked-LM backbone consulted through a prompt,
// frozen dual-encoder features fused under the similarity gate, a residual
// combine layer, and the soft verbalizer. Trainable parts are the soft
// tokens, projection heads, adapter, output map, and verbalizer.
struct SampleModel {
  PromptTemplate tmpl;
  SoftTokenBank soft_bank;
  ProjectionHead text_head;
  ProjectionHead image_head;
  FusionGate gate_state;
  FusionConfig fusion_cfg;
  CombineLayer combine;
  VerbalizerHead verbalizer;
  bool remove_image_feature = false;
  bool remove_text_feature = false;
  bool remove_multimodal = false;
  int projection_dim = 32;
  const TextEncoder* mlm = nullptr;

  static SampleModel create(const ExperimentConfig& cfg, const Vocab& vocab,
                            const TextEncoder* mlm, SeededRng& rng) {
    SampleModel m;
    m.mlm = mlm;
    m.fusion_cfg = cfg.fusion;
    m.remove_image_feature = cfg.remove_image_feature;
    m.remove_text_feature = cfg.remove_text_feature;
    m.remove_multimodal = cfg.remove_multimodal;
    m.projection_dim = cfg.projection_dim;

    switch (cfg.prompt.kind) {
      case PromptKind::kDiscrete:
        m.tmpl = discrete_preset(vocab, cfg.prompt.preset_index);
        break;
      case PromptKind::kContinuous:
        m.tmpl = PromptTemplate::continuous(cfg.prompt.t);
        break;
      case PromptKind::kMixed:
        m.tmpl = PromptTemplate::mixed(
            vocab, discrete_preset_surfaces()[static_cast<std::size_t>(cfg.prompt.preset_index - 1)]);
        break;
    }
    // Fixed construction order keeps initialization draws aligned across
    // ablation variants built from the same seed.
    m.soft_bank = SoftTokenBank::create(cfg.prompt.soft_init, m.tmpl.soft_count,
                                        cfg.model.d_lm, rng);
    m.text_head = ProjectionHead::create(cfg.model.shared_dim, cfg.projection_dim,
                                         cfg.dropout, rng);
    m.image_head = ProjectionHead::create(cfg.model.shared_dim, cfg.projection_dim,
                                          cfg.dropout, rng);
    m.gate_state = FusionGate::create();
    m.combine = CombineLayer::create(fused_dim(cfg.fusion.strategy, cfg.projection_dim),
                                     cfg.model.d_lm, cfg.model.d_lm, rng);
    m.verbalizer = VerbalizerHead::create(kNumClasses, cfg.model.d_lm, rng);
    return m;
  }

  VariantData prepare_variant(const PreparedDataset& data) const {
    VariantData vd;
    vd.prompts.reserve(data.items.size());
    const bool cache_h = soft_bank.empty();
    for (const auto& item : data.items) {
      vd.prompts.push_back(build_prompt(tmpl, item.text_ids, mlm->cfg.max_seq_len));
      if (cache_h) {
        const BuiltPrompt& bp = vd.prompts.back();
        Tensor hidden = mlm->forward(bp.token_ids, {}, nullptr);
        vd.h_mask_cache.push_back(take_row(hidden, bp.mask_position));
      }
    }
    return vd;
  }

  // Class probabilities [N x 2] for a batch of dataset indices.
  Tensor forward(const std::vector<int>& indices, const PreparedDataset& data,
                 const VariantData& variant, Tape* tape, SeededRng& dropout_rng,
                 bool training, Tensor* x_fused_out = nullptr) {
    const int n = static_cast<int>(indices.size());
    std::vector<Tensor> soft_rows;
    if (!soft_bank.empty()) soft_rows = soft_bank.materialize(tape);

    std::vector<Tensor> h_rows;
    h_rows.reserve(indices.size());
    for (int idx : indices) {
      if (soft_bank.empty()) {
        h_rows.push_back(variant.h_mask_cache[static_cast<std::size_t>(idx)]);
      } else {
        const BuiltPrompt& bp = variant.prompts[static_cast<std::size_t>(idx)];
        std::map<int, Tensor> overrides;
        for (std::size_t s = 0; s < bp.soft_positions.size(); ++s)
          overrides[bp.soft_positions[s]] = soft_rows[s];
        Tensor hidden = mlm->forward(bp.token_ids, overrides, tape);
        h_rows.push_back(take_row(hidden, bp.mask_position, tape));
      }
    }
    Tensor h_mask = stack_rows(h_rows, tape);

    Tensor m_fused;
    if (remove_multimodal) {
      m_fused = Tensor::zeros(n, fused_dim(fusion_cfg.strategy, projection_dim));
    } else {
      std::vector<Tensor> ct_rows, ci_rows;
      ct_rows.reserve(indices.size());
      ci_rows.reserve(indices.size());
      for (int idx : indices) {
        ct_rows.push_back(data.items[static_cast<std::size_t>(idx)].clip_text);
        ci_rows.push_back(data.items[static_cast<std::size_t>(idx)].clip_image);
      }
      Tensor p_txt = remove_text_feature
                         ? Tensor::zeros(n, projection_dim)
                         : text_head.forward(stack_rows(ct_rows, tape), tape, dropout_rng,
                                             training);
      Tensor p_img = remove_image_feature
                         ? Tensor::zeros(n, projection_dim)
                         : image_head.forward(stack_rows(ci_rows, tape), tape, dropout_rng,
                                              training);
      Tensor sims = rowwise_cosine(p_txt, p_img, tape);
      Tensor fused = fuse(p_txt, p_img, fusion_cfg.strategy, tape);
      m_fused = gate(sims, fused, gate_state, fusion_cfg, training, tape);
    }

    Tensor x_fused = combine.forward(h_mask, m_fused, tape);
    if (x_fused_out != nullptr) *x_fused_out = x_fused;
    return class_probabilities(x_fused, verbalizer, tape);
  }

  std::vector<int> predict_batch(const std::vector<int>& indices, const PreparedDataset& data,
                                 const VariantData& variant) {
    SeededRng unused(0);
    std::vector<int> out;
    out.reserve(indices.size());
    const std::size_t chunk = 64;
    for (std::size_t start = 0; start < indices.size(); start += chunk) {
      const std::size_t stop = std::min(indices.size(), start + chunk);
      std::vector<int> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                            indices.begin() + static_cast<std::ptrdiff_t>(stop));
      Tensor probs = forward(part, data, variant, nullptr, unused, /*training=*/false);
      for (int r = 0; r < probs.rows(); ++r) out.push_back(predict_row(probs, r));
    }
    return out;
  }

  NamedParams trainable_named() const {
    NamedParams out;
    soft_bank.collect_params("soft_bank", out);
    text_head.collect_params("text_head", out);
    image_head.collect_params("image_head", out);
    combine.collect_params("combine", out);
    verbalizer.collect_params("verbalizer", out);
    return out;
  }

  NamedParams buffers_named() const {
    NamedParams out;
    text_head.collect_state("text_head", out);
    image_head.collect_state("image_head", out);
    gate_state.collect_state("gate", out);
    return out;
  }

  NamedParams all_named() const {
    NamedParams out = trainable_named();
    NamedParams buf = buffers_named();
    out.insert(out.end(), buf.begin(), buf.end());
    return out;
  }

  long long trainable_param_count() const { return count_params(trainable_named()); }

  std::vector<std::vector<float>> snapshot() const {
    std::vector<std::vector<float>> out;
    for (const auto& [name, t] : all_named()) out.push_back(t.data());
    return out;
  }

  void restore(const std::vector<std::vector<float>>& snap) {
    NamedParams named = all_named();
    for (std::size_t i = 0; i < named.size(); ++i) named[i].second.data() = snap[i];
  }
};

}  // namespace sample
