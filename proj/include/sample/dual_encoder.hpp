#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sample/encoder.hpp"
#include "sample/image.hpp"
#include "sample/nn.hpp"
#include "sample/optim.hpp"
#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

namespace sample {

struct DualEncoderConfig {
  TextEncoderConfig text;
  ImageEncoderConfig image;
  int shared_dim = 64;
};

// CLIP-style dual encoder: a text tower and an image tower projected into one
// shared space where matched pairs score high cosine similarity.
struct DualEncoder {
  DualEncoderConfig cfg;
  TextEncoder text_tower;
  ImageEncoder image_tower;
  Linear text_proj;   // d_lm  -> shared, bias-free
  Linear image_proj;  // d_img -> shared, bias-free

  static DualEncoder create(const DualEncoderConfig& cfg, SeededRng& rng) {
    DualEncoder d;
    d.cfg = cfg;
    d.text_tower = TextEncoder::create(cfg.text, rng);
    d.image_tower = ImageEncoder::create(cfg.image, rng);
    const float st = std::sqrt(1.0f / static_cast<float>(cfg.text.d_lm));
    const float si = std::sqrt(1.0f / static_cast<float>(cfg.image.d_img));
    d.text_proj = Linear::create(cfg.text.d_lm, cfg.shared_dim, rng, st, /*with_bias=*/false);
    d.image_proj = Linear::create(cfg.image.d_img, cfg.shared_dim, rng, si, /*with_bias=*/false);
    return d;
  }

  // Mean-pooled hidden states projected to the shared space: [1 x shared].
  Tensor embed_text(const std::vector<int>& token_ids, Tape* tape = nullptr) const {
    std::vector<int> ids = token_ids;
    if (static_cast<int>(ids.size()) > cfg.text.max_seq_len)
      ids.resize(static_cast<std::size_t>(cfg.text.max_seq_len));
    Tensor pooled = mean_rows(text_tower.forward(ids, {}, tape), tape);
    return text_proj.forward(pooled, tape);
  }

  Tensor embed_image(const ImageGray& img, Tape* tape = nullptr) const {
    return image_proj.forward(image_tower.encode(img, tape), tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    text_tower.collect_params(prefix + ".text", out);
    image_tower.collect_params(prefix + ".image", out);
    text_proj.collect_params(prefix + ".text_proj", out);
    image_proj.collect_params(prefix + ".image_proj", out);
  }

  void set_trainable(bool trainable) {
    NamedParams named;
    collect_params("dual", named);
    sample::set_trainable(named, trainable);
  }
};

struct DualEncoderTrainerConfig {
  float temperature = 0.07f;
  int batch_size = 16;
  int epochs = 15;
  float learning_rate = 1e-3f;
  float weight_decay = 1e-4f;
  float holdout_fraction = 0.1f;

  void validate() const {
    if (temperature <= 0.0f)
      throw std::invalid_argument("contrastive trainer: temperature must be positive");
    if (batch_size < 2)
      throw std::invalid_argument("contrastive trainer: batch_size must be at least 2 "
                                  "(the loss needs in-batch negatives)");
  }
};

// Symmetric batch contrastive loss over L2-normalized embeddings: cross
// entropy over cosine-similarity logits scaled by 1/temperature, evaluated in
// both the text-to-image and image-to-text directions and averaged.
inline Tensor contrastive_loss(const Tensor& text_embs, const Tensor& image_embs,
                               float temperature, Tape* tape = nullptr) {
  detail::require(text_embs.rows() == image_embs.rows(),
                  "contrastive_loss: batch sizes " + text_embs.shape() + " vs " +
                      image_embs.shape());
  const int batch = text_embs.rows();
  Tensor tn = l2_normalize_rows(text_embs, tape);
  Tensor vn = l2_normalize_rows(image_embs, tape);
  const float inv_temp = 1.0f / temperature;
  Tensor t2i = scale(matmul_transb(tn, vn, tape), inv_temp, tape);
  Tensor i2t = scale(matmul_transb(vn, tn, tape), inv_temp, tape);
  std::vector<int> diagonal(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) diagonal[static_cast<std::size_t>(i)] = i;
  Tensor loss_t2i = cross_entropy_mean(softmax_rows(t2i, tape), diagonal, tape);
  Tensor loss_i2t = cross_entropy_mean(softmax_rows(i2t, tape), diagonal, tape);
  return scale(add(loss_t2i, loss_i2t, tape), 0.5f, tape);
}

struct ContrastivePair {
  std::vector<int> text_ids;
  const ImageGray* image = nullptr;
};

struct ContrastiveStats {
  double matched_mean = 0.0;
  double mismatched_mean = 0.0;
  int heldout_count = 0;
  double gap() const { return matched_mean - mismatched_mean; }
};

inline float cosine_of(const Tensor& a, const Tensor& b) {
  return rowwise_cosine(a, b).at(0, 0);
}

// Measures mean matched-pair similarity against a shuffled re-pairing on a
// held-out set.
inline ContrastiveStats matched_mismatched_gap(
    const DualEncoder& dual, const std::vector<ContrastivePair>& pairs, SeededRng& rng) {
  ContrastiveStats stats;
  if (pairs.empty()) return stats;
  std::vector<Tensor> text_embs, image_embs;
  for (const auto& p : pairs) {
    text_embs.push_back(dual.embed_text(p.text_ids));
    image_embs.push_back(dual.embed_image(*p.image));
  }
  double matched = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    matched += cosine_of(text_embs[i], image_embs[i]);
  std::vector<int> shuffled = rng.permutation(static_cast<int>(pairs.size()));
  // derangement-ish: re-draw fixed points once so "mismatched" mostly differs
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    if (shuffled[i] == static_cast<int>(i)) {
      const std::size_t j = (i + 1) % shuffled.size();
      std::swap(shuffled[i], shuffled[j]);
    }
  }
  double mismatched = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    mismatched += cosine_of(text_embs[i], image_embs[static_cast<std::size_t>(shuffled[i])]);
  stats.matched_mean = matched / static_cast<double>(pairs.size());
  stats.mismatched_mean = mismatched / static_cast<double>(pairs.size());
  stats.heldout_count = static_cast<int>(pairs.size());
  return stats;
}

struct ContrastivePretrainResult {
  DualEncoder dual;
  ContrastiveStats heldout;
};

inline ContrastivePretrainResult pretrain_contrastive(
    const std::vector<ContrastivePair>& pairs, const DualEncoderConfig& cfg,
    const DualEncoderTrainerConfig& train_cfg, SeededRng& rng) {
  train_cfg.validate();
  if (static_cast<int>(pairs.size()) < train_cfg.batch_size) {
    throw DataError("pretrain_contrastive: " + std::to_string(pairs.size()) +
                    " pairs are fewer than batch_size " +
                    std::to_string(train_cfg.batch_size));
  }
  ContrastivePretrainResult result{DualEncoder::create(cfg, rng), {}};

  std::vector<int> order = rng.permutation(static_cast<int>(pairs.size()));
  const int heldout = std::max(
      1, static_cast<int>(std::floor(pairs.size() * train_cfg.holdout_fraction)));
  std::vector<int> eval_idx(order.begin(), order.begin() + heldout);
  std::vector<int> train_idx(order.begin() + heldout, order.end());
  if (static_cast<int>(train_idx.size()) < train_cfg.batch_size) train_idx = order;

  NamedParams named;
  result.dual.collect_params("dual", named);
  AdamWConfig opt_cfg;
  opt_cfg.learning_rate = train_cfg.learning_rate;
  opt_cfg.weight_decay = train_cfg.weight_decay;
  AdamW opt(trainable_of(named), opt_cfg);

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    const std::size_t batch = static_cast<std::size_t>(train_cfg.batch_size);
    for (std::size_t start = 0; start + batch <= train_idx.size(); start += batch) {
      Tape tape;
      std::vector<Tensor> text_rows, image_rows;
      for (std::size_t i = start; i < start + batch; ++i) {
        const auto& pair = pairs[static_cast<std::size_t>(train_idx[i])];
        text_rows.push_back(result.dual.embed_text(pair.text_ids, &tape));
        image_rows.push_back(result.dual.embed_image(*pair.image, &tape));
      }
      Tensor loss = contrastive_loss(stack_rows(text_rows, &tape),
                                     stack_rows(image_rows, &tape),
                                     train_cfg.temperature, &tape);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
  }

  std::vector<ContrastivePair> eval_pairs;
  for (int idx : eval_idx) eval_pairs.push_back(pairs[static_cast<std::size_t>(idx)]);
  SeededRng eval_rng(rng.seed() ^ 0xd1b54a32d192ed03ULL);
  result.heldout = matched_mismatched_gap(result.dual, eval_pairs, eval_rng);
  return result;
}

}  // namespace sample
