#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sample/image.hpp"
#include "sample/nn.hpp"
#include "sample/optim.hpp"
#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"
#include "sample/vocab.hpp"

namespace sample {

struct TextEncoderConfig {
  int vocab_size = 0;
  int d_lm = 64;
  int num_layers = 2;
  int num_heads = 4;
  int feedforward_dim = 128;
  int max_seq_len = 64;

  void validate() const {
    if (vocab_size <= 0) throw std::invalid_argument("text encoder: vocab_size must be positive");
    if (d_lm % num_heads != 0) {
      throw std::invalid_argument("text encoder: d_lm " + std::to_string(d_lm) +
                                  " not divisible by num_heads " + std::to_string(num_heads));
    }
  }
};

// Bidirectional pre-LN transformer block with multi-head self-attention.
struct EncoderBlock {
  LayerNorm ln1, ln2;
  Linear wq, wk, wv, wo;
  Linear ff1, ff2;
  int num_heads = 1;

  static EncoderBlock create(int d, int heads, int ff_dim, SeededRng& rng) {
    EncoderBlock b;
    b.num_heads = heads;
    b.ln1 = LayerNorm::create(d);
    b.ln2 = LayerNorm::create(d);
    const float s = 0.02f;
    b.wq = Linear::create(d, d, rng, s);
    b.wk = Linear::create(d, d, rng, s);
    b.wv = Linear::create(d, d, rng, s);
    b.wo = Linear::create(d, d, rng, s);
    b.ff1 = Linear::create(d, ff_dim, rng, s);
    b.ff2 = Linear::create(ff_dim, d, rng, s);
    return b;
  }

  Tensor forward(const Tensor& x, Tape* tape) const {
    const int d = x.cols();
    const int dk = d / num_heads;
    Tensor h = ln1.forward(x, tape);
    Tensor q = wq.forward(h, tape);
    Tensor k = wk.forward(h, tape);
    Tensor v = wv.forward(h, tape);
    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(num_heads));
    const float inv_sqrt_dk = 1.0f / std::sqrt(static_cast<float>(dk));
    for (int head = 0; head < num_heads; ++head) {
      Tensor qh = slice_cols(q, head * dk, dk, tape);
      Tensor kh = slice_cols(k, head * dk, dk, tape);
      Tensor vh = slice_cols(v, head * dk, dk, tape);
      Tensor scores = scale(matmul_transb(qh, kh, tape), inv_sqrt_dk, tape);
      Tensor attn = softmax_rows(scores, tape);
      heads.push_back(matmul(attn, vh, tape));
    }
    Tensor attn_out = wo.forward(concat_cols(heads, tape), tape);
    Tensor mid = add(x, attn_out, tape);
    Tensor f = ff2.forward(relu(ff1.forward(ln2.forward(mid, tape), tape), tape), tape);
    return add(mid, f, tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    ln1.collect_params(prefix + ".ln1", out);
    wq.collect_params(prefix + ".wq", out);
    wk.collect_params(prefix + ".wk", out);
    wv.collect_params(prefix + ".wv", out);
    wo.collect_params(prefix + ".wo", out);
    ln2.collect_params(prefix + ".ln2", out);
    ff1.collect_params(prefix + ".ff1", out);
    ff2.collect_params(prefix + ".ff2", out);
  }
};

struct EncodedSequence {
  Tensor hidden_states;  // [seq_len x d_lm]
  int mask_position = -1;
  std::vector<int> token_ids;
};

// Masked-language-model encoder: learned token + position embeddings, a stack
// of transformer blocks, final layer norm. Soft-slot positions can be fed
// trainable vectors in place of their token embeddings, which is how prompt
// tuning reaches into an otherwise frozen model.
struct TextEncoder {
  TextEncoderConfig cfg;
  Tensor tok_embedding;  // [vocab x d]
  Tensor pos_embedding;  // [max_seq x d]
  std::vector<EncoderBlock> blocks;
  LayerNorm final_ln;

  static TextEncoder create(const TextEncoderConfig& cfg, SeededRng& rng) {
    cfg.validate();
    TextEncoder enc;
    enc.cfg = cfg;
    enc.tok_embedding = Tensor::zeros(cfg.vocab_size, cfg.d_lm, true);
    for (auto& v : enc.tok_embedding.data()) v = rng.normal(0.0f, 0.02f);
    enc.pos_embedding = Tensor::zeros(cfg.max_seq_len, cfg.d_lm, true);
    for (auto& v : enc.pos_embedding.data()) v = rng.normal(0.0f, 0.02f);
    for (int layer = 0; layer < cfg.num_layers; ++layer)
      enc.blocks.push_back(EncoderBlock::create(cfg.d_lm, cfg.num_heads, cfg.feedforward_dim, rng));
    enc.final_ln = LayerNorm::create(cfg.d_lm);
    return enc;
  }

  Tensor forward(const std::vector<int>& token_ids,
                 const std::map<int, Tensor>& soft_overrides, Tape* tape) const {
    if (token_ids.empty()) throw std::invalid_argument("text encoder: empty input");
    if (static_cast<int>(token_ids.size()) > cfg.max_seq_len) {
      throw std::invalid_argument("text encoder: input length " +
                                  std::to_string(token_ids.size()) +
                                  " exceeds max_seq_len " + std::to_string(cfg.max_seq_len) +
                                  "; truncate upstream");
    }
    const int len = static_cast<int>(token_ids.size());
    Tensor x = embedding_lookup(tok_embedding, token_ids, tape);
    for (const auto& [pos, vec] : soft_overrides) {
      if (pos < 0 || pos >= len) {
        throw std::out_of_range("text encoder: soft override position " +
                                std::to_string(pos) + " outside sequence of length " +
                                std::to_string(len));
      }
      x = set_row(x, pos, vec, tape);
    }
    x = add(x, slice_rows(pos_embedding, 0, len, tape), tape);
    for (const auto& block : blocks) x = block.forward(x, tape);
    return final_ln.forward(x, tape);
  }

  EncodedSequence encode_text(const std::vector<int>& token_ids, int mask_position,
                              const std::map<int, Tensor>& soft_overrides,
                              Tape* tape = nullptr) const {
    if (mask_position < 0 || mask_position >= static_cast<int>(token_ids.size())) {
      throw std::out_of_range("encode_text: mask position " + std::to_string(mask_position) +
                              " outside sequence of length " +
                              std::to_string(token_ids.size()));
    }
    EncodedSequence out;
    out.hidden_states = forward(token_ids, soft_overrides, tape);
    out.mask_position = mask_position;
    out.token_ids = token_ids;
    return out;
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".tok_embedding", tok_embedding);
    out.emplace_back(prefix + ".pos_embedding", pos_embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_params(prefix + ".block" + std::to_string(i), out);
    final_ln.collect_params(prefix + ".final_ln", out);
  }

  void set_trainable(bool trainable) {
    NamedParams named;
    collect_params("enc", named);
    sample::set_trainable(named, trainable);
  }
};

// Cloze head with weights tied to the token embedding plus an output bias.
struct MlmHead {
  Tensor output_bias;  // [1 x vocab]

  static MlmHead create(int vocab_size) {
    MlmHead head;
    head.output_bias = Tensor::zeros(1, vocab_size, true);
    return head;
  }

  // hidden_rows: [M x d] states gathered at masked positions.
  Tensor logits(const TextEncoder& encoder, const Tensor& hidden_rows, Tape* tape) const {
    return add_rowvec(matmul_transb(hidden_rows, encoder.tok_embedding, tape),
                      output_bias, tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".output_bias", output_bias);
  }
};

struct ImageEncoderConfig {
  int patch_size = 4;
  int d_img = 64;
  int num_layers = 2;
  int num_heads = 4;
  int feedforward_dim = 128;
  int image_side = 16;  // sizes the position table

  int max_patches() const {
    const int per_side = image_side / patch_size;
    return per_side * per_side;
  }

  void validate() const {
    if (image_side % patch_size != 0) {
      throw std::invalid_argument("image encoder: side " + std::to_string(image_side) +
                                  " not divisible by patch size " + std::to_string(patch_size));
    }
    if (d_img % num_heads != 0) {
      throw std::invalid_argument("image encoder: d_img not divisible by num_heads");
    }
  }
};

// Patch transformer: patchify, linear embed, transformer blocks, mean-pool.
struct ImageEncoder {
  ImageEncoderConfig cfg;
  Linear patch_embed;
  Tensor pos_embedding;  // [max_patches x d]
  std::vector<EncoderBlock> blocks;
  LayerNorm final_ln;

  static ImageEncoder create(const ImageEncoderConfig& cfg, SeededRng& rng) {
    cfg.validate();
    ImageEncoder enc;
    enc.cfg = cfg;
    enc.patch_embed = Linear::create(cfg.patch_size * cfg.patch_size, cfg.d_img, rng, 0.02f);
    enc.pos_embedding = Tensor::zeros(cfg.max_patches(), cfg.d_img, true);
    for (auto& v : enc.pos_embedding.data()) v = rng.normal(0.0f, 0.02f);
    for (int layer = 0; layer < cfg.num_layers; ++layer)
      enc.blocks.push_back(EncoderBlock::create(cfg.d_img, cfg.num_heads, cfg.feedforward_dim, rng));
    enc.final_ln = LayerNorm::create(cfg.d_img);
    return enc;
  }

  // Pixels scaled to [0,1], one row per patch in raster order.
  Tensor patchify(const ImageGray& img) const {
    if (img.width % cfg.patch_size != 0 || img.height % cfg.patch_size != 0) {
      throw std::invalid_argument("encode_image: " + std::to_string(img.width) + "x" +
                                  std::to_string(img.height) +
                                  " not divisible by patch size " +
                                  std::to_string(cfg.patch_size));
    }
    const int px = cfg.patch_size;
    const int patches_x = img.width / px;
    const int patches_y = img.height / px;
    const int n = patches_x * patches_y;
    if (n > cfg.max_patches()) {
      throw std::invalid_argument("encode_image: " + std::to_string(n) +
                                  " patches exceed position table of " +
                                  std::to_string(cfg.max_patches()));
    }
    Tensor out = Tensor::zeros(n, px * px);
    for (int py = 0; py < patches_y; ++py)
      for (int pxi = 0; pxi < patches_x; ++pxi) {
        const int patch = py * patches_x + pxi;
        for (int y = 0; y < px; ++y)
          for (int x = 0; x < px; ++x) {
            const std::size_t pixel =
                static_cast<std::size_t>(py * px + y) * img.width + pxi * px + x;
            out.at(patch, y * px + x) = static_cast<float>(img.pixels[pixel]) / 255.0f;
          }
      }
    return out;
  }

  Tensor encode(const ImageGray& img, Tape* tape = nullptr) const {
    Tensor patches = patchify(img);
    Tensor x = patch_embed.forward(patches, tape);
    x = add(x, slice_rows(pos_embedding, 0, patches.rows(), tape), tape);
    for (const auto& block : blocks) x = block.forward(x, tape);
    return mean_rows(final_ln.forward(x, tape), tape);  // [1 x d]
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    patch_embed.collect_params(prefix + ".patch_embed", out);
    out.emplace_back(prefix + ".pos_embedding", pos_embedding);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect_params(prefix + ".block" + std::to_string(i), out);
    final_ln.collect_params(prefix + ".final_ln", out);
  }
};

// ---------------------------------------------------------------------------
// Masked-language-model pretraining

struct MlmPretrainConfig {
  int epochs = 15;
  int batch_size = 16;
  float learning_rate = 1e-3f;
  float weight_decay = 1e-4f;
  float mask_rate = 0.15f;
  float holdout_fraction = 0.1f;
};

struct MlmPretrainResult {
  TextEncoder encoder;
  MlmHead head;
  double heldout_accuracy = 0.0;
  double majority_baseline = 0.0;
};

namespace detail {

// Deterministic mask-position choice: at least one position per text.
inline std::vector<int> choose_mask_positions(int len, float rate, SeededRng& rng) {
  std::vector<int> positions;
  for (int i = 0; i < len; ++i)
    if (rng.uniform01() < rate) positions.push_back(i);
  if (positions.empty()) positions.push_back(rng.uniform_int(0, len - 1));
  return positions;
}

}  // namespace detail

inline MlmPretrainResult pretrain_mlm(const std::vector<std::vector<int>>& corpus,
                                      const TextEncoderConfig& cfg,
                                      const MlmPretrainConfig& train_cfg,
                                      SeededRng& rng) {
  if (corpus.empty()) throw DataError("pretrain_mlm: empty corpus");
  MlmPretrainResult result;
  result.encoder = TextEncoder::create(cfg, rng);
  result.head = MlmHead::create(cfg.vocab_size);

  std::vector<int> order = rng.permutation(static_cast<int>(corpus.size()));
  const int heldout =
      std::max(1, static_cast<int>(std::floor(corpus.size() * train_cfg.holdout_fraction)));
  std::vector<int> eval_idx(order.begin(), order.begin() + heldout);
  std::vector<int> train_idx(order.begin() + heldout, order.end());
  if (train_idx.empty()) train_idx = eval_idx;  // single-text corpora train on it too

  NamedParams named;
  result.encoder.collect_params("mlm", named);
  result.head.collect_params("mlm.head", named);
  AdamWConfig opt_cfg;
  opt_cfg.learning_rate = train_cfg.learning_rate;
  opt_cfg.weight_decay = train_cfg.weight_decay;
  AdamW opt(trainable_of(named), opt_cfg);

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(train_cfg.batch_size)) {
      const std::size_t stop =
          std::min(train_idx.size(), start + static_cast<std::size_t>(train_cfg.batch_size));
      Tape tape;
      std::vector<Tensor> masked_rows;
      std::vector<int> targets;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& text = corpus[static_cast<std::size_t>(train_idx[i])];
        const int len = std::min<int>(static_cast<int>(text.size()), cfg.max_seq_len);
        if (len == 0) continue;
        std::vector<int> input(text.begin(), text.begin() + len);
        const auto positions = detail::choose_mask_positions(len, train_cfg.mask_rate, rng);
        for (int pos : positions) {
          targets.push_back(input[static_cast<std::size_t>(pos)]);
          input[static_cast<std::size_t>(pos)] = Vocab::kMaskId;
        }
        Tensor hidden = result.encoder.forward(input, {}, &tape);
        for (int pos : positions) masked_rows.push_back(take_row(hidden, pos, &tape));
      }
      if (masked_rows.empty()) continue;
      Tensor rows = stack_rows(masked_rows, &tape);
      Tensor probs = softmax_rows(result.head.logits(result.encoder, rows, &tape), &tape);
      Tensor loss = cross_entropy_mean(probs, targets, &tape);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
  }

  // Held-out masked accuracy vs the majority-token baseline.
  std::vector<long long> counts(static_cast<std::size_t>(cfg.vocab_size), 0);
  for (int idx : train_idx)
    for (int id : corpus[static_cast<std::size_t>(idx)]) counts[static_cast<std::size_t>(id)]++;
  const int majority_token = static_cast<int>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());

  SeededRng eval_rng(rng.seed() ^ 0x9e3779b97f4a7c15ULL);
  long long correct = 0, majority_hits = 0, total = 0;
  for (int idx : eval_idx) {
    const auto& text = corpus[static_cast<std::size_t>(idx)];
    const int len = std::min<int>(static_cast<int>(text.size()), cfg.max_seq_len);
    if (len == 0) continue;
    std::vector<int> input(text.begin(), text.begin() + len);
    const auto positions = detail::choose_mask_positions(len, train_cfg.mask_rate, eval_rng);
    for (int pos : positions) input[static_cast<std::size_t>(pos)] = Vocab::kMaskId;
    Tensor hidden = result.encoder.forward(input, {}, nullptr);
    std::vector<Tensor> rows;
    for (int pos : positions) rows.push_back(take_row(hidden, pos));
    Tensor logits = result.head.logits(result.encoder, stack_rows(rows), nullptr);
    for (std::size_t i = 0; i < positions.size(); ++i) {
      int best = 0;
      for (int cvocab = 1; cvocab < logits.cols(); ++cvocab)
        if (logits.at(static_cast<int>(i), cvocab) > logits.at(static_cast<int>(i), best))
          best = cvocab;
      const int gold = text[static_cast<std::size_t>(positions[i])];
      correct += best == gold;
      majority_hits += majority_token == gold;
      ++total;
    }
  }
  result.heldout_accuracy = total > 0 ? static_cast<double>(correct) / total : 0.0;
  result.majority_baseline = total > 0 ? static_cast<double>(majority_hits) / total : 0.0;
  return result;
}

}  // namespace sample
