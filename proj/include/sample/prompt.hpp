#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"
#include "sample/vocab.hpp"

namespace sample {

enum class PromptKind { kDiscrete, kContinuous, kMixed };

inline const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::kDiscrete: return "discrete";
    case PromptKind::kContinuous: return "continuous";
    case PromptKind::kMixed: return "mixed";
  }
  return "?";
}

// A template is an ordered slot list around exactly one mask slot. Word slots
// carry vocabulary ids, soft slots reference trainable vectors by index.
struct PromptSlot {
  enum Type { kWord, kMask, kSoft } type;
  int word_id = -1;
  int soft_index = -1;
};

struct PromptTemplate {
  PromptKind kind = PromptKind::kDiscrete;
  std::vector<PromptSlot> slots;
  int soft_count = 0;
  std::string surface;

  int length() const { return static_cast<int>(slots.size()); }

  void validate() const {
    int masks = 0;
    for (const auto& s : slots) masks += s.type == PromptSlot::kMask;
    if (masks != 1) {
      throw std::invalid_argument("prompt template: expected exactly one mask slot, found " +
                                  std::to_string(masks));
    }
    if (soft_count > Vocab::kSoftSlots) {
      throw std::invalid_argument("prompt template: " + std::to_string(soft_count) +
                                  " soft slots exceed the " +
                                  std::to_string(Vocab::kSoftSlots) + " reserved markers");
    }
    switch (kind) {
      case PromptKind::kDiscrete:
        if (soft_count != 0)
          throw std::invalid_argument("discrete template cannot carry soft slots");
        break;
      case PromptKind::kContinuous: {
        if (soft_count < 1)
          throw std::invalid_argument("continuous template needs at least one soft slot");
        if (length() != soft_count + 1 || slots.back().type != PromptSlot::kMask)
          throw std::invalid_argument(
              "continuous template must be soft slots followed by the mask");
        for (int i = 0; i < soft_count; ++i)
          if (slots[static_cast<std::size_t>(i)].type != PromptSlot::kSoft)
            throw std::invalid_argument(
                "continuous template must be soft slots followed by the mask");
        break;
      }
      case PromptKind::kMixed: {
        if (soft_count != 2 || length() < 3 || slots.front().type != PromptSlot::kSoft ||
            slots.back().type != PromptSlot::kSoft)
          throw std::invalid_argument(
              "mixed template must be a soft head, worded core with mask, soft tail");
        for (std::size_t i = 1; i + 1 < slots.size(); ++i)
          if (slots[i].type == PromptSlot::kSoft)
            throw std::invalid_argument("mixed template core cannot contain soft slots");
        break;
      }
    }
  }

  // Builds a discrete template from a surface string containing one <mask>.
  static PromptTemplate discrete(const Vocab& vocab, const std::string& surface) {
    PromptTemplate t;
    t.kind = PromptKind::kDiscrete;
    t.surface = surface;
    for (const auto& word : tokenize(surface)) {
      PromptSlot slot;
      if (word == Vocab::mask_token()) {
        slot.type = PromptSlot::kMask;
      } else {
        slot.type = PromptSlot::kWord;
        slot.word_id = vocab.lookup(word);
      }
      t.slots.push_back(slot);
    }
    t.validate();
    return t;
  }

  static PromptTemplate continuous(int soft_count) {
    PromptTemplate t;
    t.kind = PromptKind::kContinuous;
    t.soft_count = soft_count;
    std::string surface;
    for (int i = 0; i < soft_count; ++i) {
      t.slots.push_back({PromptSlot::kSoft, -1, i});
      surface += Vocab::soft_token(i) + " ";
    }
    t.slots.push_back({PromptSlot::kMask, -1, -1});
    t.surface = surface + Vocab::mask_token();
    t.validate();
    return t;
  }

  // Soft head + discrete core + soft tail.
  static PromptTemplate mixed(const Vocab& vocab, const std::string& core_surface) {
    PromptTemplate core = discrete(vocab, core_surface);
    PromptTemplate t;
    t.kind = PromptKind::kMixed;
    t.soft_count = 2;
    t.slots.push_back({PromptSlot::kSoft, -1, 0});
    for (const auto& s : core.slots) t.slots.push_back(s);
    t.slots.push_back({PromptSlot::kSoft, -1, 1});
    t.surface = Vocab::soft_token(0) + " " + core_surface + " " + Vocab::soft_token(1);
    t.validate();
    return t;
  }
};

// The five hand-written discrete template surface forms, in fixed order.
inline const std::vector<std::string>& discrete_preset_surfaces() {
  static const std::vector<std::string> surfaces = {
      "This is <mask>.",
      "This is <mask> news.",
      "This news is <mask>.",
      "This is a piece of <mask> news.",
      "This is a piece of news with <mask> information.",
  };
  return surfaces;
}

inline std::vector<PromptTemplate> discrete_presets(const Vocab& vocab) {
  std::vector<PromptTemplate> out;
  for (const auto& surface : discrete_preset_surfaces())
    out.push_back(PromptTemplate::discrete(vocab, surface));
  return out;
}

// 1-based preset index, matching the order above.
inline PromptTemplate discrete_preset(const Vocab& vocab, int index) {
  const auto& surfaces = discrete_preset_surfaces();
  if (index < 1 || index > static_cast<int>(surfaces.size())) {
    throw std::invalid_argument("discrete preset index " + std::to_string(index) +
                                " outside 1.." + std::to_string(surfaces.size()));
  }
  return PromptTemplate::discrete(vocab, surfaces[static_cast<std::size_t>(index - 1)]);
}

struct BuiltPrompt {
  std::vector<int> token_ids;
  int mask_position = -1;
  std::vector<int> soft_positions;
};

// Prompt first, then the text, truncated from its tail so that template
// tokens always survive.
inline BuiltPrompt build_prompt(const PromptTemplate& tmpl,
                                const std::vector<int>& text_token_ids,
                                int max_seq_len) {
  tmpl.validate();
  if (tmpl.length() > max_seq_len) {
    throw std::invalid_argument("build_prompt: template length " +
                                std::to_string(tmpl.length()) +
                                " alone exceeds max_seq_len " +
                                std::to_string(max_seq_len));
  }
  BuiltPrompt out;
  out.token_ids.reserve(static_cast<std::size_t>(max_seq_len));
  for (const auto& slot : tmpl.slots) {
    switch (slot.type) {
      case PromptSlot::kWord:
        out.token_ids.push_back(slot.word_id);
        break;
      case PromptSlot::kMask:
        out.mask_position = static_cast<int>(out.token_ids.size());
        out.token_ids.push_back(Vocab::kMaskId);
        break;
      case PromptSlot::kSoft:
        out.soft_positions.push_back(static_cast<int>(out.token_ids.size()));
        out.token_ids.push_back(Vocab::soft_id(slot.soft_index));
        break;
    }
  }
  const std::size_t budget =
      static_cast<std::size_t>(max_seq_len) - out.token_ids.size();
  const std::size_t take = std::min(budget, text_token_ids.size());
  out.token_ids.insert(out.token_ids.end(), text_token_ids.begin(),
                       text_token_ids.begin() + static_cast<std::ptrdiff_t>(take));
  return out;
}

enum class SoftInit { kRandom, kFc, kLstm };

inline const char* to_string(SoftInit s) {
  switch (s) {
    case SoftInit::kRandom: return "random";
    case SoftInit::kFc: return "fc";
    case SoftInit::kLstm: return "lstm";
  }
  return "?";
}

// Trainable soft-token vectors. The materialized output is the optimizable
// prompt embedding set: for the random strategy it is the base vectors
// directly; fc and lstm reparameterize the base through a trainable map.
class SoftTokenBank {
 public:
  SoftTokenBank() = default;

  static SoftTokenBank create(SoftInit strategy, int count, int dim, SeededRng& rng) {
    SoftTokenBank bank;
    bank.strategy_ = strategy;
    bank.count_ = count;
    bank.dim_ = dim;
    if (count == 0) return bank;  // discrete template: no soft parameters
    bank.base_ = normal_tensor(rng, count, dim, 0.02f);
    if (strategy == SoftInit::kFc) {
      bank.fc_w_ = normal_tensor(rng, dim, dim, std::sqrt(1.0f / static_cast<float>(dim)));
      bank.fc_b_ = Tensor::zeros(1, dim, true);
    } else if (strategy == SoftInit::kLstm) {
      const float s = std::sqrt(1.0f / static_cast<float>(dim));
      bank.lstm_wx_ = normal_tensor(rng, dim, 4 * dim, s);
      bank.lstm_wh_ = normal_tensor(rng, dim, 4 * dim, s);
      bank.lstm_b_ = Tensor::zeros(1, 4 * dim, true);
    }
    return bank;
  }

  SoftInit strategy() const { return strategy_; }
  int count() const { return count_; }
  int dim() const { return dim_; }
  bool empty() const { return count_ == 0; }
  Tensor base() const { return base_; }

  std::vector<Tensor> materialize(Tape* tape) const {
    if (count_ == 0) {
      throw std::invalid_argument("soft token bank: nothing to materialize with t = 0");
    }
    std::vector<Tensor> rows;
    rows.reserve(static_cast<std::size_t>(count_));
    switch (strategy_) {
      case SoftInit::kRandom: {
        for (int k = 0; k < count_; ++k) rows.push_back(take_row(base_, k, tape));
        break;
      }
      case SoftInit::kFc: {
        Tensor mapped = add_rowvec(matmul(base_, fc_w_, tape), fc_b_, tape);
        for (int k = 0; k < count_; ++k) rows.push_back(take_row(mapped, k, tape));
        break;
      }
      case SoftInit::kLstm: {
        Tensor h = Tensor::zeros(1, dim_);
        Tensor c = Tensor::zeros(1, dim_);
        for (int k = 0; k < count_; ++k) {
          Tensor x = take_row(base_, k, tape);
          Tensor z = add_rowvec(add(matmul(x, lstm_wx_, tape), matmul(h, lstm_wh_, tape), tape),
                                lstm_b_, tape);
          Tensor in_gate = sigmoid(slice_cols(z, 0, dim_, tape), tape);
          Tensor forget_gate = sigmoid(slice_cols(z, dim_, dim_, tape), tape);
          Tensor cand = tanh(slice_cols(z, 2 * dim_, dim_, tape), tape);
          Tensor out_gate = sigmoid(slice_cols(z, 3 * dim_, dim_, tape), tape);
          c = add(mul(forget_gate, c, tape), mul(in_gate, cand, tape), tape);
          h = mul(out_gate, tanh(c, tape), tape);
          rows.push_back(h);
        }
        break;
      }
    }
    return rows;
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    if (count_ == 0) return;
    out.emplace_back(prefix + ".base", base_);
    if (strategy_ == SoftInit::kFc) {
      out.emplace_back(prefix + ".fc_w", fc_w_);
      out.emplace_back(prefix + ".fc_b", fc_b_);
    } else if (strategy_ == SoftInit::kLstm) {
      out.emplace_back(prefix + ".lstm_wx", lstm_wx_);
      out.emplace_back(prefix + ".lstm_wh", lstm_wh_);
      out.emplace_back(prefix + ".lstm_b", lstm_b_);
    }
  }

  // Test hook: zero the reparameterization while keeping the base.
  void zero_fc_map() {
    if (strategy_ != SoftInit::kFc) return;
    for (auto& v : fc_w_.data()) v = 0.0f;
    for (auto& v : fc_b_.data()) v = 0.0f;
  }

 private:
  static Tensor normal_tensor(SeededRng& rng, int rows, int cols, float stddev) {
    Tensor t = Tensor::zeros(rows, cols, true);
    for (auto& v : t.data()) v = rng.normal(0.0f, stddev);
    return t;
  }

  SoftInit strategy_ = SoftInit::kRandom;
  int count_ = 0;
  int dim_ = 0;
  Tensor base_;
  Tensor fc_w_, fc_b_;
  Tensor lstm_wx_, lstm_wh_, lstm_b_;
};

}  // namespace sample
