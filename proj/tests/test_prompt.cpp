#include <gtest/gtest.h>

#include "sample/prompt.hpp"
#include "sample/vocab.hpp"

using namespace sample;

namespace {

Vocab test_vocab() {
  Vocab v;
  for (const auto& surface : discrete_preset_surfaces())
    for (const auto& w : tokenize(surface))
      if (w != Vocab::mask_token()) v.add(w);
  for (int i = 0; i < 20; ++i) v.add("w" + std::to_string(i));
  return v;
}

}  // namespace

TEST(Vocab, SpecialsPinned) {
  Vocab v;
  EXPECT_EQ(v.lookup("<pad>"), 0);
  EXPECT_EQ(v.lookup("<unk>"), 1);
  EXPECT_EQ(v.lookup("<mask>"), 2);
  EXPECT_EQ(v.lookup("never-seen-word"), Vocab::kUnkId);
  EXPECT_EQ(v.lookup(Vocab::soft_token(0)), Vocab::soft_id(0));
}

TEST(Vocab, Tokenizer) {
  const auto words = tokenize("This is A piece, of news. <mask> Whoa!");
  const std::vector<std::string> expected = {"this", "is", "a",      "piece", "of",
                                             "news", "<mask>", "whoa"};
  EXPECT_EQ(words, expected);
}

TEST(Presets, FiveTableForms) {
  Vocab v = test_vocab();
  const auto presets = discrete_presets(v);
  ASSERT_EQ(presets.size(), 5u);
  EXPECT_EQ(presets[0].surface, "This is <mask>.");
  EXPECT_EQ(presets[3].surface, "This is a piece of <mask> news.");
  EXPECT_EQ(presets[4].surface, "This is a piece of news with <mask> information.");
  for (const auto& p : presets) {
    EXPECT_EQ(p.kind, PromptKind::kDiscrete);
    EXPECT_EQ(p.soft_count, 0);
  }
}

TEST(Templates, ContinuousShape) {
  PromptTemplate t = PromptTemplate::continuous(4);
  EXPECT_EQ(t.length(), 5);
  EXPECT_EQ(t.slots.back().type, PromptSlot::kMask);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(t.slots[static_cast<std::size_t>(i)].type, PromptSlot::kSoft);
    EXPECT_EQ(t.slots[static_cast<std::size_t>(i)].soft_index, i);
  }
}

TEST(Templates, MixedShape) {
  Vocab v = test_vocab();
  PromptTemplate t = PromptTemplate::mixed(v, "This is a piece of <mask> news.");
  EXPECT_EQ(t.kind, PromptKind::kMixed);
  EXPECT_EQ(t.soft_count, 2);
  EXPECT_EQ(t.slots.front().type, PromptSlot::kSoft);
  EXPECT_EQ(t.slots.back().type, PromptSlot::kSoft);
  int mask_at = -1;
  for (int i = 0; i < t.length(); ++i)
    if (t.slots[static_cast<std::size_t>(i)].type == PromptSlot::kMask) mask_at = i;
  EXPECT_GT(mask_at, 0);
  EXPECT_LT(mask_at, t.length() - 1);
}

TEST(Templates, ValidationRejectsBadForms) {
  Vocab v = test_vocab();
  EXPECT_THROW(PromptTemplate::discrete(v, "no mask here"), std::invalid_argument);
  EXPECT_THROW(PromptTemplate::discrete(v, "<mask> and <mask>"), std::invalid_argument);
  EXPECT_THROW(PromptTemplate::continuous(0), std::invalid_argument);
  EXPECT_THROW(PromptTemplate::continuous(Vocab::kSoftSlots + 1), std::invalid_argument);
}

TEST(BuildPrompt, ContinuousConstructionRule) {
  PromptTemplate t = PromptTemplate::continuous(4);
  const std::vector<int> text = {50, 51, 52};
  BuiltPrompt built = build_prompt(t, text, 64);
  ASSERT_EQ(built.token_ids.size(), 8u);
  EXPECT_EQ(built.mask_position, 4);
  EXPECT_EQ(built.soft_positions, (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(built.token_ids[5], 50);
  EXPECT_EQ(built.token_ids[4], Vocab::kMaskId);
}

TEST(BuildPrompt, SurfaceOfPresetFive) {
  Vocab v = test_vocab();
  PromptTemplate t = discrete_preset(v, 5);
  const std::vector<int> text = {50};
  BuiltPrompt built = build_prompt(t, text, 64);
  // "this is a piece of news with <mask> information" + text
  ASSERT_EQ(built.token_ids.size(), 10u);
  EXPECT_EQ(built.mask_position, 7);
  EXPECT_EQ(built.token_ids[static_cast<std::size_t>(built.mask_position)], Vocab::kMaskId);
  EXPECT_EQ(v.token(built.token_ids[0]), "this");
  EXPECT_EQ(v.token(built.token_ids[8]), "information");
}

TEST(BuildPrompt, TruncatesTextTailOnly) {
  PromptTemplate t = PromptTemplate::continuous(7);  // 8 template tokens
  ASSERT_EQ(t.length(), 8);
  std::vector<int> text(100, 50);
  text[55] = 60;
  BuiltPrompt built = build_prompt(t, text, 64);
  EXPECT_EQ(built.token_ids.size(), 64u);  // text truncated to 56 tokens
  EXPECT_EQ(built.token_ids[8 + 55], 60);  // head of the text survives
  for (int i = 0; i < 8; ++i) EXPECT_NE(built.token_ids[static_cast<std::size_t>(i)], 50);
}

TEST(BuildPrompt, OversizedTemplateRejected) {
  PromptTemplate t = PromptTemplate::continuous(6);
  EXPECT_THROW(build_prompt(t, {}, 5), std::invalid_argument);
}

TEST(BuildPrompt, DeterministicAndSingleMask) {
  Vocab v = test_vocab();
  SeededRng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    PromptTemplate t = trial % 2 == 0 ? PromptTemplate::continuous(rng.uniform_int(1, 8))
                                      : discrete_preset(v, rng.uniform_int(1, 5));
    std::vector<int> text(static_cast<std::size_t>(rng.uniform_int(0, 80)));
    for (auto& id : text) id = rng.uniform_int(20, 40);
    BuiltPrompt a = build_prompt(t, text, 64);
    BuiltPrompt b = build_prompt(t, text, 64);
    EXPECT_EQ(a.token_ids, b.token_ids);
    EXPECT_EQ(a.mask_position, b.mask_position);
    int masks = 0;
    for (int id : a.token_ids) masks += id == Vocab::kMaskId;
    EXPECT_EQ(masks, 1);
    EXPECT_EQ(a.token_ids[static_cast<std::size_t>(a.mask_position)], Vocab::kMaskId);
    EXPECT_LE(a.token_ids.size(), 64u);
  }
}

TEST(SoftBank, RandomStrategyIsIdentity) {
  SeededRng rng(21);
  SoftTokenBank bank = SoftTokenBank::create(SoftInit::kRandom, 3, 8, rng);
  const auto rows = bank.materialize(nullptr);
  ASSERT_EQ(rows.size(), 3u);
  for (int k = 0; k < 3; ++k)
    for (int d = 0; d < 8; ++d)
      EXPECT_FLOAT_EQ(rows[static_cast<std::size_t>(k)].at(0, d), bank.base().at(k, d));
}

TEST(SoftBank, ZeroedFcMapGivesZeros) {
  SeededRng rng(22);
  SoftTokenBank bank = SoftTokenBank::create(SoftInit::kFc, 2, 8, rng);
  bank.zero_fc_map();
  for (const auto& row : bank.materialize(nullptr))
    for (float v : row.data()) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(SoftBank, LstmIsCausal) {
  SeededRng rng(23);
  SoftTokenBank bank = SoftTokenBank::create(SoftInit::kLstm, 3, 8, rng);
  const auto before = bank.materialize(nullptr);
  // Perturb base vector 2 (index 1): outputs 2 and 3 change, output 1 does not.
  bank.base().at(1, 0) += 0.5f;
  const auto after = bank.materialize(nullptr);
  auto max_abs_diff = [](const Tensor& a, const Tensor& b) {
    float m = 0.0f;
    for (std::size_t i = 0; i < a.size(); ++i)
      m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
    return m;
  };
  EXPECT_FLOAT_EQ(max_abs_diff(before[0], after[0]), 0.0f);
  EXPECT_GT(max_abs_diff(before[1], after[1]), 0.0f);
  EXPECT_GT(max_abs_diff(before[2], after[2]), 0.0f);
}

TEST(SoftBank, EmptyBankCannotMaterialize) {
  SeededRng rng(24);
  SoftTokenBank bank = SoftTokenBank::create(SoftInit::kRandom, 0, 8, rng);
  EXPECT_TRUE(bank.empty());
  EXPECT_THROW(bank.materialize(nullptr), std::invalid_argument);
}

TEST(SoftBank, GradientsReachBaseThroughStrategies) {
  for (SoftInit strategy : {SoftInit::kRandom, SoftInit::kFc, SoftInit::kLstm}) {
    SeededRng rng(25);
    SoftTokenBank bank = SoftTokenBank::create(strategy, 2, 6, rng);
    Tape tape;
    auto rows = bank.materialize(&tape);
    Tensor loss = mean_all(mul(rows[0], rows[0], &tape), &tape);
    loss = add(loss, mean_all(mul(rows[1], rows[1], &tape), &tape), &tape);
    tape.backward(loss);
    bool any = false;
    for (float g : bank.base().grad())
      if (g != 0.0f) any = true;
    EXPECT_TRUE(any) << "strategy " << to_string(strategy);
  }
}
