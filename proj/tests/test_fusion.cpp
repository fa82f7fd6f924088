#include <gtest/gtest.h>

#include <cmath>

#include "sample/fusion.hpp"
#include "sample/gradcheck.hpp"

using namespace sample;

TEST(SelectImage, BasicsAndTies) {
  EXPECT_EQ(select_image({1, 0}, {{0.3f, 0.3f}}), 0);
  // similarities 0.2 / 0.9 / 0.4 against the text direction
  const std::vector<float> text = {1, 0};
  std::vector<std::vector<float>> images = {
      {0.2f, 0.9798f}, {0.9f, 0.4359f}, {0.4f, 0.9165f}};
  EXPECT_EQ(select_image(text, images), 1);
  // exact tie breaks to the lowest index
  EXPECT_EQ(select_image({1, 0}, {{0.5f, 0.5f}, {0.5f, 0.5f}}), 0);
  EXPECT_THROW(select_image({1, 0}, {}), std::invalid_argument);
}

TEST(SelectImage, InvariantUnderTextRescaling) {
  SeededRng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> text(6);
    for (auto& v : text) v = rng.normal(0.0f, 1.0f);
    std::vector<std::vector<float>> images(5, std::vector<float>(6));
    for (auto& img : images)
      for (auto& v : img) v = rng.normal(0.0f, 1.0f);
    const int base = select_image(text, images);
    std::vector<float> scaled = text;
    const float factor = rng.uniform(0.1f, 9.0f);
    for (auto& v : scaled) v *= factor;
    EXPECT_EQ(select_image(scaled, images), base);
  }
}

TEST(CosineSimilarity, KnownValues) {
  EXPECT_NEAR(cosine_similarity({2, 3, 4}, {2, 3, 4}), 1.0, 1e-6);
  EXPECT_NEAR(cosine_similarity({1, 0}, {0, 1}), 0.0, 1e-9);
  EXPECT_NEAR(cosine_similarity({1, 0}, {1, 1}), 0.7071, 1e-4);
  EXPECT_EQ(cosine_similarity({0, 0}, {1, 1}), 0.0);  // degenerate-norm rule
}

TEST(CosineSimilarity, SymmetricAndScaleInvariant) {
  SeededRng rng(32);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<float> a(5), b(5);
    for (auto& v : a) v = rng.normal(0.0f, 1.0f);
    for (auto& v : b) v = rng.normal(0.0f, 1.0f);
    const double ab = cosine_similarity(a, b);
    EXPECT_NEAR(ab, cosine_similarity(b, a), 1e-6);
    std::vector<float> a2 = a;
    for (auto& v : a2) v *= 2.0f;
    EXPECT_NEAR(ab, cosine_similarity(a2, b), 1e-6);
    EXPECT_GE(ab, -1.0 - 1e-9);
    EXPECT_LE(ab, 1.0 + 1e-9);
  }
}

TEST(Fuse, StrategySemantics) {
  Tensor a = Tensor::row({1, 2});
  Tensor b = Tensor::row({3, 4});
  Tensor cat = fuse(a, b, FusionStrategy::kConcat);
  EXPECT_EQ(cat.cols(), 4);
  EXPECT_FLOAT_EQ(cat.at(0, 2), 3.0f);
  Tensor avg = fuse(a, b, FusionStrategy::kAvg);
  EXPECT_FLOAT_EQ(avg.at(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(avg.at(0, 1), 3.0f);
  Tensor prod = fuse(Tensor::row({2, 3}), Tensor::row({4, 5}), FusionStrategy::kProduct);
  EXPECT_FLOAT_EQ(prod.at(0, 0), 8.0f);
  EXPECT_FLOAT_EQ(prod.at(0, 1), 15.0f);
  Tensor mx = fuse(Tensor::row({1, 2}), Tensor::row({3, 0}), FusionStrategy::kMax);
  EXPECT_FLOAT_EQ(mx.at(0, 0), 3.0f);
  EXPECT_FLOAT_EQ(mx.at(0, 1), 2.0f);
  EXPECT_THROW(fuse(a, Tensor::row({1, 2, 3}), FusionStrategy::kAvg), std::invalid_argument);
}

TEST(Gate, EvalAtRunningMeanIsExactlyHalf) {
  FusionGate state = FusionGate::create();
  state.running.at(0, 0) = 0.37f;
  state.running.at(0, 1) = 0.8f;
  FusionConfig cfg;
  Tensor sims = Tensor::from(2, 1, {0.37f, 0.37f});
  Tensor fused = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor out = gate(sims, fused, state, cfg, /*training=*/false);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c)
      EXPECT_EQ(out.at(r, c), 0.5f * fused.at(r, c));  // bit-exact
}

TEST(Gate, AlphaZeroGivesZeroVector) {
  FusionGate state = FusionGate::create();
  FusionConfig cfg;
  cfg.alpha = 0.0f;
  Tensor sims = Tensor::from(2, 1, {0.9f, -0.3f});
  Tensor fused = Tensor::from(2, 2, {5, -7, 11, 13});
  Tensor out = gate(sims, fused, state, cfg, true);
  for (float v : out.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Gate, TrainBatchOracle) {
  // sims [0, 2] standardize to [-1, +1]; g = sigmoid of that
  FusionGate state = FusionGate::create();
  FusionConfig cfg;
  Tensor sims = Tensor::from(2, 1, {0.0f, 2.0f});
  Tensor fused = Tensor::filled(2, 3, 1.0f);
  Tensor out = gate(sims, fused, state, cfg, true);
  EXPECT_NEAR(out.at(0, 0), 0.2689, 1e-3);
  EXPECT_NEAR(out.at(1, 0), 0.7311, 1e-3);
  // running stats absorbed the batch: mean 1, population var 1 (momentum 0.1)
  EXPECT_NEAR(state.running_mean(), 0.1 * 1.0, 1e-6);
  EXPECT_NEAR(state.running_var(), 0.9 * 1.0 + 0.1 * 1.0, 1e-6);
}

TEST(Gate, SingleInstanceTrainGivesHalf) {
  FusionGate state = FusionGate::create();
  FusionConfig cfg;
  Tensor sims = Tensor::from(1, 1, {0.73f});
  Tensor fused = Tensor::from(1, 2, {2, 4});
  Tensor out = gate(sims, fused, state, cfg, true);
  EXPECT_EQ(out.at(0, 0), 1.0f);
  EXPECT_EQ(out.at(0, 1), 2.0f);
}

TEST(Gate, DisabledGateWithUnitAlphaIsIdentity) {
  FusionGate state = FusionGate::create();
  const float mean_before = state.running_mean();
  const float var_before = state.running_var();
  FusionConfig cfg;
  cfg.gate_enabled = false;
  Tensor sims = Tensor::from(2, 1, {0.1f, 0.9f});
  Tensor fused = Tensor::from(2, 2, {1, 2, 3, 4});
  Tensor out = gate(sims, fused, state, cfg, true);
  EXPECT_EQ(out.data(), fused.data());
  EXPECT_EQ(state.running_mean(), mean_before);  // stats untouched
  EXPECT_EQ(state.running_var(), var_before);
}

TEST(Gate, EvalIsPureAndBounded) {
  SeededRng rng(33);
  FusionGate state = FusionGate::create();
  state.running.at(0, 0) = 0.2f;
  state.running.at(0, 1) = 0.05f;
  FusionConfig cfg;
  for (int trial = 0; trial < 500; ++trial) {
    Tensor sims = Tensor::from(1, 1, {rng.uniform(-1.0f, 1.0f)});
    Tensor fused = Tensor::from(1, 2, {rng.normal(0.0f, 2.0f), rng.normal(0.0f, 2.0f)});
    Tensor out1 = gate(sims, fused, state, cfg, false);
    Tensor out2 = gate(sims, fused, state, cfg, false);
    EXPECT_EQ(out1.data(), out2.data());
    EXPECT_EQ(state.running_mean(), 0.2f);
    EXPECT_EQ(state.running_var(), 0.05f);
    const float g = state.last_gate;
    EXPECT_GT(g, 0.0f);
    EXPECT_LT(g, 1.0f);
    // norm contract: ||m|| <= alpha * ||f||
    double nf = 0.0, nm = 0.0;
    for (int c = 0; c < 2; ++c) {
      nf += static_cast<double>(fused.at(0, c)) * fused.at(0, c);
      nm += static_cast<double>(out1.at(0, c)) * out1.at(0, c);
    }
    EXPECT_LE(std::sqrt(nm), cfg.alpha * std::sqrt(nf) + 1e-6);
  }
}

TEST(ProjectionHead, EvalDeterministicAndShaped) {
  SeededRng rng(34);
  ProjectionHead head = ProjectionHead::create(8, 4, 0.6f, rng);
  Tensor x = Tensor::zeros(3, 8);
  for (auto& v : x.data()) v = rng.normal(0.0f, 1.0f);
  SeededRng d1(1), d2(1);
  Tensor a = head.forward(x, nullptr, d1, false);
  Tensor b = head.forward(x, nullptr, d2, false);
  EXPECT_EQ(a.rows(), 3);
  EXPECT_EQ(a.cols(), 4);
  EXPECT_EQ(a.data(), b.data());
  EXPECT_TRUE(all_finite(a));
}

TEST(ProjectionHead, AllZeroParametersGiveZeroOutput) {
  SeededRng rng(35);
  ProjectionHead head = ProjectionHead::create(6, 4, 0.0f, rng);
  for (auto& v : head.fc1.weight.data()) v = 0.0f;
  for (auto& v : head.fc1.bias.data()) v = 0.0f;
  for (auto& v : head.fc2.weight.data()) v = 0.0f;
  for (auto& v : head.fc2.bias.data()) v = 0.0f;
  for (auto& v : head.bn1.beta.data()) v = 0.0f;
  for (auto& v : head.bn2.beta.data()) v = 0.0f;
  Tensor x = Tensor::from(2, 6, {1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, -6});
  SeededRng drop(1);
  Tensor out = head.forward(x, nullptr, drop, true);
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(ProjectionHead, GradientsFlowThroughGate) {
  SeededRng rng(36);
  ProjectionHead text_head = ProjectionHead::create(6, 4, 0.5f, rng);
  ProjectionHead image_head = ProjectionHead::create(6, 4, 0.5f, rng);
  FusionConfig cfg;
  Tensor xt = Tensor::zeros(3, 6);
  Tensor xi = Tensor::zeros(3, 6);
  for (auto& v : xt.data()) v = rng.normal(0.0f, 1.0f);
  for (auto& v : xi.data()) v = rng.normal(0.0f, 1.0f);
  auto loss_fn = [&](Tape* tape) {
    SeededRng drop(77);  // fixed dropout masks across evaluations
    FusionGate state = FusionGate::create();
    Tensor pt = text_head.forward(xt, tape, drop, true);
    Tensor pi = image_head.forward(xi, tape, drop, true);
    Tensor sims = rowwise_cosine(pt, pi, tape);
    Tensor fused = fuse(pt, pi, cfg.strategy, tape);
    return mean_all(gate(sims, fused, state, cfg, true, tape), tape);
  };
  NamedParams params;
  text_head.collect_params("text_head", params);
  image_head.collect_params("image_head", params);
  GradCheckReport report = grad_check(loss_fn, params, 1e-3);
  EXPECT_TRUE(report.passed) << report.max_rel_err;
}

TEST(FuseSingle, ReportsStrategyAndGate) {
  FusionGate state = FusionGate::create();
  FusionConfig cfg;
  FusedFeature f = fuse_single({1, 0, 0}, {0, 1, 0}, state, cfg, false);
  EXPECT_EQ(f.values.size(), 6u);
  EXPECT_EQ(f.strategy, FusionStrategy::kConcat);
  EXPECT_GT(f.gate_value, 0.0f);
  EXPECT_LT(f.gate_value, 1.0f);
}
