#include <gtest/gtest.h>

#include <cmath>

#include "sample/optim.hpp"
#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

using namespace sample;

TEST(AdamW, ZeroGradZeroDecayIsFixedPoint) {
  Tensor p = Tensor::row({1.0f, -2.0f, 3.0f}, true);
  AdamWConfig cfg;
  cfg.learning_rate = 0.1f;
  cfg.weight_decay = 0.0f;
  AdamW opt({p}, cfg);
  for (int i = 0; i < 5; ++i) {
    p.grad();  // allocate zero gradient
    opt.step();
    opt.zero_grad();
  }
  EXPECT_FLOAT_EQ(p.at(0, 0), 1.0f);
  EXPECT_FLOAT_EQ(p.at(0, 1), -2.0f);
  EXPECT_FLOAT_EQ(p.at(0, 2), 3.0f);
}

TEST(AdamW, SingleStepBiasCorrectedUpdate) {
  // One step with g=1, lr=0.1, default betas, wd=0:
  // m_hat = 1, v_hat = 1, delta = -lr / (1 + eps) ~ -0.1
  Tensor p = Tensor::scalar(0.5f, true);
  AdamWConfig cfg;
  cfg.learning_rate = 0.1f;
  cfg.weight_decay = 0.0f;
  AdamW opt({p}, cfg);
  p.grad()[0] = 1.0f;
  opt.step();
  EXPECT_NEAR(p.item(), 0.5f - 0.1f, 1e-6);
  EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamW, DecoupledDecayShrinksWithZeroGrad) {
  Tensor p = Tensor::row({2.0f, -2.0f}, true);
  AdamWConfig cfg;
  cfg.learning_rate = 0.1f;
  cfg.weight_decay = 0.5f;
  AdamW opt({p}, cfg);
  p.grad();
  opt.step();
  EXPECT_LT(std::fabs(p.at(0, 0)), 2.0f);
  EXPECT_LT(std::fabs(p.at(0, 1)), 2.0f);
  EXPECT_FLOAT_EQ(p.at(0, 0), 2.0f * (1.0f - 0.1f * 0.5f));
}

TEST(AdamW, StepCounterIncrementsByOne) {
  Tensor p = Tensor::scalar(1.0f, true);
  AdamW opt({p}, {});
  for (int i = 1; i <= 7; ++i) {
    p.grad()[0] = 0.3f;
    opt.step();
    EXPECT_EQ(opt.step_count(), i);
  }
}

TEST(AdamW, DeterministicTrajectories) {
  auto run = [] {
    SeededRng rng(77);
    std::vector<float> init(8);
    for (auto& v : init) v = rng.uniform(-1.0f, 1.0f);
    Tensor p = Tensor::from(2, 4, init, true);
    AdamWConfig cfg;
    cfg.learning_rate = 1e-2f;
    AdamW opt({p}, cfg);
    for (int step = 0; step < 50; ++step) {
      Tape tape;
      Tensor loss = mean_all(mul(p, p, &tape), &tape);
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
    }
    return p.data();
  };
  const auto a = run();
  const auto b = run();
  // bit-identical trajectories for identical seeds and schedule
  EXPECT_TRUE(a == b);
}

TEST(AdamW, DescendsQuadratic) {
  Tensor p = Tensor::row({3.0f, -4.0f}, true);
  AdamWConfig cfg;
  cfg.learning_rate = 0.05f;
  cfg.weight_decay = 0.0f;
  AdamW opt({p}, cfg);
  float prev = 25.0f;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    Tensor loss = mean_all(mul(p, p, &tape), &tape);
    tape.backward(loss);
    opt.step();
    opt.zero_grad();
    prev = loss.item();
  }
  EXPECT_LT(prev, 0.1f);
}
