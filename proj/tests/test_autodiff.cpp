#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "sample/gradcheck.hpp"
#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

using namespace sample;

namespace {

Tensor rand_tensor(SeededRng& rng, int rows, int cols, float lo, float hi,
                   bool requires_grad = true) {
  std::vector<float> data(static_cast<std::size_t>(rows) * cols);
  for (auto& v : data) v = rng.uniform(lo, hi);
  return Tensor::from(rows, cols, std::move(data), requires_grad);
}

// Projects a tensor to a scalar through a fixed random functional so that
// every output entry influences the loss.
Tensor to_scalar(const Tensor& t, const Tensor& weights, Tape* tape) {
  return mean_all(mul(t, weights, tape), tape);
}

void expect_grads_match(const std::function<Tensor(Tape*)>& fn,
                        const NamedParams& params, double tol = 1e-3) {
  GradCheckReport report = grad_check(fn, params, tol);
  EXPECT_TRUE(report.passed) << "max relative error " << report.max_rel_err;
}

}  // namespace

TEST(Backward, SquareAtThree) {
  Tensor x = Tensor::scalar(3.0f, true);
  Tape tape;
  Tensor loss = mul(x, x, &tape);
  tape.backward(loss);
  EXPECT_FLOAT_EQ(x.grad()[0], 6.0f);
}

TEST(Backward, SigmoidAtZero) {
  Tensor x = Tensor::scalar(0.0f, true);
  Tape tape;
  Tensor loss = sigmoid(x, &tape);
  tape.backward(loss);
  EXPECT_FLOAT_EQ(x.grad()[0], 0.25f);
}

TEST(Backward, NonScalarLossRejected) {
  Tensor x = Tensor::row({1.0f, 2.0f}, true);
  Tape tape;
  Tensor y = relu(x, &tape);
  EXPECT_THROW(tape.backward(y), std::invalid_argument);
}

TEST(Backward, TapeIsConsumed) {
  Tensor x = Tensor::scalar(2.0f, true);
  Tape tape;
  Tensor loss = mul(x, x, &tape);
  tape.backward(loss);
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(tape.backward(loss), std::logic_error);
  EXPECT_THROW(mul(x, x, &tape), std::logic_error);
}

TEST(Backward, GradAccumulatesAcrossUses) {
  Tensor x = Tensor::scalar(1.5f, true);
  Tape tape;
  // loss = x*x + x -> dloss/dx = 2x + 1 = 4
  Tensor loss = add(mul(x, x, &tape), x, &tape);
  tape.backward(loss);
  EXPECT_FLOAT_EQ(x.grad()[0], 4.0f);
}

TEST(GradCheck, ArithmeticOps) {
  SeededRng rng(101);
  Tensor a = rand_tensor(rng, 3, 4, -1.0f, 1.0f);
  Tensor b = rand_tensor(rng, 3, 4, -1.0f, 1.0f);
  Tensor w = rand_tensor(rng, 3, 4, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) {
        return to_scalar(add(mul(a, b, t), sub(a, scale(b, 0.7f, t), t), t), w, t);
      },
      {{"a", a}, {"b", b}});
}

TEST(GradCheck, MatmulFamily) {
  SeededRng rng(102);
  Tensor a = rand_tensor(rng, 3, 5, -1.0f, 1.0f);
  Tensor b = rand_tensor(rng, 5, 4, -1.0f, 1.0f);
  Tensor c = rand_tensor(rng, 2, 4, -1.0f, 1.0f);
  Tensor w1 = rand_tensor(rng, 3, 4, 0.5f, 1.5f, false);
  Tensor w2 = rand_tensor(rng, 3, 2, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) { return to_scalar(matmul(a, b, t), w1, t); },
      {{"a", a}, {"b", b}});
  expect_grads_match(
      [&](Tape* t) { return to_scalar(matmul_transb(matmul(a, b, t), c, t), w2, t); },
      {{"a", a}, {"b", b}, {"c", c}});
}

TEST(GradCheck, BiasAndNonlinearities) {
  SeededRng rng(103);
  Tensor x = rand_tensor(rng, 4, 3, -2.0f, 2.0f);
  Tensor bias = rand_tensor(rng, 1, 3, -0.5f, 0.5f);
  Tensor w = rand_tensor(rng, 4, 3, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) {
        return to_scalar(tanh(sigmoid(add_rowvec(x, bias, t), t), t), w, t);
      },
      {{"x", x}, {"bias", bias}});
}

TEST(GradCheck, ReluAwayFromKink) {
  SeededRng rng(104);
  std::vector<float> data;
  for (int i = 0; i < 12; ++i) {
    const float mag = rng.uniform(0.1f, 1.0f);
    data.push_back(rng.bernoulli(0.5) ? mag : -mag);
  }
  Tensor x = Tensor::from(3, 4, data, true);
  Tensor w = rand_tensor(rng, 3, 4, 0.5f, 1.5f, false);
  expect_grads_match([&](Tape* t) { return to_scalar(relu(x, t), w, t); },
                     {{"x", x}});
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  SeededRng rng(105);
  Tensor logits = rand_tensor(rng, 4, 3, -1.5f, 1.5f);
  const std::vector<int> labels = {0, 2, 1, 0};
  expect_grads_match(
      [&](Tape* t) {
        return cross_entropy_mean(softmax_rows(logits, t), labels, t);
      },
      {{"logits", logits}});
}

TEST(GradCheck, Reductions) {
  SeededRng rng(106);
  Tensor x = rand_tensor(rng, 4, 3, -1.0f, 1.0f);
  Tensor w = rand_tensor(rng, 1, 3, 0.5f, 1.5f, false);
  expect_grads_match([&](Tape* t) { return mean_all(x, t); }, {{"x", x}});
  expect_grads_match([&](Tape* t) { return to_scalar(mean_rows(x, t), w, t); },
                     {{"x", x}});
}

TEST(GradCheck, DropoutWithFixedMask) {
  SeededRng rng(107);
  Tensor x = rand_tensor(rng, 4, 4, 0.2f, 1.2f);
  Tensor w = rand_tensor(rng, 4, 4, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) {
        SeededRng mask_rng(99);  // reseed: same mask on every evaluation
        return to_scalar(dropout(x, 0.5f, mask_rng, true, t), w, t);
      },
      {{"x", x}});
}

TEST(GradCheck, StructuralOps) {
  SeededRng rng(108);
  Tensor a = rand_tensor(rng, 2, 3, -1.0f, 1.0f);
  Tensor b = rand_tensor(rng, 2, 2, -1.0f, 1.0f);
  Tensor v = rand_tensor(rng, 1, 5, -1.0f, 1.0f);
  Tensor w = rand_tensor(rng, 2, 5, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) {
        Tensor cat = concat_cols(a, b, t);
        Tensor replaced = set_row(cat, 0, v, t);
        Tensor rows = stack_rows({take_row(replaced, 1, t), take_row(replaced, 0, t)}, t);
        return to_scalar(slice_cols(rows, 0, 5, t), w, t);
      },
      {{"a", a}, {"b", b}, {"v", v}});
}

TEST(GradCheck, EmbeddingLookup) {
  SeededRng rng(109);
  Tensor table = rand_tensor(rng, 5, 3, -1.0f, 1.0f);
  Tensor w = rand_tensor(rng, 4, 3, 0.5f, 1.5f, false);
  const std::vector<int> ids = {1, 3, 1, 0};  // repeated id accumulates
  expect_grads_match(
      [&](Tape* t) { return to_scalar(embedding_lookup(table, ids, t), w, t); },
      {{"table", table}});
}

TEST(GradCheck, ElementwiseMax) {
  SeededRng rng(110);
  Tensor a = rand_tensor(rng, 3, 3, 0.0f, 1.0f);
  Tensor b = rand_tensor(rng, 3, 3, 1.2f, 2.0f);  // clearly separated, no ties
  Tensor w = rand_tensor(rng, 3, 3, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) { return to_scalar(elementwise_max(a, b, t), w, t); },
      {{"a", a}, {"b", b}});
}

TEST(GradCheck, NormalizationOps) {
  SeededRng rng(111);
  Tensor x = rand_tensor(rng, 5, 3, -2.0f, 2.0f);
  Tensor gamma = rand_tensor(rng, 1, 3, 0.5f, 1.5f);
  Tensor beta = rand_tensor(rng, 1, 3, -0.5f, 0.5f);
  Tensor w = rand_tensor(rng, 5, 3, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) {
        return to_scalar(affine_cols(standardize_cols(x, 1e-5f, t), gamma, beta, t), w, t);
      },
      {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  expect_grads_match(
      [&](Tape* t) {
        return to_scalar(affine_cols(standardize_rows(x, 1e-5f, t), gamma, beta, t), w, t);
      },
      {{"x", x}, {"gamma", gamma}, {"beta", beta}});
  const std::vector<float> mean = {0.1f, -0.2f, 0.3f};
  const std::vector<float> inv_std = {1.1f, 0.9f, 1.4f};
  expect_grads_match(
      [&](Tape* t) {
        return to_scalar(standardize_affine_const(x, mean, inv_std, t), w, t);
      },
      {{"x", x}});
}

TEST(GradCheck, SimilarityAndGating) {
  SeededRng rng(112);
  Tensor a = rand_tensor(rng, 4, 3, 0.3f, 1.3f);
  Tensor b = rand_tensor(rng, 4, 3, 0.3f, 1.3f);
  Tensor f = rand_tensor(rng, 4, 5, -1.0f, 1.0f);
  Tensor w = rand_tensor(rng, 4, 5, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) {
        Tensor sim = rowwise_cosine(a, b, t);
        Tensor g = sigmoid(standardize_cols(sim, 1e-5f, t), t);
        return to_scalar(row_scale(f, g, t), w, t);
      },
      {{"a", a}, {"b", b}, {"f", f}});
}

TEST(GradCheck, L2NormalizeRows) {
  SeededRng rng(113);
  Tensor x = rand_tensor(rng, 3, 4, 0.3f, 1.3f);
  Tensor w = rand_tensor(rng, 3, 4, 0.5f, 1.5f, false);
  expect_grads_match(
      [&](Tape* t) { return to_scalar(l2_normalize_rows(x, t), w, t); },
      {{"x", x}});
}

TEST(GradCheck, QuadraticFormTightTolerance) {
  SeededRng rng(114);
  Tensor x = rand_tensor(rng, 1, 4, -1.0f, 1.0f);
  Tensor a = rand_tensor(rng, 4, 4, -0.5f, 0.5f, false);
  GradCheckReport quad = grad_check(
      [&](Tape* t) {
        Tensor row = matmul(x, a, t);     // [1x4]
        return matmul_transb(row, x, t);  // [1x1] = x A x^T
      },
      {{"x", x}}, 1e-4);
  EXPECT_TRUE(quad.passed) << quad.max_rel_err;
}

TEST(GradCheck, CorruptedBackwardIsFlagged) {
  Tensor x = Tensor::scalar(0.8f, true);
  auto fn = [&](Tape* t) {
    Tensor out = Tensor::scalar(x.data()[0] * x.data()[0]);
    if (t != nullptr) {
      out.set_requires_grad(true);
      t->record("buggy_square", {x}, out, [](Tape::Node& n) {
        // deliberately wrong: d(x^2)/dx reported as 3x
        n.inputs[0].grad()[0] += n.output.grad()[0] * 3.0f * n.inputs[0].data()[0];
      });
    }
    return out;
  };
  GradCheckReport report = grad_check(fn, {{"x", x}}, 1e-3);
  EXPECT_FALSE(report.passed);
  EXPECT_GT(report.max_rel_err, 0.1);
}

TEST(Determinism, IdenticalSeedsIdenticalStreams) {
  SeededRng a(42), b(42), c(43);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    const auto vb = b.next_u64();
    const auto vc = c.next_u64();
    EXPECT_EQ(va, vb);
    if (va != vc) any_diff = true;
  }
  EXPECT_TRUE(any_diff);
}
