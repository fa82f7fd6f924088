#include <gtest/gtest.h>

#include <cmath>

#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

using namespace sample;

TEST(Tensor, ConstructionAndInvariants) {
  Tensor t = Tensor::from(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2);
  EXPECT_EQ(t.cols(), 3);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FLOAT_EQ(t.at(1, 2), 6.0f);
  EXPECT_THROW(Tensor::from(2, 2, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(Tensor::zeros(0, 3), std::invalid_argument);
}

TEST(Tensor, CloneDetachesStorage) {
  Tensor a = Tensor::row({1, 2, 3});
  Tensor b = a.clone();
  b.at(0, 0) = 9;
  EXPECT_FLOAT_EQ(a.at(0, 0), 1.0f);
  EXPECT_FALSE(a.shares_storage(b));
}

TEST(Matmul, IdentityCase) {
  Tensor eye = Tensor::from(2, 2, {1, 0, 0, 1});
  Tensor m = Tensor::from(2, 2, {1, 2, 3, 4});
  Tensor out = matmul(eye, m);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) EXPECT_FLOAT_EQ(out.at(r, c), m.at(r, c));
}

TEST(Matmul, HandDotProduct) {
  Tensor a = Tensor::from(1, 2, {1, 2});
  Tensor b = Tensor::from(2, 1, {3, 4});
  EXPECT_FLOAT_EQ(matmul(a, b).item(), 11.0f);
}

TEST(Matmul, ZeroAnnihilates) {
  Tensor z = Tensor::zeros(3, 4);
  Tensor m = Tensor::from(4, 2, std::vector<float>(8, 2.5f));
  Tensor out = matmul(z, m);
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Matmul, ShapeErrorNamesBothShapes) {
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(4, 2);
  try {
    matmul(a, b);
    FAIL() << "expected shape error";
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("4x2"), std::string::npos) << msg;
  }
}

TEST(Sigmoid, KnownValues) {
  EXPECT_FLOAT_EQ(sigmoid(Tensor::scalar(0.0f)).item(), 0.5f);
  // Saturation: as close to 1 as a 32-bit real allows while staying below it.
  const float sat = sigmoid(Tensor::scalar(50.0f)).item();
  EXPECT_LT(sat, 1.0f);
  EXPECT_LE(1.0f - sat, 1.2e-7f);
  EXPECT_NEAR(sigmoid(Tensor::scalar(std::log(3.0f))).item(), 0.75, 1e-6);
}

TEST(Sigmoid, RangeAndSymmetry) {
  SeededRng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const float x = rng.uniform(-50.0f, 50.0f);
    const float y = sigmoid(Tensor::scalar(x)).item();
    const float ym = sigmoid(Tensor::scalar(-x)).item();
    EXPECT_GT(y, 0.0f);
    EXPECT_LT(y, 1.0f);
    EXPECT_NEAR(y, 1.0f - ym, 1e-6);
  }
}

TEST(Softmax, Uniform) {
  Tensor out = softmax_rows(Tensor::row({0, 0}));
  EXPECT_FLOAT_EQ(out.at(0, 0), 0.5f);
  EXPECT_FLOAT_EQ(out.at(0, 1), 0.5f);
}

TEST(Softmax, TwoLogitOracle) {
  Tensor out = softmax_rows(Tensor::row({2, 0}));
  EXPECT_NEAR(out.at(0, 0), 0.8808, 1e-3);
  EXPECT_NEAR(out.at(0, 1), 0.1192, 1e-3);
}

TEST(Softmax, ShiftInvarianceAndSumToOne) {
  SeededRng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = rng.uniform_int(1, 8);
    std::vector<float> a(n), b(n);
    const float shift = rng.uniform(-30.0f, 30.0f);
    for (int i = 0; i < n; ++i) {
      a[i] = rng.uniform(-50.0f, 50.0f);
      b[i] = a[i] + shift;
    }
    Tensor sa = softmax_rows(Tensor::row(a));
    Tensor sb = softmax_rows(Tensor::row(b));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      sum += sa.at(0, i);
      EXPECT_NEAR(sa.at(0, i), sb.at(0, i), 1e-6);
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(CrossEntropy, KnownValues) {
  EXPECT_NEAR(cross_entropy(Tensor::row({0.5f, 0.5f}), 0).item(), std::log(2.0), 1e-6);
  EXPECT_FLOAT_EQ(cross_entropy(Tensor::row({1.0f, 0.0f}), 0).item(), 0.0f);
  EXPECT_NEAR(cross_entropy(Tensor::row({0.8808f, 0.1192f}), 1).item(), 2.1269, 1e-3);
}

TEST(CrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(cross_entropy(Tensor::row({0.5f, 0.5f}), 2), std::out_of_range);
  EXPECT_THROW(cross_entropy(Tensor::row({0.5f, 0.5f}), -1), std::out_of_range);
}

TEST(CrossEntropy, ClampAvoidsInfinity) {
  const float loss = cross_entropy(Tensor::row({0.0f, 1.0f}), 0).item();
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_GT(loss, 20.0f);
}

TEST(Relu, Basics) {
  Tensor out = relu(Tensor::row({-3.0f, 0.0f, 2.0f}));
  EXPECT_FLOAT_EQ(out.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(out.at(0, 1), 0.0f);
  EXPECT_FLOAT_EQ(out.at(0, 2), 2.0f);
}

TEST(Dropout, ZeroRateIsIdentity) {
  SeededRng rng(5);
  Tensor x = Tensor::row({1, 2, 3});
  Tensor out = dropout(x, 0.0f, rng, true);
  EXPECT_TRUE(out.shares_storage(x));
}

TEST(Dropout, EvalIsIdentity) {
  SeededRng rng(5);
  Tensor x = Tensor::row({1, 2, 3});
  Tensor out = dropout(x, 0.9f, rng, false);
  EXPECT_TRUE(out.shares_storage(x));
}

TEST(Dropout, TrainScalesSurvivors) {
  SeededRng rng(5);
  Tensor x = Tensor::filled(10, 10, 1.0f);
  Tensor out = dropout(x, 0.5f, rng, true);
  int kept = 0;
  for (float v : out.data()) {
    EXPECT_TRUE(v == 0.0f || v == 2.0f);
    kept += v != 0.0f;
  }
  EXPECT_GT(kept, 20);
  EXPECT_LT(kept, 80);
}

TEST(ElementwiseMax, Basics) {
  Tensor out = elementwise_max(Tensor::row({1, 2}), Tensor::row({3, 0}));
  EXPECT_FLOAT_EQ(out.at(0, 0), 3.0f);
  EXPECT_FLOAT_EQ(out.at(0, 1), 2.0f);
}

TEST(StandardizeCols, TwoPointBatch) {
  Tensor x = Tensor::from(2, 1, {0.0f, 2.0f});
  Tensor out = standardize_cols(x, 1e-5f);
  EXPECT_NEAR(out.at(0, 0), -1.0, 1e-4);
  EXPECT_NEAR(out.at(1, 0), 1.0, 1e-4);
}

TEST(StandardizeCols, IdenticalRowsGiveZeros) {
  Tensor x = Tensor::from(3, 2, {4, 7, 4, 7, 4, 7});
  Tensor out = standardize_cols(x, 1e-5f);
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(StandardizeCols, SingleRowStandardizesToZero) {
  Tensor x = Tensor::from(1, 3, {5, -2, 9});
  Tensor out = standardize_cols(x, 1e-5f);
  for (float v : out.data()) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Structural, ConcatStackSlice) {
  Tensor a = Tensor::from(2, 2, {1, 2, 3, 4});
  Tensor b = Tensor::from(2, 1, {5, 6});
  Tensor cat = concat_cols(a, b);
  EXPECT_EQ(cat.cols(), 3);
  EXPECT_FLOAT_EQ(cat.at(1, 2), 6.0f);

  Tensor r0 = take_row(cat, 0);
  Tensor r1 = take_row(cat, 1);
  Tensor stacked = stack_rows({r0, r1});
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(stacked.at(r, c), cat.at(r, c));

  Tensor sliced = slice_cols(cat, 1, 2);
  EXPECT_FLOAT_EQ(sliced.at(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(sliced.at(0, 1), 5.0f);
}

TEST(Structural, SetRowAndEmbeddingLookup) {
  Tensor table = Tensor::from(3, 2, {0, 1, 10, 11, 20, 21});
  Tensor rows = embedding_lookup(table, {2, 0, 2});
  EXPECT_EQ(rows.rows(), 3);
  EXPECT_FLOAT_EQ(rows.at(0, 1), 21.0f);
  EXPECT_FLOAT_EQ(rows.at(1, 0), 0.0f);
  EXPECT_THROW(embedding_lookup(table, {3}), std::out_of_range);

  Tensor replaced = set_row(rows, 1, Tensor::row({7, 8}));
  EXPECT_FLOAT_EQ(replaced.at(1, 0), 7.0f);
  EXPECT_FLOAT_EQ(replaced.at(0, 0), 20.0f);
}

TEST(RowwiseCosine, KnownValues) {
  Tensor a = Tensor::from(3, 2, {1, 0, 1, 0, 2, 2});
  Tensor b = Tensor::from(3, 2, {1, 0, 0, 1, 1, 1});
  Tensor sim = rowwise_cosine(a, b);
  EXPECT_NEAR(sim.at(0, 0), 1.0, 1e-6);
  EXPECT_NEAR(sim.at(1, 0), 0.0, 1e-6);
  EXPECT_NEAR(sim.at(2, 0), 1.0, 1e-6);
}

TEST(RowwiseCosine, DegenerateNormGivesZero) {
  Tensor a = Tensor::from(1, 2, {0, 0});
  Tensor b = Tensor::from(1, 2, {1, 1});
  EXPECT_FLOAT_EQ(rowwise_cosine(a, b).at(0, 0), 0.0f);
}

TEST(Ops, FiniteAfterRandomChains) {
  SeededRng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 6);
    const int d = rng.uniform_int(1, 6);
    std::vector<float> xs(static_cast<std::size_t>(n) * d);
    for (auto& v : xs) v = rng.uniform(-10.0f, 10.0f);
    Tensor x = Tensor::from(n, d, xs);
    Tensor y = softmax_rows(standardize_rows(sigmoid(x), 1e-5f));
    EXPECT_TRUE(all_finite(y));
  }
}
