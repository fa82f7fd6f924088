#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sample/rng.hpp"
#include "sample/tensor.hpp"

// Differentiable operations. Every op computes its forward result eagerly and,
// when a tape is supplied and any input requires a gradient, records a node
// whose closure accumulates parent gradients from the output gradient.
// Reductions and inner products accumulate in double so that 32-bit results
// stay steady enough for finite-difference checks.

namespace sample {

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline bool want_node(Tape* tape, std::initializer_list<const Tensor*> ins) {
  if (tape == nullptr) return false;
  for (const Tensor* t : ins) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// C (+)= A[m x k] . B[k x n]
inline void gemm_nn(const float* a, const float* b, float* c, int m, int k,
                    int n, bool accumulate) {
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0);
    const float* arow = a + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const float* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] += av * brow[j];
    }
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float v = static_cast<float>(row[static_cast<std::size_t>(j)]);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

// C (+)= A[m x k] . B[n x k]^T
inline void gemm_nt(const float* a, const float* b, float* c, int m, int k,
                    int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<std::size_t>(i) * k;
    float* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += static_cast<double>(arow[p]) * brow[p];
      const float v = static_cast<float>(acc);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

// C (+)= A[m x k]^T . B[m x n]  ->  [k x n]
inline void gemm_tn(const float* a, const float* b, float* c, int m, int k,
                    int n, bool accumulate) {
  std::vector<double> tmp(static_cast<std::size_t>(k) * n, 0.0);
  for (int p = 0; p < m; ++p) {
    const float* arow = a + static_cast<std::size_t>(p) * k;
    const float* brow = b + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < k; ++i) {
      const double av = arow[i];
      double* trow = tmp.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) trow[j] += av * brow[j];
    }
  }
  for (std::size_t i = 0; i < tmp.size(); ++i) {
    const float v = static_cast<float>(tmp[i]);
    c[i] = accumulate ? c[i] + v : v;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

inline Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.same_shape(b), "add: shapes " + a.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("add", {a, b}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      for (int s = 0; s < 2; ++s) {
        if (!n.inputs[s].requires_grad()) continue;
        auto& g = n.inputs[s].grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.same_shape(b), "sub: shapes " + a.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("sub", {a, b}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      if (n.inputs[0].requires_grad()) {
        auto& g = n.inputs[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
      }
      if (n.inputs[1].requires_grad()) {
        auto& g = n.inputs[1].grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= go[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.same_shape(b), "mul: shapes " + a.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("mul", {a, b}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      if (n.inputs[0].requires_grad()) {
        auto& g = n.inputs[0].grad();
        const auto& bv = n.inputs[1].data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * bv[i];
      }
      if (n.inputs[1].requires_grad()) {
        auto& g = n.inputs[1].grad();
        const auto& av = n.inputs[0].data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * av[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, float c, Tape* tape = nullptr) {
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * c;
  if (detail::want_node(tape, {&a})) {
    out.set_requires_grad(true);
    tape->record("scale", {a}, out, [c](Tape::Node& n) {
      const auto& go = n.output.grad();
      auto& g = n.inputs[0].grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * c;
    });
  }
  return out;
}

// x[N x D] + b[1 x D], broadcast over rows.
inline Tensor add_rowvec(const Tensor& x, const Tensor& b, Tape* tape = nullptr) {
  detail::require(b.rows() == 1 && b.cols() == x.cols(),
                  "add_rowvec: shapes " + x.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(r, c) + b.at(0, c);
  if (detail::want_node(tape, {&x, &b})) {
    out.set_requires_grad(true);
    tape->record("add_rowvec", {x, b}, out, [](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const int rows = out_t.rows();
      const int cols = out_t.cols();
      if (n.inputs[0].requires_grad()) {
        auto& g = n.inputs[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i];
      }
      if (n.inputs[1].requires_grad()) {
        auto& g = n.inputs[1].grad();
        for (int c = 0; c < cols; ++c) {
          double acc = 0.0;
          for (int r = 0; r < rows; ++r)
            acc += go[static_cast<std::size_t>(r) * cols + c];
          g[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Matrix products

inline Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.cols() == b.rows(),
                  "matmul: inner dimensions disagree, " + a.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(a.rows(), b.cols());
  detail::gemm_nn(a.data().data(), b.data().data(), out.data().data(), a.rows(),
                  a.cols(), b.cols(), false);
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("matmul", {a, b}, out, [](Tape::Node& n) {
      Tensor& a_t = n.inputs[0];
      Tensor& b_t = n.inputs[1];
      const auto& go = n.output.grad();
      const int m = a_t.rows(), k = a_t.cols(), c = b_t.cols();
      if (a_t.requires_grad())
        detail::gemm_nt(go.data(), b_t.data().data(), a_t.grad().data(), m, c, k, true);
      if (b_t.requires_grad())
        detail::gemm_tn(a_t.data().data(), go.data(), b_t.grad().data(), m, k, c, true);
    });
  }
  return out;
}

// a[m x k] . b[n x k]^T -> [m x n]
inline Tensor matmul_transb(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.cols() == b.cols(),
                  "matmul_transb: inner dimensions disagree, " + a.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(a.rows(), b.rows());
  detail::gemm_nt(a.data().data(), b.data().data(), out.data().data(), a.rows(),
                  a.cols(), b.rows(), false);
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("matmul_transb", {a, b}, out, [](Tape::Node& n) {
      Tensor& a_t = n.inputs[0];
      Tensor& b_t = n.inputs[1];
      const auto& go = n.output.grad();
      const int m = a_t.rows(), k = a_t.cols(), c = b_t.rows();
      if (a_t.requires_grad())
        detail::gemm_nn(go.data(), b_t.data().data(), a_t.grad().data(), m, c, k, true);
      if (b_t.requires_grad())
        detail::gemm_tn(go.data(), a_t.data().data(), b_t.grad().data(), m, c, k, true);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinearities

inline Tensor relu(const Tensor& x, Tape* tape = nullptr) {
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = x.data()[i] > 0.0f ? x.data()[i] : 0.0f;
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("relu", {x}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      const auto& xv = n.inputs[0].data();
      auto& g = n.inputs[0].grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (xv[i] > 0.0f) g[i] += go[i];
    });
  }
  return out;
}

inline Tensor sigmoid(const Tensor& x, Tape* tape = nullptr) {
  // Saturated values are clamped to the nearest representable float inside
  // (0, 1); the output interval is open for every finite input.
  static const float kCeil = std::nextafter(1.0f, 0.0f);
  static const float kFloor = std::numeric_limits<float>::min();
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float y =
        static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x.data()[i]))));
    out.data()[i] = std::min(std::max(y, kFloor), kCeil);
  }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("sigmoid", {x}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      const auto& y = n.output.data();
      auto& g = n.inputs[0].grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y[i] * (1.0f - y[i]);
    });
  }
  return out;
}

inline Tensor tanh(const Tensor& x, Tape* tape = nullptr) {
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data()[i] = static_cast<float>(std::tanh(static_cast<double>(x.data()[i])));
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("tanh", {x}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      const auto& y = n.output.data();
      auto& g = n.inputs[0].grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * (1.0f - y[i] * y[i]);
    });
  }
  return out;
}

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& x, Tape* tape = nullptr) {
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  const int cols = x.cols();
  for (int r = 0; r < x.rows(); ++r) {
    double mx = -1e300;
    for (int c = 0; c < cols; ++c) mx = std::max(mx, static_cast<double>(x.at(r, c)));
    double denom = 0.0;
    for (int c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(x.at(r, c)) - mx);
    for (int c = 0; c < cols; ++c)
      out.at(r, c) = static_cast<float>(std::exp(static_cast<double>(x.at(r, c)) - mx) / denom);
  }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("softmax_rows", {x}, out, [](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const auto& y = out_t.data();
      auto& g = n.inputs[0].grad();
      const int rows = out_t.rows();
      const int cols = out_t.cols();
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c)
          dot += static_cast<double>(go[base + c]) * y[base + c];
        for (int c = 0; c < cols; ++c)
          g[base + c] += static_cast<float>(y[base + c] * (go[base + c] - dot));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses and reductions

constexpr float kCrossEntropyEps = 1e-12f;

// -log(probs[label]) for a probability row vector; the argument of the log is
// clamped below at kCrossEntropyEps.
inline Tensor cross_entropy(const Tensor& probs, int label, Tape* tape = nullptr) {
  detail::require(probs.rows() == 1, "cross_entropy: expected a row vector, got " + probs.shape());
  if (label < 0 || label >= probs.cols()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(probs.cols()) + " classes");
  }
  const float p = std::max(probs.at(0, label), kCrossEntropyEps);
  Tensor out = Tensor::scalar(static_cast<float>(-std::log(static_cast<double>(p))));
  if (detail::want_node(tape, {&probs})) {
    out.set_requires_grad(true);
    tape->record("cross_entropy", {probs}, out, [label](Tape::Node& n) {
      const float gl = n.output.grad()[0];
      auto& g = n.inputs[0].grad();
      const float p = n.inputs[0].data()[static_cast<std::size_t>(label)];
      if (p >= kCrossEntropyEps) g[static_cast<std::size_t>(label)] += gl * (-1.0f / p);
    });
  }
  return out;
}

// Mean of -log(probs[i, labels[i]]) over the batch.
inline Tensor cross_entropy_mean(const Tensor& probs, const std::vector<int>& labels,
                                 Tape* tape = nullptr) {
  detail::require(static_cast<int>(labels.size()) == probs.rows(),
                  "cross_entropy_mean: " + std::to_string(labels.size()) +
                      " labels for " + probs.shape());
  const int rows = probs.rows();
  const int cols = probs.cols();
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= cols) {
      throw std::out_of_range("cross_entropy_mean: label " + std::to_string(label) +
                              " out of range for " + std::to_string(cols) + " classes");
    }
    total += -std::log(static_cast<double>(std::max(probs.at(r, label), kCrossEntropyEps)));
  }
  Tensor out = Tensor::scalar(static_cast<float>(total / rows));
  if (detail::want_node(tape, {&probs})) {
    out.set_requires_grad(true);
    tape->record("cross_entropy_mean", {probs}, out, [labels](Tape::Node& n) {
      const float gl = n.output.grad()[0];
      Tensor& probs_t = n.inputs[0];
      auto& g = probs_t.grad();
      const int rows = probs_t.rows();
      const int cols = probs_t.cols();
      for (int r = 0; r < rows; ++r) {
        const int label = labels[static_cast<std::size_t>(r)];
        const float p = probs_t.at(r, label);
        if (p >= kCrossEntropyEps)
          g[static_cast<std::size_t>(r) * cols + label] += gl * (-1.0f / (p * rows));
      }
    });
  }
  return out;
}

inline Tensor mean_all(const Tensor& x, Tape* tape = nullptr) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(x.size())));
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("mean_all", {x}, out, [](Tape::Node& n) {
      const float gl = n.output.grad()[0];
      auto& g = n.inputs[0].grad();
      const float inv = 1.0f / static_cast<float>(g.size());
      for (auto& v : g) v += gl * inv;
    });
  }
  return out;
}

// Column means: [N x D] -> [1 x D].
inline Tensor mean_rows(const Tensor& x, Tape* tape = nullptr) {
  Tensor out = Tensor::zeros(1, x.cols());
  for (int c = 0; c < x.cols(); ++c) {
    double acc = 0.0;
    for (int r = 0; r < x.rows(); ++r) acc += x.at(r, c);
    out.at(0, c) = static_cast<float>(acc / x.rows());
  }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("mean_rows", {x}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      Tensor& x_t = n.inputs[0];
      auto& g = x_t.grad();
      const int rows = x_t.rows();
      const int cols = x_t.cols();
      const float inv = 1.0f / static_cast<float>(rows);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
          g[static_cast<std::size_t>(r) * cols + c] += go[static_cast<std::size_t>(c)] * inv;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout

// Inverted dropout: in training each entry is zeroed independently with
// probability p and survivors are scaled by 1/(1-p); in eval it is the
// identity. p == 0 short-circuits to the input handle.
inline Tensor dropout(const Tensor& x, float p, SeededRng& rng, bool training,
                      Tape* tape = nullptr) {
  detail::require(p >= 0.0f && p < 1.0f, "dropout: p=" + std::to_string(p) + " outside [0,1)");
  if (!training || p == 0.0f) return x;
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  auto mask = std::make_shared<std::vector<float>>(x.size());
  const float keep_scale = 1.0f / (1.0f - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float m = rng.uniform01() < p ? 0.0f : keep_scale;
    (*mask)[i] = m;
    out.data()[i] = x.data()[i] * m;
  }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("dropout", {x}, out, [mask](Tape::Node& n) {
      const auto& go = n.output.grad();
      auto& g = n.inputs[0].grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * (*mask)[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Structural ops

inline Tensor concat_cols(const std::vector<Tensor>& parts, Tape* tape = nullptr) {
  detail::require(!parts.empty(), "concat_cols: empty input list");
  const int rows = parts.front().rows();
  int cols = 0;
  for (const Tensor& t : parts) {
    detail::require(t.rows() == rows, "concat_cols: row mismatch, " +
                                          parts.front().shape() + " vs " + t.shape());
    cols += t.cols();
  }
  Tensor out = Tensor::zeros(rows, cols);
  int off = 0;
  for (const Tensor& t : parts) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < t.cols(); ++c) out.at(r, off + c) = t.at(r, c);
    off += t.cols();
  }
  bool any = false;
  for (const Tensor& t : parts) any = any || t.requires_grad();
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    tape->record("concat_cols", parts, out, [](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const int rows = out_t.rows();
      const int cols = out_t.cols();
      int off = 0;
      for (Tensor& in : n.inputs) {
        if (in.requires_grad()) {
          auto& g = in.grad();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < in.cols(); ++c)
              g[static_cast<std::size_t>(r) * in.cols() + c] +=
                  go[static_cast<std::size_t>(r) * cols + off + c];
        }
        off += in.cols();
      }
    });
  }
  return out;
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  return concat_cols(std::vector<Tensor>{a, b}, tape);
}

// Stack N row vectors [1 x D] into [N x D].
inline Tensor stack_rows(const std::vector<Tensor>& rows, Tape* tape = nullptr) {
  detail::require(!rows.empty(), "stack_rows: empty input list");
  const int cols = rows.front().cols();
  for (const Tensor& t : rows)
    detail::require(t.rows() == 1 && t.cols() == cols,
                    "stack_rows: expected [1x" + std::to_string(cols) + "], got " + t.shape());
  Tensor out = Tensor::zeros(static_cast<int>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < cols; ++c) out.at(static_cast<int>(r), c) = rows[r].at(0, c);
  bool any = false;
  for (const Tensor& t : rows) any = any || t.requires_grad();
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    tape->record("stack_rows", rows, out, [](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const int cols = out_t.cols();
      for (std::size_t r = 0; r < n.inputs.size(); ++r) {
        if (!n.inputs[r].requires_grad()) continue;
        auto& g = n.inputs[r].grad();
        for (int c = 0; c < cols; ++c) g[static_cast<std::size_t>(c)] += go[r * cols + c];
      }
    });
  }
  return out;
}

inline Tensor slice_cols(const Tensor& x, int start, int len, Tape* tape = nullptr) {
  detail::require(start >= 0 && len > 0 && start + len <= x.cols(),
                  "slice_cols: [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") outside " + x.shape());
  Tensor out = Tensor::zeros(x.rows(), len);
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < len; ++c) out.at(r, c) = x.at(r, start + c);
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("slice_cols", {x}, out, [start, len](Tape::Node& n) {
      const auto& go = n.output.grad();
      Tensor& x_t = n.inputs[0];
      auto& g = x_t.grad();
      for (int r = 0; r < x_t.rows(); ++r)
        for (int c = 0; c < len; ++c)
          g[static_cast<std::size_t>(r) * x_t.cols() + start + c] +=
              go[static_cast<std::size_t>(r) * len + c];
    });
  }
  return out;
}

inline Tensor slice_rows(const Tensor& x, int start, int len, Tape* tape = nullptr) {
  detail::require(start >= 0 && len > 0 && start + len <= x.rows(),
                  "slice_rows: [" + std::to_string(start) + "," +
                      std::to_string(start + len) + ") outside " + x.shape());
  Tensor out = Tensor::zeros(len, x.cols());
  for (int r = 0; r < len; ++r)
    for (int c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(start + r, c);
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("slice_rows", {x}, out, [start, len](Tape::Node& n) {
      const auto& go = n.output.grad();
      Tensor& x_t = n.inputs[0];
      auto& g = x_t.grad();
      const int cols = x_t.cols();
      for (int r = 0; r < len; ++r)
        for (int c = 0; c < cols; ++c)
          g[static_cast<std::size_t>(start + r) * cols + c] +=
              go[static_cast<std::size_t>(r) * cols + c];
    });
  }
  return out;
}

inline Tensor take_row(const Tensor& x, int row, Tape* tape = nullptr) {
  detail::require(row >= 0 && row < x.rows(),
                  "take_row: row " + std::to_string(row) + " outside " + x.shape());
  return slice_rows(x, row, 1, tape);
}

// Copy of x with row `row` replaced by v[1 x D].
inline Tensor set_row(const Tensor& x, int row, const Tensor& v, Tape* tape = nullptr) {
  detail::require(row >= 0 && row < x.rows(),
                  "set_row: row " + std::to_string(row) + " outside " + x.shape());
  detail::require(v.rows() == 1 && v.cols() == x.cols(),
                  "set_row: row shape " + v.shape() + " vs " + x.shape());
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  out.data() = x.data();
  for (int c = 0; c < x.cols(); ++c) out.at(row, c) = v.at(0, c);
  if (detail::want_node(tape, {&x, &v})) {
    out.set_requires_grad(true);
    tape->record("set_row", {x, v}, out, [row](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const int cols = out_t.cols();
      if (n.inputs[0].requires_grad()) {
        auto& g = n.inputs[0].grad();
        for (int r = 0; r < out_t.rows(); ++r) {
          if (r == row) continue;
          for (int c = 0; c < cols; ++c)
            g[static_cast<std::size_t>(r) * cols + c] += go[static_cast<std::size_t>(r) * cols + c];
        }
      }
      if (n.inputs[1].requires_grad()) {
        auto& g = n.inputs[1].grad();
        for (int c = 0; c < cols; ++c)
          g[static_cast<std::size_t>(c)] += go[static_cast<std::size_t>(row) * cols + c];
      }
    });
  }
  return out;
}

// Gather rows of an embedding table: table[V x D], ids -> [len x D].
inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids,
                               Tape* tape = nullptr) {
  detail::require(!ids.empty(), "embedding_lookup: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= table.rows()) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside table " + table.shape());
    }
  }
  const int cols = table.cols();
  Tensor out = Tensor::zeros(static_cast<int>(ids.size()), cols);
  for (std::size_t r = 0; r < ids.size(); ++r)
    for (int c = 0; c < cols; ++c)
      out.at(static_cast<int>(r), c) = table.at(ids[r], c);
  if (detail::want_node(tape, {&table})) {
    out.set_requires_grad(true);
    tape->record("embedding_lookup", {table}, out, [ids](Tape::Node& n) {
      const auto& go = n.output.grad();
      auto& g = n.inputs[0].grad();
      const int cols = n.inputs[0].cols();
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (int c = 0; c < cols; ++c)
          g[static_cast<std::size_t>(ids[r]) * cols + c] += go[r * cols + c];
    });
  }
  return out;
}

// Elementwise maximum; ties route the gradient to the first argument.
inline Tensor elementwise_max(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.same_shape(b),
                  "elementwise_max: shapes " + a.shape() + " vs " + b.shape());
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data()[i] = std::max(a.data()[i], b.data()[i]);
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("elementwise_max", {a, b}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      const auto& av = n.inputs[0].data();
      const auto& bv = n.inputs[1].data();
      if (n.inputs[0].requires_grad()) {
        auto& g = n.inputs[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (av[i] >= bv[i]) g[i] += go[i];
      }
      if (n.inputs[1].requires_grad()) {
        auto& g = n.inputs[1].grad();
        for (std::size_t i = 0; i < g.size(); ++i)
          if (av[i] < bv[i]) g[i] += go[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization cores

// Per-column batch standardization: (x - mean_col) / sqrt(var_col + eps) using
// batch statistics (population variance). Optionally reports the batch
// statistics so callers can maintain running estimates.
inline Tensor standardize_cols(const Tensor& x, float eps, Tape* tape = nullptr,
                               std::vector<float>* batch_mean = nullptr,
                               std::vector<float>* batch_var = nullptr) {
  const int rows = x.rows();
  const int cols = x.cols();
  std::vector<float> mean(static_cast<std::size_t>(cols));
  std::vector<float> inv_std(static_cast<std::size_t>(cols));
  if (batch_mean != nullptr) batch_mean->resize(static_cast<std::size_t>(cols));
  if (batch_var != nullptr) batch_var->resize(static_cast<std::size_t>(cols));
  for (int c = 0; c < cols; ++c) {
    double m = 0.0;
    for (int r = 0; r < rows; ++r) m += x.at(r, c);
    m /= rows;
    double v = 0.0;
    for (int r = 0; r < rows; ++r) {
      const double d = x.at(r, c) - m;
      v += d * d;
    }
    v /= rows;
    mean[static_cast<std::size_t>(c)] = static_cast<float>(m);
    inv_std[static_cast<std::size_t>(c)] = static_cast<float>(1.0 / std::sqrt(v + eps));
    if (batch_mean != nullptr) (*batch_mean)[static_cast<std::size_t>(c)] = static_cast<float>(m);
    if (batch_var != nullptr) (*batch_var)[static_cast<std::size_t>(c)] = static_cast<float>(v);
  }
  Tensor out = Tensor::zeros(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out.at(r, c) = (x.at(r, c) - mean[static_cast<std::size_t>(c)]) *
                     inv_std[static_cast<std::size_t>(c)];
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("standardize_cols", {x}, out, [inv_std](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const auto& xhat = out_t.data();
      auto& g = n.inputs[0].grad();
      const int rows = out_t.rows();
      const int cols = out_t.cols();
      for (int c = 0; c < cols; ++c) {
        double sum_go = 0.0, sum_go_xhat = 0.0;
        for (int r = 0; r < rows; ++r) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + c;
          sum_go += go[i];
          sum_go_xhat += static_cast<double>(go[i]) * xhat[i];
        }
        const double mean_go = sum_go / rows;
        const double mean_go_xhat = sum_go_xhat / rows;
        const double s = inv_std[static_cast<std::size_t>(c)];
        for (int r = 0; r < rows; ++r) {
          const std::size_t i = static_cast<std::size_t>(r) * cols + c;
          g[i] += static_cast<float>(s * (go[i] - mean_go - xhat[i] * mean_go_xhat));
        }
      }
    });
  }
  return out;
}

// Per-row standardization (layer-norm core).
inline Tensor standardize_rows(const Tensor& x, float eps, Tape* tape = nullptr) {
  const int rows = x.rows();
  const int cols = x.cols();
  std::vector<float> inv_std(static_cast<std::size_t>(rows));
  Tensor out = Tensor::zeros(rows, cols);
  for (int r = 0; r < rows; ++r) {
    double m = 0.0;
    for (int c = 0; c < cols; ++c) m += x.at(r, c);
    m /= cols;
    double v = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double d = x.at(r, c) - m;
      v += d * d;
    }
    v /= cols;
    const double s = 1.0 / std::sqrt(v + eps);
    inv_std[static_cast<std::size_t>(r)] = static_cast<float>(s);
    for (int c = 0; c < cols; ++c)
      out.at(r, c) = static_cast<float>((x.at(r, c) - m) * s);
  }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("standardize_rows", {x}, out, [inv_std](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      const auto& xhat = out_t.data();
      auto& g = n.inputs[0].grad();
      const int rows = out_t.rows();
      const int cols = out_t.cols();
      for (int r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double sum_go = 0.0, sum_go_xhat = 0.0;
        for (int c = 0; c < cols; ++c) {
          sum_go += go[base + c];
          sum_go_xhat += static_cast<double>(go[base + c]) * xhat[base + c];
        }
        const double mean_go = sum_go / cols;
        const double mean_go_xhat = sum_go_xhat / cols;
        const double s = inv_std[static_cast<std::size_t>(r)];
        for (int c = 0; c < cols; ++c)
          g[base + c] += static_cast<float>(
              s * (go[base + c] - mean_go - xhat[base + c] * mean_go_xhat));
      }
    });
  }
  return out;
}

// Eval-mode normalization against fixed statistics: (x - mean_d) * inv_std_d.
// The subtraction happens before the multiply so that x == mean gives exactly
// zero regardless of floating-point contraction.
inline Tensor standardize_affine_const(const Tensor& x, const std::vector<float>& mean,
                                       const std::vector<float>& inv_std,
                                       Tape* tape = nullptr) {
  detail::require(static_cast<int>(mean.size()) == x.cols() &&
                      static_cast<int>(inv_std.size()) == x.cols(),
                  "standardize_affine_const: stats length vs " + x.shape());
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) {
      const float centered = x.at(r, c) - mean[static_cast<std::size_t>(c)];
      out.at(r, c) = centered * inv_std[static_cast<std::size_t>(c)];
    }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("standardize_affine_const", {x}, out, [inv_std](Tape::Node& n) {
      const auto& go = n.output.grad();
      auto& g = n.inputs[0].grad();
      const int cols = n.output.cols();
      for (int r = 0; r < n.output.rows(); ++r)
        for (int c = 0; c < cols; ++c)
          g[static_cast<std::size_t>(r) * cols + c] +=
              go[static_cast<std::size_t>(r) * cols + c] * inv_std[static_cast<std::size_t>(c)];
    });
  }
  return out;
}

// Trainable per-feature scale and shift: y[n,d] = x[n,d] * gamma[d] + beta[d].
inline Tensor affine_cols(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          Tape* tape = nullptr) {
  detail::require(gamma.rows() == 1 && gamma.cols() == x.cols() && beta.rows() == 1 &&
                      beta.cols() == x.cols(),
                  "affine_cols: params " + gamma.shape() + "/" + beta.shape() +
                      " vs " + x.shape());
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c)
      out.at(r, c) = x.at(r, c) * gamma.at(0, c) + beta.at(0, c);
  if (detail::want_node(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record("affine_cols", {x, gamma, beta}, out, [](Tape::Node& n) {
      const Tensor& out_t = n.output;
      const auto& go = out_t.grad();
      Tensor& x_t = n.inputs[0];
      Tensor& gamma_t = n.inputs[1];
      Tensor& beta_t = n.inputs[2];
      const int rows = out_t.rows();
      const int cols = out_t.cols();
      if (x_t.requires_grad()) {
        auto& g = x_t.grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            g[static_cast<std::size_t>(r) * cols + c] +=
                go[static_cast<std::size_t>(r) * cols + c] * gamma_t.at(0, c);
      }
      if (gamma_t.requires_grad()) {
        auto& g = gamma_t.grad();
        for (int c = 0; c < cols; ++c) {
          double acc = 0.0;
          for (int r = 0; r < rows; ++r)
            acc += static_cast<double>(go[static_cast<std::size_t>(r) * cols + c]) * x_t.at(r, c);
          g[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
      }
      if (beta_t.requires_grad()) {
        auto& g = beta_t.grad();
        for (int c = 0; c < cols; ++c) {
          double acc = 0.0;
          for (int r = 0; r < rows; ++r) acc += go[static_cast<std::size_t>(r) * cols + c];
          g[static_cast<std::size_t>(c)] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Similarity and gating helpers

constexpr double kDegenerateNorm = 1e-12;

// Cosine similarity per row pair: a[N x D], b[N x D] -> [N x 1]. Rows whose
// norm falls below kDegenerateNorm get similarity 0 and pass no gradient.
inline Tensor rowwise_cosine(const Tensor& a, const Tensor& b, Tape* tape = nullptr) {
  detail::require(a.same_shape(b),
                  "rowwise_cosine: shapes " + a.shape() + " vs " + b.shape());
  const int rows = a.rows();
  const int cols = a.cols();
  Tensor out = Tensor::zeros(rows, 1);
  auto norms_a = std::make_shared<std::vector<double>>(rows);
  auto norms_b = std::make_shared<std::vector<double>>(rows);
  for (int r = 0; r < rows; ++r) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int c = 0; c < cols; ++c) {
      const double av = a.at(r, c);
      const double bv = b.at(r, c);
      dot += av * bv;
      na += av * av;
      nb += bv * bv;
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    (*norms_a)[static_cast<std::size_t>(r)] = na;
    (*norms_b)[static_cast<std::size_t>(r)] = nb;
    out.at(r, 0) = (na < kDegenerateNorm || nb < kDegenerateNorm)
                       ? 0.0f
                       : static_cast<float>(dot / (na * nb));
  }
  if (detail::want_node(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record("rowwise_cosine", {a, b}, out, [norms_a, norms_b](Tape::Node& n) {
      const auto& go = n.output.grad();
      const auto& cosv = n.output.data();
      Tensor& a_t = n.inputs[0];
      Tensor& b_t = n.inputs[1];
      const int rows = a_t.rows();
      const int cols = a_t.cols();
      for (int r = 0; r < rows; ++r) {
        const double na = (*norms_a)[static_cast<std::size_t>(r)];
        const double nb = (*norms_b)[static_cast<std::size_t>(r)];
        if (na < kDegenerateNorm || nb < kDegenerateNorm) continue;
        const double gc = go[static_cast<std::size_t>(r)];
        const double cs = cosv[static_cast<std::size_t>(r)];
        if (a_t.requires_grad()) {
          auto& g = a_t.grad();
          for (int c = 0; c < cols; ++c)
            g[static_cast<std::size_t>(r) * cols + c] += static_cast<float>(
                gc * (b_t.at(r, c) / (na * nb) - cs * a_t.at(r, c) / (na * na)));
        }
        if (b_t.requires_grad()) {
          auto& g = b_t.grad();
          for (int c = 0; c < cols; ++c)
            g[static_cast<std::size_t>(r) * cols + c] += static_cast<float>(
                gc * (a_t.at(r, c) / (na * nb) - cs * b_t.at(r, c) / (nb * nb)));
        }
      }
    });
  }
  return out;
}

// Scale row n of x[N x D] by g[n]: y[n,:] = g[n] * x[n,:].
inline Tensor row_scale(const Tensor& x, const Tensor& g, Tape* tape = nullptr) {
  detail::require(g.rows() == x.rows() && g.cols() == 1,
                  "row_scale: gate " + g.shape() + " vs " + x.shape());
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) out.at(r, c) = x.at(r, c) * g.at(r, 0);
  if (detail::want_node(tape, {&x, &g})) {
    out.set_requires_grad(true);
    tape->record("row_scale", {x, g}, out, [](Tape::Node& n) {
      const auto& go = n.output.grad();
      Tensor& x_t = n.inputs[0];
      Tensor& g_t = n.inputs[1];
      const int rows = x_t.rows();
      const int cols = x_t.cols();
      if (x_t.requires_grad()) {
        auto& gx = x_t.grad();
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < cols; ++c)
            gx[static_cast<std::size_t>(r) * cols + c] +=
                go[static_cast<std::size_t>(r) * cols + c] * g_t.at(r, 0);
      }
      if (g_t.requires_grad()) {
        auto& gg = g_t.grad();
        for (int r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (int c = 0; c < cols; ++c)
            acc += static_cast<double>(go[static_cast<std::size_t>(r) * cols + c]) * x_t.at(r, c);
          gg[static_cast<std::size_t>(r)] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

// L2-normalize every row; rows with norm below kDegenerateNorm become zero.
inline Tensor l2_normalize_rows(const Tensor& x, Tape* tape = nullptr) {
  const int rows = x.rows();
  const int cols = x.cols();
  Tensor out = Tensor::zeros(rows, cols);
  auto norms = std::make_shared<std::vector<double>>(rows);
  for (int r = 0; r < rows; ++r) {
    double nn = 0.0;
    for (int c = 0; c < cols; ++c) nn += static_cast<double>(x.at(r, c)) * x.at(r, c);
    nn = std::sqrt(nn);
    (*norms)[static_cast<std::size_t>(r)] = nn;
    if (nn < kDegenerateNorm) continue;
    for (int c = 0; c < cols; ++c) out.at(r, c) = static_cast<float>(x.at(r, c) / nn);
  }
  if (detail::want_node(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record("l2_normalize_rows", {x}, out, [norms](Tape::Node& n) {
      const auto& go = n.output.grad();
      const auto& y = n.output.data();
      auto& g = n.inputs[0].grad();
      const int rows = n.output.rows();
      const int cols = n.output.cols();
      for (int r = 0; r < rows; ++r) {
        const double nn = (*norms)[static_cast<std::size_t>(r)];
        if (nn < kDegenerateNorm) continue;
        const std::size_t base = static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c)
          dot += static_cast<double>(go[base + c]) * y[base + c];
        for (int c = 0; c < cols; ++c)
          g[base + c] += static_cast<float>((go[base + c] - dot * y[base + c]) / nn);
      }
    });
  }
  return out;
}

}  // namespace sample
