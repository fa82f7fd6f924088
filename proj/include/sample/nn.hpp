#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sample/ops.hpp"
#include "sample/rng.hpp"
#include "sample/tensor.hpp"

namespace sample {

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out], undefined when the layer is bias-free

  static Linear create(int in, int out, SeededRng& rng, float stddev,
                       bool with_bias = true) {
    Linear l;
    l.weight = Tensor::zeros(in, out, true);
    for (auto& v : l.weight.data()) v = rng.normal(0.0f, stddev);
    if (with_bias) l.bias = Tensor::zeros(1, out, true);
    return l;
  }

  int in_dim() const { return weight.rows(); }
  int out_dim() const { return weight.cols(); }

  Tensor forward(const Tensor& x, Tape* tape) const {
    Tensor out = matmul(x, weight, tape);
    if (bias.defined()) out = add_rowvec(out, bias, tape);
    return out;
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
  }
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  float eps = 1e-5f;

  static LayerNorm create(int dim) {
    LayerNorm ln;
    ln.gamma = Tensor::filled(1, dim, 1.0f, true);
    ln.beta = Tensor::zeros(1, dim, true);
    return ln;
  }

  Tensor forward(const Tensor& x, Tape* tape) const {
    return affine_cols(standardize_rows(x, eps, tape), gamma, beta, tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }
};

// Per-feature batch normalization over the row dimension. Training mode
// normalizes with batch statistics (population variance) and folds them into
// running estimates with the configured momentum; eval mode normalizes with
// the running estimates and never mutates them.
struct BatchNorm1d {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;  // [1 x D] buffer, not trainable
  Tensor running_var;   // [1 x D] buffer, not trainable
  float momentum = 0.1f;
  float eps = 1e-5f;

  static BatchNorm1d create(int dim) {
    BatchNorm1d bn;
    bn.gamma = Tensor::filled(1, dim, 1.0f, true);
    bn.beta = Tensor::zeros(1, dim, true);
    bn.running_mean = Tensor::zeros(1, dim);
    bn.running_var = Tensor::filled(1, dim, 1.0f);
    return bn;
  }

  Tensor forward(const Tensor& x, Tape* tape, bool training) {
    Tensor normalized;
    if (training) {
      std::vector<float> batch_mean, batch_var;
      normalized = standardize_cols(x, eps, tape, &batch_mean, &batch_var);
      for (int d = 0; d < x.cols(); ++d) {
        running_mean.at(0, d) = (1.0f - momentum) * running_mean.at(0, d) +
                                momentum * batch_mean[static_cast<std::size_t>(d)];
        running_var.at(0, d) = (1.0f - momentum) * running_var.at(0, d) +
                               momentum * batch_var[static_cast<std::size_t>(d)];
      }
    } else {
      std::vector<float> mean(static_cast<std::size_t>(x.cols()));
      std::vector<float> inv_std(static_cast<std::size_t>(x.cols()));
      for (int d = 0; d < x.cols(); ++d) {
        mean[static_cast<std::size_t>(d)] = running_mean.at(0, d);
        inv_std[static_cast<std::size_t>(d)] =
            1.0f / std::sqrt(running_var.at(0, d) + eps);
      }
      normalized = standardize_affine_const(x, mean, inv_std, tape);
    }
    return affine_cols(normalized, gamma, beta, tape);
  }

  void collect_params(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
  }

  void collect_state(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".running_mean", running_mean);
    out.emplace_back(prefix + ".running_var", running_var);
  }
};

inline std::vector<Tensor> trainable_of(const NamedParams& named) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named)
    if (t.requires_grad()) out.push_back(t);
  return out;
}

inline void set_trainable(NamedParams& named, bool trainable) {
  for (auto& [name, t] : named) t.set_requires_grad(trainable);
}

inline long long count_params(const NamedParams& named, bool trainable_only = true) {
  long long total = 0;
  for (const auto& [name, t] : named)
    if (!trainable_only || t.requires_grad()) total += static_cast<long long>(t.size());
  return total;
}

}  // namespace sample
