#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "sample/tensor.hpp"

namespace sample {

struct AdamWConfig {
  float learning_rate = 3e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  float weight_decay = 1e-3f;
};

// AdamW with decoupled weight decay: the decay multiplies the parameter
// directly and is not folded into the gradient moments.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig config = {})
      : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
  }

  long long step_count() const { return step_; }
  const AdamWConfig& config() const { return config_; }

  void zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
  }

  void step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(config_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(config_.beta2), static_cast<double>(step_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
      Tensor& p = params_[pi];
      if (!p.has_grad()) {
        // Parameter untouched by backward this step: gradient is zero, but
        // decoupled decay still applies.
        if (config_.weight_decay != 0.0f) {
          const float shrink = 1.0f - config_.learning_rate * config_.weight_decay;
          for (auto& w : p.data()) w *= shrink;
        }
        continue;
      }
      const auto& g = p.grad();
      auto& m = m_[pi];
      auto& v = v_[pi];
      auto& w = p.data();
      const float lr = config_.learning_rate;
      if (config_.weight_decay != 0.0f) {
        const float shrink = 1.0f - lr * config_.weight_decay;
        for (auto& x : w) x *= shrink;
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0f - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0f - config_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
    }
  }

 private:
  std::vector<Tensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  long long step_ = 0;
};

}  // namespace sample
