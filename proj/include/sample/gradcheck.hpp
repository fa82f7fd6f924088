#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sample/tensor.hpp"

namespace sample {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

// Compares analytic gradients against central finite differences for every
// element of every parameter. The loss function receives a tape (or nullptr
// for the pure forward evaluations) and must be deterministic across calls:
// anything stochastic inside it has to reseed from a fixed state.
//
// The error metric is |analytic - fd| / max(1, |analytic|, |fd|): relative
// for large gradients, absolute near zero, which is the resolution 32-bit
// forward arithmetic can support with a 1e-3 step.
inline GradCheckReport grad_check(const std::function<Tensor(Tape*)>& loss_fn,
                                  const NamedParams& params, double tolerance,
                                  float step = 1e-3f) {
  GradCheckReport report;
  report.tolerance = tolerance;

  for (const auto& [name, p] : params) {
    Tensor mutable_p = p;
    mutable_p.zero_grad();
  }
  std::vector<std::vector<float>> analytic;
  {
    Tape tape;
    Tensor loss = loss_fn(&tape);
    tape.backward(loss);
  }
  analytic.reserve(params.size());
  for (const auto& [name, p] : params) {
    Tensor mutable_p = p;
    analytic.push_back(mutable_p.grad());  // allocates zeros if untouched
  }

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi].second;
    GradCheckEntry entry;
    entry.name = params[pi].first;
    entry.checked = p.size();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const float saved = p.data()[i];
      const float hi = saved + step;
      const float lo = saved - step;
      p.data()[i] = hi;
      const double loss_hi = loss_fn(nullptr).item();
      p.data()[i] = lo;
      const double loss_lo = loss_fn(nullptr).item();
      p.data()[i] = saved;
      const double fd = (loss_hi - loss_lo) /
                        (static_cast<double>(hi) - static_cast<double>(lo));
      const double an = analytic[pi][i];
      const double denom = std::max({1.0, std::fabs(an), std::fabs(fd)});
      entry.max_rel_err = std::max(entry.max_rel_err, std::fabs(an - fd) / denom);
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

}  // namespace sample
