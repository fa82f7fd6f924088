#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace sample {

struct EvalMetrics {
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

// Macro-F1 is the unweighted mean of per-class F1; a class with an empty
// precision or recall denominator contributes zero.
inline EvalMetrics macro_f1_accuracy(const std::vector<int>& gold,
                                     const std::vector<int>& predicted,
                                     int num_classes = 2) {
  if (gold.empty() || gold.size() != predicted.size()) {
    throw std::invalid_argument("macro_f1_accuracy: got " + std::to_string(gold.size()) +
                                " gold vs " + std::to_string(predicted.size()) +
                                " predicted labels");
  }
  std::vector<long long> tp(static_cast<std::size_t>(num_classes), 0);
  std::vector<long long> fp(static_cast<std::size_t>(num_classes), 0);
  std::vector<long long> fn(static_cast<std::size_t>(num_classes), 0);
  long long correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i], p = predicted[i];
    if (g < 0 || g >= num_classes || p < 0 || p >= num_classes) {
      throw std::invalid_argument("macro_f1_accuracy: label outside 0.." +
                                  std::to_string(num_classes - 1));
    }
    if (g == p) {
      ++correct;
      ++tp[static_cast<std::size_t>(g)];
    } else {
      ++fp[static_cast<std::size_t>(p)];
      ++fn[static_cast<std::size_t>(g)];
    }
  }
  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double precision = tp[i] + fp[i] > 0
        ? static_cast<double>(tp[i]) / static_cast<double>(tp[i] + fp[i]) : 0.0;
    const double recall = tp[i] + fn[i] > 0
        ? static_cast<double>(tp[i]) / static_cast<double>(tp[i] + fn[i]) : 0.0;
    f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  EvalMetrics m;
  m.macro_f1 = f1_sum / num_classes;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  return m;
}

// Mean after removing exactly one occurrence of the maximum and one of the
// minimum.
inline double trimmed_mean(const std::vector<double>& scores) {
  if (scores.size() < 3) {
    throw std::invalid_argument("trimmed_mean: need at least 3 scores, got " +
                                std::to_string(scores.size()));
  }
  const auto max_it = std::max_element(scores.begin(), scores.end());
  const auto min_it = std::min_element(scores.begin(), scores.end());
  double total = 0.0;
  for (const double s : scores) total += s;
  total -= *max_it + *min_it;
  return total / static_cast<double>(scores.size() - 2);
}

// Population standard deviation over all values.
inline double population_stddev(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("population_stddev: empty input");
  double mean = 0.0;
  for (const double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (const double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

inline double plain_mean(const std::vector<double>& values) {
  double mean = 0.0;
  for (const double v : values) mean += v;
  return mean / static_cast<double>(values.size());
}

}  // namespace sample
