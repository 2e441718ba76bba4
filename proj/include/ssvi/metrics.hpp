#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssvi/network.hpp"

namespace ssvi {

struct EceConfig {
  int n_bins = 15;  // equal-width bins on [0, 1]
};

// Expected calibration error: sum_b (n_b / N) |acc_b - conf_b| over
// non-empty bins. A confidence of exactly 1 falls in the last bin.
double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct,
           const EceConfig& cfg = {});

// |A n B| / |A u B|; two empty sets agree perfectly (1).
double criterion_iou(std::vector<std::size_t> a, std::vector<std::size_t> b);

struct AccuracyNll {
  double accuracy;
  double nll;
};

// Top-1 accuracy and mean -log p(true class), probabilities clamped at 1e-12.
// `probabilities` is [classes x N].
AccuracyNll accuracy_nll(const Matrix& probabilities, std::span<const int> labels);

// Confidence (max probability) and correctness per column.
struct Calibration {
  std::vector<double> confidence;
  std::vector<std::uint8_t> correct;
};
Calibration calibration_inputs(const Matrix& probabilities, std::span<const int> labels);

// Multiply-add accounting for LRT training. One forward costs two passes
// (mean and variance) over the active weights per example; backward costs
// twice the forward. Bias terms are not counted.
struct FlopsModel {
  std::vector<std::size_t> dense_weights;  // per layer
  std::size_t active_weights = 0;          // s, or d when dense
  std::size_t batch_size = 0;
  std::size_t total_steps = 0;

  static constexpr double kForwardPasses = 2.0;
  static constexpr double kBackwardMultiplier = 2.0;

  double dense_per_step() const;
  double sparse_per_step() const;
  double sparse_total() const { return sparse_per_step() * static_cast<double>(total_steps); }
  double dense_total() const { return dense_per_step() * static_cast<double>(total_steps); }
  double ratio() const;
};

FlopsModel flops_estimate(const std::vector<int>& widths, std::size_t active_weights,
                          std::size_t batch_size, std::size_t total_steps);

}  // namespace ssvi
