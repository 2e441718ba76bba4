#include "ssvi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "ssvi/error.hpp"

namespace ssvi {

double ece(std::span<const double> confidences, std::span<const std::uint8_t> correct,
           const EceConfig& cfg) {
  if (confidences.empty()) throw Error(Errc::empty_input, "ECE of an empty prediction set");
  if (confidences.size() != correct.size())
    throw Error(Errc::dimension_mismatch, "confidence and correctness lengths differ");
  if (cfg.n_bins < 1) throw Error(Errc::invalid_config, "ECE needs at least one bin");

  const auto bins = static_cast<std::size_t>(cfg.n_bins);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<double> hit_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0))
      throw Error(Errc::dimension_mismatch, "confidence outside [0, 1]");
    const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
    conf_sum[b] += c;
    hit_sum[b] += correct[i] ? 1.0 : 0.0;
    ++count[b];
  }
  const auto n = static_cast<double>(confidences.size());
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    const auto nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(hit_sum[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

double criterion_iou(std::vector<std::size_t> a, std::vector<std::size_t> b) {
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const double uni = static_cast<double>(a.size() + b.size() - inter.size());
  return static_cast<double>(inter.size()) / uni;
}

AccuracyNll accuracy_nll(const Matrix& probabilities, std::span<const int> labels) {
  if (static_cast<std::size_t>(probabilities.cols()) != labels.size())
    throw Error(Errc::dimension_mismatch, "probability columns do not match label count");
  if (labels.empty()) throw Error(Errc::empty_input, "accuracy of an empty prediction set");
  double hits = 0.0;
  double nll = 0.0;
  for (Eigen::Index i = 0; i < probabilities.cols(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= probabilities.rows())
      throw Error(Errc::dimension_mismatch, "label out of range");
    Eigen::Index arg = 0;
    probabilities.col(i).maxCoeff(&arg);
    if (arg == y) hits += 1.0;
    nll -= std::log(std::max(probabilities(y, i), 1e-12));
  }
  const auto n = static_cast<double>(labels.size());
  return {hits / n, nll / n};
}

Calibration calibration_inputs(const Matrix& probabilities, std::span<const int> labels) {
  Calibration cal;
  cal.confidence.reserve(labels.size());
  cal.correct.reserve(labels.size());
  for (Eigen::Index i = 0; i < probabilities.cols(); ++i) {
    Eigen::Index arg = 0;
    const double conf = probabilities.col(i).maxCoeff(&arg);
    cal.confidence.push_back(std::clamp(conf, 0.0, 1.0));
    cal.correct.push_back(arg == labels[static_cast<std::size_t>(i)] ? 1 : 0);
  }
  return cal;
}

double FlopsModel::dense_per_step() const {
  double macs = 0.0;
  for (std::size_t w : dense_weights) macs += static_cast<double>(w);
  const double forward = kForwardPasses * macs * static_cast<double>(batch_size);
  return forward * (1.0 + kBackwardMultiplier);
}

double FlopsModel::sparse_per_step() const {
  const double forward =
      kForwardPasses * static_cast<double>(active_weights) * static_cast<double>(batch_size);
  return forward * (1.0 + kBackwardMultiplier);
}

double FlopsModel::ratio() const {
  const double dense = dense_per_step();
  return dense == 0.0 ? 1.0 : sparse_per_step() / dense;
}

FlopsModel flops_estimate(const std::vector<int>& widths, std::size_t active_weights,
                          std::size_t batch_size, std::size_t total_steps) {
  FlopsModel model;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    model.dense_weights.push_back(static_cast<std::size_t>(widths[i]) *
                                  static_cast<std::size_t>(widths[i + 1]));
  model.active_weights = active_weights;
  model.batch_size = batch_size;
  model.total_steps = total_steps;
  return model;
}

}  // namespace ssvi
