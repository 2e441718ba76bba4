#pragma once

// The sparse subspace selector gamma: a binary mask over every weight
// coordinate of a VariationalNet with a fixed budget s of active entries.
//
// Coordinates are addressed by a flat index: layers in order, row-major
// within a layer (index = offset + row * in_dim + col). Ties in any
// ranking are broken by ascending flat index.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ssvi/gaussian_stats.hpp"
#include "ssvi/network.hpp"

namespace ssvi {

struct LayerShape {
  Eigen::Index out_dim;
  Eigen::Index in_dim;
};

struct Mask {
  std::vector<MaskMatrix> layers;
  std::size_t budget = 0;  // s

  std::size_t dimension() const;  // d
  std::size_t count() const;      // ||gamma||_1
  double sparsity() const;        // 1 - s / d

  bool test(std::size_t flat) const;
  void set(std::size_t flat, bool on);
  std::vector<std::size_t> active_indices() const;
  std::vector<std::size_t> inactive_indices() const;

  bool operator==(const Mask& other) const;
};

// Resolves a flat index into (layer, row, col).
struct Coord {
  std::size_t layer;
  Eigen::Index row;
  Eigen::Index col;
};
Coord locate(const std::vector<LayerShape>& shapes, std::size_t flat);
std::vector<LayerShape> shapes_of(const VariationalNet& net);

// Budget from a target sparsity: round((1 - sparsity) d), at least 1.
std::size_t budget_for_sparsity(std::size_t dimension, double sparsity);

Mask init_mask(const std::vector<LayerShape>& shapes, std::size_t budget, std::uint64_t seed);
Mask extract_mask(const VariationalNet& net);
// Installs `mask` into the network and zeroes parameters outside it.
void install_mask(VariationalNet& net, const Mask& mask);

enum class Ranking { Global, PerLayer };

struct RemovalResult {
  Mask mask;
  std::vector<std::size_t> removed;  // flat indices, ascending
};

// Drops the K lowest-scoring active coordinates under `kind`. Removed
// coordinates have mu and sigma zeroed in `net` immediately.
RemovalResult removal(const Mask& mask, VariationalNet& net, std::size_t k,
                      const CriterionKind& kind, Ranking ranking = Ranking::Global);

// Removed set under `kind` without touching the network.
std::vector<std::size_t> removal_set(const Mask& mask, const VariationalNet& net, std::size_t k,
                                     const CriterionKind& kind, Ranking ranking = Ranking::Global);

enum class AdditionEstimator { OneStepSampled, OneStepMean, MultiStep };

struct AdditionResult {
  Mask mask;
  std::vector<std::size_t> added;  // flat indices, ascending
};

// Activates the K inactive coordinates with the largest probe values. With
// Ranking::PerLayer, `per_layer_quota` gives how many to add in each layer.
AdditionResult addition(const Mask& mask, const std::vector<Matrix>& probe, std::size_t k,
                        Ranking ranking = Ranking::Global,
                        const std::vector<std::size_t>& per_layer_quota = {});

// Probe values for the chosen estimator: one sampled-theta gradient, one
// mean-theta gradient, or the average of mc_steps sampled-theta gradient
// magnitudes, each on its own batch from `next_batch`.
template <class BatchSource>
std::vector<Matrix> addition_scores(const VariationalNet& net, AdditionEstimator estimator,
                                    int mc_steps, BatchSource&& next_batch, Rng& rng) {
  if (estimator == AdditionEstimator::OneStepMean)
    return dense_grad_probe(net, next_batch(), ProbeMode::MeanTheta, rng);
  const int steps = estimator == AdditionEstimator::MultiStep ? mc_steps : 1;
  std::vector<Matrix> acc = dense_grad_probe(net, next_batch(), ProbeMode::SampledTheta, rng);
  for (int i = 1; i < steps; ++i) {
    const std::vector<Matrix> g = dense_grad_probe(net, next_batch(), ProbeMode::SampledTheta, rng);
    for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += g[l];
  }
  if (steps > 1)
    for (auto& m : acc) m /= static_cast<double>(steps);
  return acc;
}

enum class ReinitStrategy { Epsilon, ModuleMean };

struct ReinitReport {
  std::size_t fallback_layers = 0;  // layers that had nothing to average
};

inline constexpr double kReinitFallbackSigma = 1e-3;

// Sets sigma for freshly added coordinates (mu is reset to 0). ModuleMean
// uses the mean sigma over the layer's active, not-newly-added entries and
// falls back to kReinitFallbackSigma when that set is empty.
ReinitReport reinit_sigma(VariationalNet& net, const std::vector<std::size_t>& newly_added,
                          ReinitStrategy strategy, double epsilon = kReinitFallbackSigma);

enum class RateDecay { Cosine, Constant };

struct ReplacementSchedule {
  double r0 = 0.3;
  int total = 1;  // T
  RateDecay decay = RateDecay::Cosine;
};

double replacement_rate(int t, const ReplacementSchedule& sched);
// K_t = round(r_t s), never negative.
std::size_t replacement_count(double rate, std::size_t budget);

}  // namespace ssvi
