#include "ssvi/subspace.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "ssvi/error.hpp"

namespace ssvi {

namespace {

struct Scored {
  double score;
  std::size_t index;
};

std::vector<std::size_t> layer_offsets(const std::vector<MaskMatrix>& layers) {
  std::vector<std::size_t> offsets(layers.size() + 1, 0);
  for (std::size_t l = 0; l < layers.size(); ++l)
    offsets[l + 1] = offsets[l] + static_cast<std::size_t>(layers[l].size());
  return offsets;
}

std::vector<LayerShape> shapes_of(const std::vector<MaskMatrix>& layers) {
  std::vector<LayerShape> shapes;
  for (const auto& m : layers) shapes.push_back({m.rows(), m.cols()});
  return shapes;
}

// Splits k over layers in proportion to `weights` (largest remainder, ties to
// the lower layer index), never exceeding `caps`.
std::vector<std::size_t> apportion(std::size_t k, const std::vector<std::size_t>& weights,
                                   const std::vector<std::size_t>& caps) {
  const std::size_t n = weights.size();
  std::vector<std::size_t> quota(n, 0);
  const std::size_t total = std::accumulate(weights.begin(), weights.end(), std::size_t{0});
  if (k == 0 || total == 0) return quota;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < n; ++l) {
    const double exact = static_cast<double>(k) * static_cast<double>(weights[l]) /
                         static_cast<double>(total);
    quota[l] = std::min(caps[l], static_cast<std::size_t>(std::floor(exact)));
    assigned += quota[l];
    remainders.emplace_back(exact - std::floor(exact), l);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  // Hand out what is left, first by remainder, then anywhere with capacity.
  for (int pass = 0; pass < 2 && assigned < k; ++pass) {
    for (const auto& [rem, l] : remainders) {
      if (assigned == k) break;
      if (quota[l] < caps[l]) {
        ++quota[l];
        ++assigned;
      }
    }
  }
  return quota;
}

// Indices of the k smallest (ascending == true) or largest scores, ties by index.
std::vector<std::size_t> select_extreme(std::vector<Scored> items, std::size_t k, bool smallest) {
  auto cmp = [smallest](const Scored& a, const Scored& b) {
    if (a.score != b.score) return smallest ? a.score < b.score : a.score > b.score;
    return a.index < b.index;
  };
  k = std::min(k, items.size());
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(),
                    cmp);
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(items[i].index);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::size_t Mask::dimension() const {
  std::size_t d = 0;
  for (const auto& m : layers) d += static_cast<std::size_t>(m.size());
  return d;
}

std::size_t Mask::count() const {
  std::size_t c = 0;
  for (const auto& m : layers) c += static_cast<std::size_t>(m.cast<Eigen::Index>().sum());
  return c;
}

double Mask::sparsity() const {
  const std::size_t d = dimension();
  return d == 0 ? 0.0 : 1.0 - static_cast<double>(budget) / static_cast<double>(d);
}

bool Mask::test(std::size_t flat) const {
  const Coord c = locate(shapes_of(layers), flat);
  return layers[c.layer](c.row, c.col) != 0;
}

void Mask::set(std::size_t flat, bool on) {
  const Coord c = locate(shapes_of(layers), flat);
  layers[c.layer](c.row, c.col) = on ? 1 : 0;
}

std::vector<std::size_t> Mask::active_indices() const {
  std::vector<std::size_t> out;
  std::size_t offset = 0;
  for (const auto& m : layers) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (m(r, c) != 0) out.push_back(offset + static_cast<std::size_t>(r * m.cols() + c));
    offset += static_cast<std::size_t>(m.size());
  }
  return out;
}

std::vector<std::size_t> Mask::inactive_indices() const {
  std::vector<std::size_t> out;
  std::size_t offset = 0;
  for (const auto& m : layers) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (m(r, c) == 0) out.push_back(offset + static_cast<std::size_t>(r * m.cols() + c));
    offset += static_cast<std::size_t>(m.size());
  }
  return out;
}

bool Mask::operator==(const Mask& other) const {
  if (budget != other.budget || layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].rows() != other.layers[l].rows() || layers[l].cols() != other.layers[l].cols())
      return false;
    if (layers[l] != other.layers[l]) return false;
  }
  return true;
}

Coord locate(const std::vector<LayerShape>& shapes, std::size_t flat) {
  std::size_t offset = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto size = static_cast<std::size_t>(shapes[l].out_dim * shapes[l].in_dim);
    if (flat < offset + size) {
      const auto local = static_cast<Eigen::Index>(flat - offset);
      return {l, local / shapes[l].in_dim, local % shapes[l].in_dim};
    }
    offset += size;
  }
  throw Error(Errc::dimension_mismatch, "flat index " + std::to_string(flat) +
                                            " outside a space of dimension " +
                                            std::to_string(offset));
}

std::vector<LayerShape> shapes_of(const VariationalNet& net) {
  std::vector<LayerShape> shapes;
  for (const auto& l : net.layers) shapes.push_back({l.out_dim(), l.in_dim()});
  return shapes;
}

std::size_t budget_for_sparsity(std::size_t dimension, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    throw Error(Errc::invalid_config, "sparsity must lie in [0, 1)");
  const auto s = static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(dimension)));
  return std::clamp<std::size_t>(s, 1, dimension);
}

Mask init_mask(const std::vector<LayerShape>& shapes, std::size_t budget, std::uint64_t seed) {
  Mask mask;
  for (const auto& s : shapes) mask.layers.push_back(MaskMatrix::Zero(s.out_dim, s.in_dim));
  const std::size_t d = mask.dimension();
  if (budget < 1 || budget > d) {
    throw Error(Errc::budget_out_of_range, "budget " + std::to_string(budget) +
                                               " outside [1, " + std::to_string(d) + "]");
  }
  mask.budget = budget;

  // Partial Fisher-Yates: the first `budget` slots form a uniform s-subset.
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < budget; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, d - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  for (std::size_t i = 0; i < budget; ++i) mask.set(idx[i], true);
  return mask;
}

Mask extract_mask(const VariationalNet& net) {
  Mask mask;
  for (const auto& l : net.layers) mask.layers.push_back(l.mask);
  mask.budget = mask.count();
  return mask;
}

void install_mask(VariationalNet& net, const Mask& mask) {
  if (mask.layers.size() != net.layers.size())
    throw Error(Errc::dimension_mismatch, "mask depth does not match network depth");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    if (mask.layers[l].rows() != net.layers[l].out_dim() ||
        mask.layers[l].cols() != net.layers[l].in_dim())
      throw Error(Errc::dimension_mismatch, "mask layer " + std::to_string(l) + " has wrong shape");
    net.layers[l].mask = mask.layers[l];
    net.layers[l].apply_mask();
  }
}

std::vector<std::size_t> removal_set(const Mask& mask, const VariationalNet& net, std::size_t k,
                                     const CriterionKind& kind, Ranking ranking) {
  const std::size_t active = mask.count();
  if (k > active) {
    throw Error(Errc::budget_out_of_range, "cannot remove " + std::to_string(k) + " of " +
                                               std::to_string(active) + " active coordinates");
  }
  if (k == 0) return {};
  if (mask.layers.size() != net.layers.size())
    throw Error(Errc::dimension_mismatch, "mask depth does not match network depth");

  const auto offsets = layer_offsets(mask.layers);
  std::vector<std::vector<Scored>> per_layer(mask.layers.size());
  for (std::size_t l = 0; l < mask.layers.size(); ++l) {
    const MaskMatrix& m = mask.layers[l];
    const BayesLinear& layer = net.layers[l];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (m(r, c) != 0) {
          const double score = criterion_score(kind, {layer.mu(r, c), layer.sigma(r, c)});
          per_layer[l].push_back({score, offsets[l] + static_cast<std::size_t>(r * m.cols() + c)});
        }
  }

  if (ranking == Ranking::Global) {
    std::vector<Scored> all;
    for (auto& v : per_layer) all.insert(all.end(), v.begin(), v.end());
    return select_extreme(std::move(all), k, true);
  }

  std::vector<std::size_t> counts, caps;
  for (const auto& v : per_layer) {
    counts.push_back(v.size());
    caps.push_back(v.size());
  }
  const auto quota = apportion(k, counts, caps);
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < per_layer.size(); ++l) {
    auto part = select_extreme(std::move(per_layer[l]), quota[l], true);
    out.insert(out.end(), part.begin(), part.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

RemovalResult removal(const Mask& mask, VariationalNet& net, std::size_t k,
                      const CriterionKind& kind, Ranking ranking) {
  RemovalResult res{mask, removal_set(mask, net, k, kind, ranking)};
  const auto shapes = shapes_of(net);
  for (std::size_t flat : res.removed) {
    const Coord c = locate(shapes, flat);
    res.mask.layers[c.layer](c.row, c.col) = 0;
    net.layers[c.layer].mask(c.row, c.col) = 0;
    net.layers[c.layer].mu(c.row, c.col) = 0.0;
    net.layers[c.layer].sigma(c.row, c.col) = 0.0;
  }
  return res;
}

AdditionResult addition(const Mask& mask, const std::vector<Matrix>& probe, std::size_t k,
                        Ranking ranking, const std::vector<std::size_t>& per_layer_quota) {
  if (probe.size() != mask.layers.size())
    throw Error(Errc::dimension_mismatch, "probe depth does not match mask depth");
  for (std::size_t l = 0; l < probe.size(); ++l)
    if (probe[l].rows() != mask.layers[l].rows() || probe[l].cols() != mask.layers[l].cols())
      throw Error(Errc::dimension_mismatch, "probe must cover every coordinate of layer " +
                                                std::to_string(l));

  AdditionResult res{mask, {}};
  if (k == 0) return res;

  const auto offsets = layer_offsets(mask.layers);
  std::vector<std::vector<Scored>> per_layer(mask.layers.size());
  std::size_t pool = 0;
  for (std::size_t l = 0; l < mask.layers.size(); ++l) {
    const MaskMatrix& m = mask.layers[l];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        if (m(r, c) == 0)
          per_layer[l].push_back(
              {probe[l](r, c), offsets[l] + static_cast<std::size_t>(r * m.cols() + c)});
    pool += per_layer[l].size();
  }
  if (pool < k) {
    throw Error(Errc::insufficient_candidates, "only " + std::to_string(pool) +
                                                   " inactive coordinates for " +
                                                   std::to_string(k) + " additions");
  }

  if (ranking == Ranking::Global) {
    std::vector<Scored> all;
    for (auto& v : per_layer) all.insert(all.end(), v.begin(), v.end());
    res.added = select_extreme(std::move(all), k, false);
  } else {
    if (per_layer_quota.size() != per_layer.size())
      throw Error(Errc::dimension_mismatch, "per-layer addition needs one quota per layer");
    std::size_t total = 0;
    for (std::size_t l = 0; l < per_layer.size(); ++l) {
      if (per_layer_quota[l] > per_layer[l].size())
        throw Error(Errc::insufficient_candidates,
                    "layer " + std::to_string(l) + " has too few inactive coordinates");
      total += per_layer_quota[l];
      auto part = select_extreme(std::move(per_layer[l]), per_layer_quota[l], false);
      res.added.insert(res.added.end(), part.begin(), part.end());
    }
    if (total != k) throw Error(Errc::dimension_mismatch, "per-layer quotas must sum to K");
    std::sort(res.added.begin(), res.added.end());
  }

  const auto shapes = shapes_of(mask.layers);
  for (std::size_t flat : res.added) {
    const Coord c = locate(shapes, flat);
    res.mask.layers[c.layer](c.row, c.col) = 1;
  }
  return res;
}

ReinitReport reinit_sigma(VariationalNet& net, const std::vector<std::size_t>& newly_added,
                          ReinitStrategy strategy, double epsilon) {
  ReinitReport report;
  if (newly_added.empty()) return report;
  if (!(epsilon > 0.0)) throw Error(Errc::invalid_config, "reinit epsilon must be positive");
  const auto shapes = shapes_of(net);

  std::vector<MaskMatrix> is_new;
  for (const auto& l : net.layers) is_new.push_back(MaskMatrix::Zero(l.out_dim(), l.in_dim()));
  for (std::size_t flat : newly_added) {
    const Coord c = locate(shapes, flat);
    is_new[c.layer](c.row, c.col) = 1;
  }

  std::vector<double> fill(net.layers.size(), epsilon);
  if (strategy == ReinitStrategy::ModuleMean) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      const BayesLinear& layer = net.layers[l];
      double sum = 0.0;
      std::size_t n = 0;
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
          if (layer.mask(r, c) != 0 && is_new[l](r, c) == 0) {
            sum += layer.sigma(r, c);
            ++n;
          }
      if (n > 0) {
        fill[l] = sum / static_cast<double>(n);
      } else {
        fill[l] = kReinitFallbackSigma;
        if (is_new[l].cast<int>().sum() > 0) ++report.fallback_layers;
      }
    }
  }

  for (std::size_t flat : newly_added) {
    const Coord c = locate(shapes, flat);
    BayesLinear& layer = net.layers[c.layer];
    layer.mask(c.row, c.col) = 1;
    layer.mu(c.row, c.col) = 0.0;
    layer.sigma(c.row, c.col) = fill[c.layer];
  }
  return report;
}

double replacement_rate(int t, const ReplacementSchedule& sched) {
  if (sched.decay == RateDecay::Constant) return sched.r0;
  if (sched.total <= 0) return 0.0;
  const double frac = std::clamp(static_cast<double>(t) / static_cast<double>(sched.total), 0.0, 1.0);
  const double r = 0.5 * sched.r0 * (1.0 + std::cos(std::numbers::pi * frac));
  return std::clamp(r, 0.0, sched.r0);
}

std::size_t replacement_count(double rate, std::size_t budget) {
  const double k = std::round(rate * static_cast<double>(budget));
  return k <= 0.0 ? 0 : static_cast<std::size_t>(k);
}

}  // namespace ssvi
