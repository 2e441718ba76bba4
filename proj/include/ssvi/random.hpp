#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

namespace ssvi {

// One engine type for the whole library so that checkpointed RNG state is
// portable between runs built from the same sources.
using Rng = std::mt19937_64;

inline void fill_standard_normal(Eigen::Ref<Eigen::MatrixXd> out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < out.cols(); ++j)
    for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal(rng);
}

inline Eigen::MatrixXd standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd out(rows, cols);
  fill_standard_normal(out, rng);
  return out;
}

// Derives an independent stream from a base seed so that e.g. data shuffling
// and forward noise never share draws.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

std::string serialize_rng(const Rng& rng);
void deserialize_rng(Rng& rng, const std::string& state);

}  // namespace ssvi
