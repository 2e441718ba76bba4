#pragma once

// Masked mean-field Gaussian fully-connected layer.
//
// Activations are laid out feature-major: an input batch is an [in x B]
// matrix whose columns are examples, and the layer output is [out x B].
// The forward pass uses the local reparameterization trick
//
//   y = mu x + sqrt((sigma . sigma)(x . x)) . eps + bias
//
// with one [out x B] standard-normal draw per call, recorded on the tape so
// that the backward pass is a deterministic function of it.

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "ssvi/random.hpp"

namespace ssvi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

// Floor for unmasked sigma after an optimizer step.
inline constexpr double kSigmaFloor = 1e-8;

struct BayesLinear {
  Matrix mu;        // [out x in]
  Matrix sigma;     // [out x in], >= 0
  Vector bias;      // [out], deterministic and never masked
  MaskMatrix mask;  // [out x in], 0/1

  BayesLinear() = default;
  // Zero parameters with every coordinate active.
  BayesLinear(Eigen::Index out_dim, Eigen::Index in_dim);

  Eigen::Index out_dim() const noexcept { return mu.rows(); }
  Eigen::Index in_dim() const noexcept { return mu.cols(); }
  Eigen::Index size() const noexcept { return mu.size(); }
  Eigen::Index active_count() const;

  // Zeroes mu and sigma wherever mask == 0.
  void apply_mask();

  // mu . mask and sigma . mask, independent of whatever masked entries hold.
  Matrix effective_mu() const;
  Matrix effective_sigma() const;
};

struct ForwardTape {
  Matrix x;     // [in x B]
  Matrix eps;   // [out x B]
  Matrix mean;  // [out x B], mu x
  Matrix std;   // [out x B], sqrt((sigma . sigma)(x . x))
};

struct LrtOutput {
  Matrix y;
  ForwardTape tape;
};

LrtOutput lrt_forward(const BayesLinear& layer, const Matrix& x, Rng& rng);
// Same, with caller-provided noise of shape [out x B].
LrtOutput lrt_forward(const BayesLinear& layer, const Matrix& x, const Matrix& eps);

struct LayerGrads {
  Matrix d_mu;     // zero at masked coordinates
  Matrix d_sigma;  // zero at masked coordinates and wherever the tape std is 0
  Vector d_bias;
  Matrix d_x;
};

LayerGrads lrt_backward(const BayesLinear& layer, const ForwardTape& tape, const Matrix& dL_dy);

// Weight-space sampling: a fresh weight matrix mu + sigma . eta_b for every
// batch column b. Used as a distributional reference for lrt_forward.
struct NaiveOutput {
  Matrix y;
  std::vector<Matrix> eta;  // one [out x in] draw per column
};

NaiveOutput naive_forward_with_noise(const BayesLinear& layer, const Matrix& x, Rng& rng);
Matrix naive_forward(const BayesLinear& layer, const Matrix& x, Rng& rng);

// dL/dsigma of the weight-space path: sum_b (dL/dy_b x_b^T) . eta_b.
Matrix naive_sigma_grad(const BayesLinear& layer, const Matrix& x, const std::vector<Matrix>& eta,
                        const Matrix& dL_dy);

}  // namespace ssvi
