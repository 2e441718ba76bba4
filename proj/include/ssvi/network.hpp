#pragma once

// A small Bayesian MLP built from BayesLinear layers with ReLU between them.
// The head is softmax cross-entropy for classification and a fixed-noise
// Gaussian likelihood for regression.

#include <cstddef>
#include <vector>

#include "ssvi/bnn_layers.hpp"

namespace ssvi {

enum class Task { Classification, Regression };

// Observation noise of the regression likelihood.
inline constexpr double kRegressionNoise = 0.1;

struct VariationalNet {
  std::vector<BayesLinear> layers;
  Task task = Task::Classification;

  // Builds zero-initialised layers for widths {in, h1, ..., out}.
  static VariationalNet with_widths(const std::vector<int>& widths, Task task);

  std::size_t weight_count() const;  // d: every maskable coordinate
  std::size_t active_count() const;  // ||gamma||_1
  // Coordinates with mu != 0 or sigma != 0, masked or not.
  std::size_t nonzero_count() const;
  Eigen::Index input_dim() const { return layers.front().in_dim(); }
  Eigen::Index output_dim() const { return layers.back().out_dim(); }
  std::vector<int> widths() const;

  void apply_mask();
};

// Per-example targets for a batch; exactly one of the two is used, by task.
struct Batch {
  Matrix x;                  // [in x B]
  std::vector<int> labels;   // classification
  Eigen::RowVectorXd values;  // regression, [1 x B]

  Eigen::Index size() const { return x.cols(); }
};

struct NetTape {
  std::vector<ForwardTape> layers;
  std::vector<Matrix> outputs;  // pre-activation output of each layer
};

struct NetForward {
  Matrix output;  // logits or regression means, [out x B]
  NetTape tape;
};

NetForward net_forward(const VariationalNet& net, const Matrix& x, Rng& rng);

struct NetGrads {
  std::vector<Matrix> d_mu;
  std::vector<Matrix> d_sigma;
  std::vector<Vector> d_bias;

  static NetGrads zeros_like(const VariationalNet& net);
};

NetGrads net_backward(const VariationalNet& net, const NetTape& tape, const Matrix& dL_dout);

struct LossResult {
  double loss = 0.0;  // mean negative log-likelihood over the batch
  Matrix d_output;    // d loss / d output
};

LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);
LossResult gaussian_nll(const Matrix& output, const Eigen::RowVectorXd& targets,
                        double noise = kRegressionNoise);
LossResult data_loss(Task task, const Matrix& output, const Batch& batch);

// Column-wise softmax.
Matrix softmax(const Matrix& logits);

// Mean of the softmax over n_samples independent LRT forwards, [classes x n].
// For regression nets this averages the predicted means instead.
Matrix predict(const VariationalNet& net, const Matrix& x, int n_samples, Rng& rng);

enum class ProbeMode { SampledTheta, MeanTheta };

// |(1/B) sum_i grad_theta f(x_i)| over the full dense coordinate space.
// Masked weights take part in the forward with value 0; unmasked weights are
// drawn from q (SampledTheta) or set to mu (MeanTheta).
std::vector<Matrix> dense_grad_probe(const VariationalNet& net, const Batch& batch,
                                     ProbeMode mode, Rng& rng);

}  // namespace ssvi
