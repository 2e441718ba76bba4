#include "ssvi/network.hpp"

#include <cmath>
#include <string>

#include "ssvi/error.hpp"

namespace ssvi {

VariationalNet VariationalNet::with_widths(const std::vector<int>& widths, Task task) {
  if (widths.size() < 2) throw Error(Errc::invalid_config, "a network needs at least two widths");
  VariationalNet net;
  net.task = task;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] <= 0 || widths[i + 1] <= 0)
      throw Error(Errc::invalid_config, "layer widths must be positive");
    net.layers.emplace_back(widths[i + 1], widths[i]);
  }
  return net;
}

std::size_t VariationalNet::weight_count() const {
  std::size_t d = 0;
  for (const auto& l : layers) d += static_cast<std::size_t>(l.size());
  return d;
}

std::size_t VariationalNet::active_count() const {
  std::size_t s = 0;
  for (const auto& l : layers) s += static_cast<std::size_t>(l.active_count());
  return s;
}

std::size_t VariationalNet::nonzero_count() const {
  std::size_t n = 0;
  for (const auto& l : layers)
    n += static_cast<std::size_t>(((l.mu.array() != 0.0) || (l.sigma.array() != 0.0)).count());
  return n;
}

std::vector<int> VariationalNet::widths() const {
  std::vector<int> w;
  if (layers.empty()) return w;
  w.push_back(static_cast<int>(layers.front().in_dim()));
  for (const auto& l : layers) w.push_back(static_cast<int>(l.out_dim()));
  return w;
}

void VariationalNet::apply_mask() {
  for (auto& l : layers) l.apply_mask();
}

NetForward net_forward(const VariationalNet& net, const Matrix& x, Rng& rng) {
  NetForward fwd;
  fwd.tape.layers.reserve(net.layers.size());
  fwd.tape.outputs.reserve(net.layers.size());
  Matrix h = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    LrtOutput out = lrt_forward(net.layers[i], h, rng);
    fwd.tape.layers.push_back(std::move(out.tape));
    fwd.tape.outputs.push_back(out.y);
    if (i + 1 < net.layers.size())
      h = out.y.cwiseMax(0.0);
    else
      fwd.output = std::move(out.y);
  }
  return fwd;
}

NetGrads NetGrads::zeros_like(const VariationalNet& net) {
  NetGrads g;
  for (const auto& l : net.layers) {
    g.d_mu.push_back(Matrix::Zero(l.out_dim(), l.in_dim()));
    g.d_sigma.push_back(Matrix::Zero(l.out_dim(), l.in_dim()));
    g.d_bias.push_back(Vector::Zero(l.out_dim()));
  }
  return g;
}

NetGrads net_backward(const VariationalNet& net, const NetTape& tape, const Matrix& dL_dout) {
  if (tape.layers.size() != net.layers.size())
    throw Error(Errc::tape_mismatch, "tape depth does not match network depth");
  const std::size_t n = net.layers.size();
  NetGrads g;
  g.d_mu.resize(n);
  g.d_sigma.resize(n);
  g.d_bias.resize(n);
  Matrix upstream = dL_dout;
  for (std::size_t k = n; k-- > 0;) {
    LayerGrads lg = lrt_backward(net.layers[k], tape.layers[k], upstream);
    g.d_mu[k] = std::move(lg.d_mu);
    g.d_sigma[k] = std::move(lg.d_sigma);
    g.d_bias[k] = std::move(lg.d_bias);
    if (k > 0) upstream = (tape.outputs[k - 1].array() > 0.0).select(lg.d_x, 0.0);
  }
  return g;
}

Matrix softmax(const Matrix& logits) {
  Matrix p = logits.rowwise() - logits.colwise().maxCoeff();
  p = p.array().exp();
  const Eigen::RowVectorXd sums = p.colwise().sum();
  p.array().rowwise() /= sums.array();
  return p;
}

LossResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  const Eigen::Index batch = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != batch)
    throw Error(Errc::dimension_mismatch, "label count does not match batch size");
  LossResult r;
  r.d_output = softmax(logits);
  const Eigen::RowVectorXd col_max = logits.colwise().maxCoeff();
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= logits.rows())
      throw Error(Errc::dimension_mismatch, "label " + std::to_string(y) + " out of range");
    const double lse =
        col_max(b) + std::log((logits.col(b).array() - col_max(b)).exp().sum());
    total += lse - logits(y, b);
    r.d_output(y, b) -= 1.0;
  }
  r.loss = total / static_cast<double>(batch);
  r.d_output /= static_cast<double>(batch);
  return r;
}

LossResult gaussian_nll(const Matrix& output, const Eigen::RowVectorXd& targets, double noise) {
  if (output.rows() != 1 || output.cols() != targets.cols())
    throw Error(Errc::dimension_mismatch, "regression output must be [1 x B] matching targets");
  const double batch = static_cast<double>(output.cols());
  const Eigen::RowVectorXd resid = output.row(0) - targets;
  const double var = noise * noise;
  LossResult r;
  r.loss = resid.squaredNorm() / (2.0 * var) / batch + std::log(noise) +
           0.5 * std::log(2.0 * 3.14159265358979323846);
  r.d_output = resid / (var * batch);
  return r;
}

LossResult data_loss(Task task, const Matrix& output, const Batch& batch) {
  if (task == Task::Classification) return softmax_cross_entropy(output, batch.labels);
  return gaussian_nll(output, batch.values);
}

Matrix predict(const VariationalNet& net, const Matrix& x, int n_samples, Rng& rng) {
  if (n_samples < 1) throw Error(Errc::invalid_config, "n_samples must be at least 1");
  Matrix acc = Matrix::Zero(net.output_dim(), x.cols());
  for (int s = 0; s < n_samples; ++s) {
    const Matrix out = net_forward(net, x, rng).output;
    if (net.task == Task::Classification)
      acc += softmax(out);
    else
      acc += out;
  }
  return acc / static_cast<double>(n_samples);
}

std::vector<Matrix> dense_grad_probe(const VariationalNet& net, const Batch& batch,
                                     ProbeMode mode, Rng& rng) {
  const std::size_t n = net.layers.size();
  std::vector<Matrix> theta(n);
  for (std::size_t k = 0; k < n; ++k) {
    const BayesLinear& l = net.layers[k];
    theta[k] = l.effective_mu();
    if (mode == ProbeMode::SampledTheta)
      theta[k] += l.effective_sigma().cwiseProduct(standard_normal(l.out_dim(), l.in_dim(), rng));
  }

  // Deterministic forward with the drawn weights.
  std::vector<Matrix> inputs(n);
  std::vector<Matrix> pre(n);
  Matrix h = batch.x;
  for (std::size_t k = 0; k < n; ++k) {
    if (h.rows() != theta[k].cols())
      throw Error(Errc::dimension_mismatch, "probe batch does not match layer input width");
    inputs[k] = h;
    pre[k] = theta[k] * h;
    pre[k].colwise() += net.layers[k].bias;
    if (k + 1 < n) h = pre[k].cwiseMax(0.0);
  }

  const LossResult loss = data_loss(net.task, pre[n - 1], batch);
  std::vector<Matrix> grads(n);
  Matrix upstream = loss.d_output;
  for (std::size_t k = n; k-- > 0;) {
    grads[k] = (upstream * inputs[k].transpose()).cwiseAbs();
    if (k > 0) {
      Matrix dx = theta[k].transpose() * upstream;
      upstream = (pre[k - 1].array() > 0.0).select(dx, 0.0);
    }
  }
  return grads;
}

}  // namespace ssvi
