#include "ssvi/bnn_layers.hpp"

#include <sstream>

#include "ssvi/error.hpp"

namespace ssvi {

namespace {

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << '[' << m.rows() << " x " << m.cols() << ']';
  return os.str();
}

void check_input(const BayesLinear& layer, const Matrix& x) {
  if (x.rows() != layer.in_dim()) {
    throw Error(Errc::dimension_mismatch, "layer expects " + std::to_string(layer.in_dim()) +
                                              " input features, got x " + shape(x));
  }
}

}  // namespace

BayesLinear::BayesLinear(Eigen::Index out_dim, Eigen::Index in_dim)
    : mu(Matrix::Zero(out_dim, in_dim)),
      sigma(Matrix::Zero(out_dim, in_dim)),
      bias(Vector::Zero(out_dim)),
      mask(MaskMatrix::Ones(out_dim, in_dim)) {}

Eigen::Index BayesLinear::active_count() const { return mask.cast<Eigen::Index>().sum(); }

void BayesLinear::apply_mask() {
  mu = effective_mu();
  sigma = effective_sigma();
}

Matrix BayesLinear::effective_mu() const { return (mask.array() != 0).select(mu, 0.0); }

Matrix BayesLinear::effective_sigma() const { return (mask.array() != 0).select(sigma, 0.0); }

LrtOutput lrt_forward(const BayesLinear& layer, const Matrix& x, Rng& rng) {
  check_input(layer, x);
  return lrt_forward(layer, x, standard_normal(layer.out_dim(), x.cols(), rng));
}

LrtOutput lrt_forward(const BayesLinear& layer, const Matrix& x, const Matrix& eps) {
  check_input(layer, x);
  if (eps.rows() != layer.out_dim() || eps.cols() != x.cols())
    throw Error(Errc::dimension_mismatch, "noise " + shape(eps) + " does not match output shape");

  const Matrix mu = layer.effective_mu();
  const Matrix sigma = layer.effective_sigma();

  LrtOutput out;
  out.tape.x = x;
  out.tape.eps = eps;
  out.tape.mean = mu * x;
  out.tape.std = (sigma.cwiseAbs2() * x.cwiseAbs2()).cwiseSqrt();
  out.y = out.tape.mean + out.tape.std.cwiseProduct(eps);
  out.y.colwise() += layer.bias;
  return out;
}

LayerGrads lrt_backward(const BayesLinear& layer, const ForwardTape& tape, const Matrix& dL_dy) {
  const Eigen::Index batch = tape.x.cols();
  if (tape.x.rows() != layer.in_dim() || tape.eps.rows() != layer.out_dim() ||
      tape.std.rows() != layer.out_dim() || tape.mean.rows() != layer.out_dim() ||
      tape.eps.cols() != batch || tape.std.cols() != batch || tape.mean.cols() != batch) {
    throw Error(Errc::tape_mismatch, "tape x " + shape(tape.x) + " / eps " + shape(tape.eps) +
                                         " was not produced by a layer of shape " +
                                         shape(layer.mu));
  }
  if (dL_dy.rows() != layer.out_dim() || dL_dy.cols() != batch)
    throw Error(Errc::tape_mismatch, "upstream gradient " + shape(dL_dy) + " vs tape " +
                                         shape(tape.eps));

  const Matrix mu = layer.effective_mu();
  const Matrix sigma = layer.effective_sigma();

  // d std / d var = 1 / (2 std); scaled[i,b] = (dL/dy . eps / std)[i,b], i.e.
  // twice dL/dvar, and defined as 0 where std vanishes.
  const Matrix scaled = (tape.std.array() > 0.0)
                            .select(dL_dy.cwiseProduct(tape.eps).cwiseQuotient(tape.std), 0.0);

  LayerGrads g;
  g.d_bias = dL_dy.rowwise().sum();
  g.d_mu = (layer.mask.array() != 0).select(dL_dy * tape.x.transpose(), 0.0);
  g.d_sigma = sigma.cwiseProduct(scaled * tape.x.cwiseAbs2().transpose());
  g.d_x = mu.transpose() * dL_dy + tape.x.cwiseProduct(sigma.cwiseAbs2().transpose() * scaled);
  return g;
}

NaiveOutput naive_forward_with_noise(const BayesLinear& layer, const Matrix& x, Rng& rng) {
  check_input(layer, x);
  const Matrix mu = layer.effective_mu();
  const Matrix sigma = layer.effective_sigma();
  NaiveOutput out;
  out.y.resize(layer.out_dim(), x.cols());
  out.eta.reserve(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index b = 0; b < x.cols(); ++b) {
    Matrix eta = standard_normal(layer.out_dim(), layer.in_dim(), rng);
    out.y.col(b) = (mu + sigma.cwiseProduct(eta)) * x.col(b) + layer.bias;
    out.eta.push_back(std::move(eta));
  }
  return out;
}

Matrix naive_forward(const BayesLinear& layer, const Matrix& x, Rng& rng) {
  return naive_forward_with_noise(layer, x, rng).y;
}

Matrix naive_sigma_grad(const BayesLinear& layer, const Matrix& x, const std::vector<Matrix>& eta,
                        const Matrix& dL_dy) {
  check_input(layer, x);
  if (static_cast<Eigen::Index>(eta.size()) != x.cols() || dL_dy.cols() != x.cols())
    throw Error(Errc::dimension_mismatch, "one weight draw per batch column is required");
  Matrix grad = Matrix::Zero(layer.out_dim(), layer.in_dim());
  for (Eigen::Index b = 0; b < x.cols(); ++b)
    grad += (dL_dy.col(b) * x.col(b).transpose()).cwiseProduct(eta[static_cast<std::size_t>(b)]);
  return (layer.mask.array() != 0).select(grad, 0.0);
}

}  // namespace ssvi
