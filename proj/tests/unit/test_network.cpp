#include <cmath>

#include "doctest.h"
#include "ssvi/error.hpp"
#include "ssvi/network.hpp"
#include "support/fd.hpp"
#include "support/oracles.hpp"

using namespace ssvi;

namespace {

VariationalNet random_net(const std::vector<int>& widths, Task task, oracle::SplitMix64& g,
                          double mask_p = 0.8) {
  VariationalNet net = VariationalNet::with_widths(widths, task);
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.out_dim(); ++i) {
      l.bias(i) = g.uniform(-0.3, 0.3);
      for (Eigen::Index j = 0; j < l.in_dim(); ++j) {
        l.mu(i, j) = g.uniform(-1, 1);
        l.sigma(i, j) = g.uniform(0.05, 0.5);
        l.mask(i, j) = g.uniform() < mask_p ? 1 : 0;
      }
    }
  }
  net.apply_mask();
  return net;
}

Batch random_batch(const VariationalNet& net, int b, oracle::SplitMix64& g) {
  Batch batch;
  batch.x.resize(net.input_dim(), b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (Eigen::Index i = 0; i < net.input_dim(); ++i) batch.x(i, j) = g.uniform(-2, 2);
  if (net.task == Task::Classification) {
    for (int j = 0; j < b; ++j)
      batch.labels.push_back(static_cast<int>(g.next() % static_cast<std::uint64_t>(net.output_dim())));
  } else {
    batch.values.resize(b);
    for (int j = 0; j < b; ++j) batch.values(j) = g.uniform(-1, 1);
  }
  return batch;
}

// Deterministic MLP loss with explicit weights, written independently of
// the library's forward.
double plain_loss(const std::vector<Matrix>& w, const VariationalNet& net, const Batch& batch) {
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    Vector h = batch.x.col(b);
    for (std::size_t k = 0; k < w.size(); ++k) {
      Vector z = w[k] * h + net.layers[k].bias;
      if (k + 1 < w.size())
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = std::max(0.0, z(i));
      h = z;
    }
    if (net.task == Task::Classification) {
      const double mx = h.maxCoeff();
      double s = 0.0;
      for (Eigen::Index i = 0; i < h.size(); ++i) s += std::exp(h(i) - mx);
      total += mx + std::log(s) - h(batch.labels[static_cast<std::size_t>(b)]);
    } else {
      const double r = (h(0) - batch.values(b)) / kRegressionNoise;
      total += 0.5 * r * r + std::log(kRegressionNoise) + 0.5 * std::log(2 * std::numbers::pi);
    }
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("softmax columns sum to one and cross-entropy gradient matches differences") {
  oracle::SplitMix64 g(21);
  Matrix logits(4, 6);
  for (Eigen::Index j = 0; j < 6; ++j)
    for (Eigen::Index i = 0; i < 4; ++i) logits(i, j) = g.uniform(-30, 30);
  const Matrix p = softmax(logits);
  for (Eigen::Index j = 0; j < 6; ++j) CHECK(p.col(j).sum() == doctest::Approx(1.0).epsilon(1e-14));
  const std::vector<int> labels{0, 3, 1, 2, 2, 0};
  const LossResult res = softmax_cross_entropy(logits, labels);
  Matrix work = logits;
  for (Eigen::Index j = 0; j < 6; ++j)
    for (Eigen::Index i = 0; i < 4; ++i) {
      const double n = fd::central(work(i, j), [&] { return softmax_cross_entropy(work, labels).loss; });
      CHECK(fd::agrees(res.d_output(i, j), n, {}));
    }
}

TEST_CASE("gaussian nll and its gradient") {
  Matrix out(1, 2);
  out << 0.3, -0.1;
  Eigen::RowVectorXd t(2);
  t << 0.1, -0.1;
  const LossResult r = gaussian_nll(out, t, 0.1);
  const double c = std::log(0.1) + 0.5 * std::log(2 * std::numbers::pi);
  CHECK(r.loss == doctest::Approx(((0.5 * 4.0 + c) + c) / 2.0).epsilon(1e-13));
  CHECK(r.d_output(0, 0) == doctest::Approx(0.2 / 0.01 / 2.0).epsilon(1e-13));
  CHECK(r.d_output(0, 1) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("net_backward matches differences of the noise-frozen network loss") {
  oracle::SplitMix64 g(22);
  for (Task task : {Task::Classification, Task::Regression}) {
    for (int trial = 0; trial < 5; ++trial) {
      const std::vector<int> widths =
          task == Task::Classification ? std::vector<int>{3, 5, 4, 3} : std::vector<int>{2, 6, 1};
      VariationalNet net = random_net(widths, task, g);
      const Batch batch = random_batch(net, 4, g);
      const Rng frozen(static_cast<std::uint64_t>(trial) + 100);
      auto loss = [&] {
        Rng rng = frozen;
        return data_loss(task, net_forward(net, batch.x, rng).output, batch).loss;
      };
      Rng rng = frozen;
      const NetForward fwd = net_forward(net, batch.x, rng);
      const NetGrads grads =
          net_backward(net, fwd.tape, data_loss(task, fwd.output, batch).d_output);
      std::size_t failed = 0;
      for (std::size_t k = 0; k < net.layers.size(); ++k) {
        auto& l = net.layers[k];
        for (Eigen::Index i = 0; i < l.out_dim(); ++i) {
          for (Eigen::Index j = 0; j < l.in_dim(); ++j) {
            if (!l.mask(i, j)) continue;
            failed += !fd::agrees(grads.d_mu[k](i, j), fd::central(l.mu(i, j), loss), {});
            failed += !fd::agrees(grads.d_sigma[k](i, j), fd::central(l.sigma(i, j), loss), {});
          }
          failed += !fd::agrees(grads.d_bias[k](i), fd::central(l.bias(i), loss), {});
        }
      }
      CHECK(failed == 0);
    }
  }
}

TEST_CASE("predict is sample-count invariant when sigma is zero") {
  oracle::SplitMix64 g(23);
  VariationalNet net = random_net({2, 8, 3}, Task::Classification, g);
  for (auto& l : net.layers) l.sigma.setZero();
  const Batch batch = random_batch(net, 10, g);
  Rng a(1), b(2);
  const Matrix p1 = predict(net, batch.x, 1, a);
  const Matrix p7 = predict(net, batch.x, 7, b);
  CHECK((p1 - p7).cwiseAbs().maxCoeff() < 1e-14);
  for (Eigen::Index j = 0; j < p1.cols(); ++j) CHECK(p1.col(j).sum() == doctest::Approx(1.0));
}

TEST_CASE("five-sample predictions agree with a long-run average within MC error") {
  oracle::SplitMix64 g(24);
  VariationalNet net = random_net({2, 8, 2}, Task::Classification, g, 1.0);
  const Batch batch = random_batch(net, 20, g);
  Rng rng(3);
  const Matrix p5 = predict(net, batch.x, 5, rng);
  // Per-sample spread of p(class 0), from single-sample predictions.
  std::vector<oracle::Moments> single(20);
  for (int s = 0; s < 10000; ++s) {
    const Matrix p = predict(net, batch.x, 1, rng);
    for (int j = 0; j < 20; ++j) single[static_cast<std::size_t>(j)].add(p(0, j));
  }
  for (int j = 0; j < 20; ++j) {
    const auto& m = single[static_cast<std::size_t>(j)];
    const double se = std::sqrt(m.variance() / 5.0 + m.variance() / m.n);
    CAPTURE(j);
    CHECK(std::abs(p5(0, j) - m.mean) <= 4.0 * se + 1e-12);
  }
}

TEST_CASE("mean-theta probe equals the dense loss gradient magnitude, masked coordinates included") {
  oracle::SplitMix64 g(25);
  VariationalNet net = random_net({3, 6, 5, 3}, Task::Classification, g, 0.5);
  const Batch batch = random_batch(net, 5, g);
  Rng rng(4);
  const std::vector<Matrix> probe = dense_grad_probe(net, batch, ProbeMode::MeanTheta, rng);
  std::vector<Matrix> w;
  for (const auto& l : net.layers) w.push_back(l.effective_mu());
  std::size_t failed = 0, masked_nonzero = 0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    for (Eigen::Index i = 0; i < w[k].rows(); ++i)
      for (Eigen::Index j = 0; j < w[k].cols(); ++j) {
        const double n = std::abs(fd::central(w[k](i, j), [&] { return plain_loss(w, net, batch); }));
        failed += !fd::agrees(probe[k](i, j), n, {1e-5, 1e-8});
        masked_nonzero += !net.layers[k].mask(i, j) && probe[k](i, j) > 0.0;
      }
  }
  CHECK(failed == 0);
  CHECK(masked_nonzero > 0);
}

TEST_CASE("sampled-theta probe is deterministic given the seed") {
  oracle::SplitMix64 g(26);
  const VariationalNet net = random_net({2, 4, 2}, Task::Classification, g);
  const Batch batch = random_batch(net, 3, g);
  Rng a(8), b(8), c(9);
  const auto pa = dense_grad_probe(net, batch, ProbeMode::SampledTheta, a);
  const auto pb = dense_grad_probe(net, batch, ProbeMode::SampledTheta, b);
  const auto pc = dense_grad_probe(net, batch, ProbeMode::SampledTheta, c);
  CHECK(pa[0] == pb[0]);
  CHECK(pa[1] == pb[1]);
  CHECK(pa[0] != pc[0]);
}

TEST_CASE("counts, widths and the nonzero tally") {
  VariationalNet net = VariationalNet::with_widths({2, 3, 2}, Task::Classification);
  CHECK(net.weight_count() == 12);
  CHECK(net.active_count() == 12);
  CHECK(net.nonzero_count() == 0);
  CHECK(net.widths() == std::vector<int>{2, 3, 2});
  net.layers[0].mu(1, 1) = 0.5;
  net.layers[1].sigma(0, 2) = 0.1;
  CHECK(net.nonzero_count() == 2);
  net.layers[0].mask(1, 1) = 0;
  net.apply_mask();
  CHECK(net.active_count() == 11);
  CHECK(net.nonzero_count() == 1);
}

TEST_CASE("predict rejects a nonpositive sample count") {
  const VariationalNet net = VariationalNet::with_widths({2, 2}, Task::Classification);
  Rng rng(1);
  CHECK_THROWS_AS(predict(net, Matrix::Zero(2, 1), 0, rng), Error);
}
