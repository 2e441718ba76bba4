#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ssvi/error.hpp"
#include "ssvi/gaussian_stats.hpp"
#include "support/oracles.hpp"

using namespace ssvi;

namespace {

constexpr std::size_t kMc = 1'000'000;

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an ssvi::Error");
  return Errc::io_error;
}

}  // namespace

TEST_CASE("normal cdf: symmetry, limits and quadrature") {
  CHECK(std_normal_cdf(0.0) == 0.5);
  CHECK(std::abs(std_normal_cdf(40.0) - 1.0) <= 1e-12);
  for (double x = -8.0; x <= 8.0; x += 0.37)
    CHECK(std::abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0) <= 1e-12);
  for (double x : {-6.0, -2.5, -1.0, -0.1, 0.3, 1.0, 2.0, 4.5}) {
    CAPTURE(x);
    CHECK(std::abs(std_normal_cdf(x) - oracle::phi_quadrature(x)) <= 1e-10);
  }
  CHECK(std::abs(std_normal_cdf(1.0) - 0.8413447460685429) <= 1e-12);
  double prev = 0.0;
  for (double x = -10.0; x <= 10.0; x += 0.05) {
    const double v = std_normal_cdf(x);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("log normal cdf stays finite deep in the tail") {
  CHECK(std::abs(log_std_normal_cdf(-3.0) - std::log(std_normal_cdf(-3.0))) < 1e-12);
  CHECK(std::abs(log_std_normal_cdf(-30.0) - std::log(std_normal_cdf(-30.0))) < 1e-9);
  const double far = log_std_normal_cdf(-1e5);
  CHECK(std::isfinite(far));
  CHECK(far == doctest::Approx(-0.5e10 - std::log(1e5) - 0.5 * std::log(2 * std::numbers::pi)));
}

TEST_CASE("abs_mu and snr_theta examples") {
  CHECK(crit_abs_mu({-2, 5}) == 2.0);
  CHECK(crit_abs_mu({0, 1}) == 0.0);
  CHECK(crit_abs_mu({0.3, 0.01}) == 0.3);
  CHECK(crit_snr_theta({3, 1}) == 3.0);
  CHECK(crit_snr_theta({0, 2}) == 0.0);
  CHECK(crit_snr_theta({-1, 0.5}) == 2.0);
  CHECK(code_of([] { crit_snr_theta({1, 0}); }) == Errc::degenerate_sigma);
}

TEST_CASE("e_abs examples against the oracle") {
  CHECK(crit_e_abs({0, 1}) == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-14));
  CHECK(std::abs(crit_e_abs({5, 1e-8}) - 5.0) <= 1e-6);
  oracle::SplitMix64 rng(11);
  for (GaussParam p : {GaussParam{0, 1}, GaussParam{1, 1}, GaussParam{-0.4, 2.5}}) {
    const auto est = oracle::mc_abs(p.mu, p.sigma, kMc, rng);
    CAPTURE(p.mu);
    CHECK(oracle::z_score(crit_e_abs(p), est.e_abs) <= 3.0);
  }
  CHECK(code_of([] { crit_e_abs({1, 0}); }) == Errc::degenerate_sigma);
}

TEST_CASE("snr_abs examples against the oracle") {
  // sqrt(2/pi) / sqrt(1 - 2/pi)
  const double c = 2.0 / std::numbers::pi;
  CHECK(crit_snr_abs({0, 1}) == doctest::Approx(std::sqrt(c) / std::sqrt(1.0 - c)).epsilon(1e-13));
  CHECK(crit_snr_abs({0, 1}) == doctest::Approx(1.323608).epsilon(1e-6));
  CHECK(std::abs(crit_snr_abs({3, 0.1}) - 30.0) < 0.5);
  oracle::SplitMix64 rng(12);
  for (GaussParam p : {GaussParam{0, 1}, GaussParam{3, 0.1}, GaussParam{0.7, 1.3}}) {
    const auto est = oracle::mc_abs(p.mu, p.sigma, kMc, rng);
    CAPTURE(p.mu);
    CHECK(oracle::z_score(crit_snr_abs(p), est.snr_abs) <= 3.0);
  }
}

TEST_CASE("e_exp_abs examples against the oracle") {
  CHECK(crit_e_exp_abs({0, 1}, 1) ==
        doctest::Approx(2.0 * std_normal_cdf(1.0) * std::exp(0.5)).epsilon(1e-13));
  CHECK(crit_e_exp_abs({0, 1}, 1) == doctest::Approx(2.774286).epsilon(1e-6));
  CHECK(std::abs(crit_e_exp_abs({0, 1e-8}, 1) - 1.0) <= 1e-6);
  oracle::SplitMix64 rng(13);
  for (auto [p, lambda] : {std::pair{GaussParam{0, 1}, 1.0}, std::pair{GaussParam{1, 0.5}, 2.0},
                           std::pair{GaussParam{-2, 3}, 0.5}}) {
    const auto est = oracle::is_exp_abs(p.mu, p.sigma, lambda, kMc, rng);
    CAPTURE(p.mu);
    CHECK(std::abs(log_e_exp_abs(p, lambda) - est.log_value) / est.rel_se <= 3.0);
  }
}

TEST_CASE("snr_exp_abs examples against the oracle") {
  oracle::SplitMix64 rng(14);
  for (auto [p, lambda] : {std::pair{GaussParam{0, 1}, 1.0}, std::pair{GaussParam{0.5, 0.2}, 1.0},
                           std::pair{GaussParam{1, 2}, 2.0}}) {
    const auto est = oracle::mc_exp_abs(p.mu, p.sigma, lambda, kMc, rng);
    CAPTURE(p.mu);
    CHECK(oracle::z_score(crit_snr_exp_abs(p, lambda), est.snr) <= 3.0);
  }
}

TEST_CASE("kl examples and the Monte-Carlo KL") {
  CHECK(std::abs(kl_gauss_to_prior({0, 0.7}, 0.7)) < 1e-15);
  CHECK(kl_gauss_to_prior({1, 1}, 1) == doctest::Approx(0.5).epsilon(1e-15));
  oracle::SplitMix64 rng(15);
  const double mu = 0.5, sigma = 0.1;
  oracle::Moments m;
  for (std::size_t i = 0; i < kMc; ++i) {
    const double eps = rng.normal();
    const double theta = mu + sigma * eps;
    // log q - log p with the normalising constants cancelled.
    m.add(-std::log(sigma) - 0.5 * eps * eps + 0.5 * theta * theta);
  }
  CHECK(oracle::z_score(kl_gauss_to_prior({mu, sigma}, 1.0), {m.mean, m.se_mean()}) <= 3.0);
  CHECK(code_of([] { kl_gauss_to_prior({0, 0}, 1); }) == Errc::degenerate_sigma);
}

TEST_CASE("kl gradient matches finite differences and kl is nonnegative") {
  oracle::SplitMix64 rng(16);
  for (int i = 0; i < 200; ++i) {
    const GaussParam p{rng.uniform(-3, 3), rng.uniform(0.01, 3)};
    const double prior = rng.uniform(0.1, 2);
    CHECK(kl_gauss_to_prior(p, prior) >= -1e-15);
    const KlGrad g = kl_gauss_to_prior_grad(p, prior);
    const double h = 1e-6;
    const double fd_mu = (kl_gauss_to_prior({p.mu + h, p.sigma}, prior) -
                          kl_gauss_to_prior({p.mu - h, p.sigma}, prior)) / (2 * h);
    const double fd_sigma = (kl_gauss_to_prior({p.mu, p.sigma + h}, prior) -
                             kl_gauss_to_prior({p.mu, p.sigma - h}, prior)) / (2 * h);
    CHECK(g.d_mu == doctest::Approx(fd_mu).epsilon(1e-6));
    CHECK(g.d_sigma == doctest::Approx(fd_sigma).epsilon(1e-6).scale(1.0));
  }
}

TEST_CASE("every criterion is even in mu") {
  oracle::SplitMix64 rng(17);
  for (int i = 0; i < 300; ++i) {
    const double mu = rng.uniform(-10, 10), sigma = rng.uniform(1e-3, 10);
    for (int k = 0; k < kNumCriteria; ++k) {
      const CriterionKind kind = criterion_by_index(k, 0.5);
      CHECK(criterion_score(kind, {mu, sigma}) == criterion_score(kind, {-mu, sigma}));
    }
  }
}

TEST_CASE("Jensen lower bounds") {
  oracle::SplitMix64 rng(18);
  for (int i = 0; i < 300; ++i) {
    const GaussParam p{rng.uniform(-10, 10), rng.uniform(1e-3, 10)};
    const double lambda = rng.uniform(0.1, 2);
    CHECK(crit_e_abs(p) >= std::abs(p.mu) * (1 - 1e-15));
    CHECK(log_e_exp_abs(p, lambda) >= lambda * crit_e_abs(p) * (1 - 1e-12));
  }
}

TEST_CASE("snr criteria are scale invariant") {
  oracle::SplitMix64 rng(19);
  for (int i = 0; i < 300; ++i) {
    const GaussParam p{rng.uniform(-5, 5), rng.uniform(1e-2, 5)};
    const double c = std::exp(rng.uniform(-4, 4));
    const GaussParam q{c * p.mu, c * p.sigma};
    CHECK(crit_snr_abs(q) == doctest::Approx(crit_snr_abs(p)).epsilon(1e-10));
    CHECK(crit_snr_theta(q) == doctest::Approx(crit_snr_theta(p)).epsilon(1e-10));
  }
}

TEST_CASE("criteria are nondecreasing in |mu| except snr_exp_abs") {
  for (double sigma : {1e-3, 0.1, 1.0, 4.0}) {
    for (int k = 0; k < 5; ++k) {
      const CriterionKind kind = criterion_by_index(k, 1.0);
      double prev = -1e300;
      for (double mu = 0.0; mu <= 10.0; mu += 0.01) {
        const double v = criterion_score(kind, {mu, sigma});
        CAPTURE(kind.name());
        CAPTURE(mu);
        CHECK(v >= prev - 1e-12 * std::abs(prev));
        prev = v;
      }
    }
  }
}

TEST_CASE("snr_exp_abs decreases in |mu| when lambda sigma is large") {
  const CriterionKind kind = CriterionKind::snr_exp_abs(1.0);
  const double at0 = criterion_value(kind, {0, 1});
  const double far = criterion_value(kind, {20, 1});
  CHECK(at0 > far);
  CHECK(far == doctest::Approx(1.0 / std::sqrt(std::exp(1.0) - 1.0)).epsilon(1e-9));
}

TEST_CASE("exponential criterion overflow is reported; its score stays finite") {
  const GaussParam p{800, 1};
  CHECK(code_of([&] { crit_e_exp_abs(p, 1.0); }) == Errc::overflow);
  CHECK(criterion_score(CriterionKind::e_exp_abs(1.0), p) == doctest::Approx(800.5));
  CHECK(std::isfinite(crit_snr_exp_abs(p, 1.0)));
}

TEST_CASE("criterion names parse back and lambda is validated") {
  for (int k = 0; k < kNumCriteria; ++k) {
    const CriterionKind kind = criterion_by_index(k, 2.0);
    CHECK(CriterionKind::parse(kind.name(), 2.0) == kind);
  }
  CHECK(code_of([] { CriterionKind::parse("magnitude"); }) == Errc::invalid_config);
  CHECK(code_of([] { CriterionKind::e_exp_abs(0.0); }) == Errc::invalid_config);
  CHECK_FALSE(CriterionKind::abs_mu().lambda().has_value());
}

TEST_CASE("snr_abs stays finite at an extreme mu/sigma ratio") {
  const double v = crit_snr_abs({1e6, 1e-6});
  CHECK(std::isfinite(v));
  CHECK(v > 1e10);
}
