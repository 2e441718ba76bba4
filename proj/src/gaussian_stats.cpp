#include "ssvi/gaussian_stats.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ssvi/error.hpp"

namespace ssvi {

namespace {

constexpr double kRadicandFloor = 1e-30;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kSqrt2OverPi = 0.79788456080286535588;  // sqrt(2/pi)
constexpr double kHalfLog2Pi = 0.91893853320467274178;   // log(2 pi) / 2

std::atomic<std::uint64_t> g_clamp_count{0};

void require_sigma(GaussParam p, const char* who) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.sigma)) {
    std::ostringstream os;
    os << who << " requires sigma > 0, got " << p.sigma;
    throw Error(Errc::degenerate_sigma, os.str());
  }
}

double clamp_radicand(double r) noexcept {
  if (r > kRadicandFloor) return r;
  g_clamp_count.fetch_add(1, std::memory_order_relaxed);
  return kRadicandFloor;
}

double log_add_exp(double a, double b) noexcept {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::degenerate_sigma: return "degenerate-sigma";
    case Errc::nonpositive_variance: return "nonpositive-variance";
    case Errc::overflow: return "overflow";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::tape_mismatch: return "tape-mismatch";
    case Errc::budget_out_of_range: return "budget-out-of-range";
    case Errc::insufficient_candidates: return "insufficient-candidates";
    case Errc::empty_module: return "empty-module";
    case Errc::non_finite_loss: return "non-finite-loss";
    case Errc::invalid_config: return "config-invalid";
    case Errc::bad_magic: return "bad-magic";
    case Errc::truncated_file: return "truncated-file";
    case Errc::parse_error: return "parse-error";
    case Errc::schema_error: return "schema-error";
    case Errc::io_error: return "io-error";
    case Errc::checkpoint_corrupt: return "checkpoint-corrupt";
    case Errc::empty_input: return "empty-input";
    case Errc::grid_invalid: return "grid-invalid";
  }
  return "unknown";
}

CriterionKind CriterionKind::e_exp_abs(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(Errc::invalid_config, "lambda must be a positive finite number");
  return CriterionKind(CriterionTag::ExpExpAbs, lambda);
}

CriterionKind CriterionKind::snr_exp_abs(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw Error(Errc::invalid_config, "lambda must be a positive finite number");
  return CriterionKind(CriterionTag::SnrExpAbs, lambda);
}

CriterionKind CriterionKind::parse(std::string_view name, double lambda) {
  for (int i = 0; i < kNumCriteria; ++i) {
    CriterionKind k = criterion_by_index(i, lambda);
    if (k.name() == name) return k;
  }
  throw Error(Errc::invalid_config, "unknown criterion '" + std::string(name) +
                                        "' (expected abs_mu, snr_theta, e_abs, snr_abs, "
                                        "e_exp_abs or snr_exp_abs)");
}

std::optional<double> CriterionKind::lambda() const noexcept {
  if (is_exponential()) return lambda_;
  return std::nullopt;
}

std::string_view CriterionKind::name() const noexcept {
  switch (tag_) {
    case CriterionTag::AbsMu: return "abs_mu";
    case CriterionTag::SnrTheta: return "snr_theta";
    case CriterionTag::ExpAbs: return "e_abs";
    case CriterionTag::SnrAbs: return "snr_abs";
    case CriterionTag::ExpExpAbs: return "e_exp_abs";
    case CriterionTag::SnrExpAbs: return "snr_exp_abs";
  }
  return "unknown";
}

CriterionKind criterion_by_index(int index, double lambda) {
  switch (index) {
    case 0: return CriterionKind::abs_mu();
    case 1: return CriterionKind::snr_theta();
    case 2: return CriterionKind::e_abs();
    case 3: return CriterionKind::snr_abs();
    case 4: return CriterionKind::e_exp_abs(lambda);
    case 5: return CriterionKind::snr_exp_abs(lambda);
    default: throw Error(Errc::invalid_config, "criterion index out of range");
  }
}

double std_normal_cdf(double x) noexcept { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_std_normal_cdf(double x) noexcept {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  if (x > -37.0) return std::log(std_normal_cdf(x));
  // Mills-ratio expansion, accurate far beyond the point where erfc underflows.
  const double t = -x;
  const double u = 1.0 / (t * t);
  const double series =
      1.0 - u * (1.0 - 3.0 * u * (1.0 - 5.0 * u * (1.0 - 7.0 * u * (1.0 - 9.0 * u))));
  return -0.5 * t * t - std::log(t) - kHalfLog2Pi + std::log(series);
}

double crit_abs_mu(GaussParam p) noexcept { return std::abs(p.mu); }

double crit_snr_theta(GaussParam p) {
  require_sigma(p, "crit_snr_theta");
  return std::abs(p.mu) / p.sigma;
}

double crit_e_abs(GaussParam p) {
  require_sigma(p, "crit_e_abs");
  const double z = p.mu / p.sigma;
  // mu (2 Phi(z) - 1) + 2 sigma / sqrt(2 pi) exp(-mu^2 / (2 sigma^2)),
  // with 2 Phi(z) - 1 written as erf(z / sqrt 2).
  return p.mu * std::erf(z * kInvSqrt2) + p.sigma * kSqrt2OverPi * std::exp(-0.5 * z * z);
}

double crit_snr_abs(GaussParam p) {
  require_sigma(p, "crit_snr_abs");
  const double m = std::abs(p.mu);
  const double z = m / p.sigma;
  const double tail = p.sigma * kSqrt2OverPi * std::exp(-0.5 * z * z);
  const double mean = m * std::erf(z * kInvSqrt2) + tail;
  // sigma^2 + mu^2 - E|theta|^2 with mu^2 - E^2 factored as (|mu| - E)(|mu| + E),
  // where |mu| - E = |mu| erfc(z / sqrt 2) - tail has no catastrophic cancellation.
  const double gap = m * std::erfc(z * kInvSqrt2) - tail;
  const double var = p.sigma * p.sigma + gap * (m + mean);
  return mean / std::sqrt(clamp_radicand(var));
}

double log_e_exp_abs(GaussParam p, double lambda) {
  require_sigma(p, "log_e_exp_abs");
  if (!(lambda > 0.0)) throw Error(Errc::invalid_config, "lambda must be positive");
  const double z = p.mu / p.sigma;
  const double ls = lambda * p.sigma;
  const double base = 0.5 * ls * ls;
  const double a = log_std_normal_cdf(z + ls) + lambda * p.mu;
  const double b = log_std_normal_cdf(-z + ls) - lambda * p.mu;
  const double out = base + log_add_exp(a, b);
  if (!std::isfinite(out)) {
    std::ostringstream os;
    os << "log E exp(lambda|theta|) not representable at mu=" << p.mu << " sigma=" << p.sigma
       << " lambda=" << lambda;
    throw Error(Errc::overflow, os.str());
  }
  return out;
}

double crit_e_exp_abs(GaussParam p, double lambda) {
  const double log_value = log_e_exp_abs(p, lambda);
  if (log_value > std::log(std::numeric_limits<double>::max())) {
    std::ostringstream os;
    os << "E exp(lambda|theta|) = exp(" << log_value << ") overflows double";
    throw Error(Errc::overflow, os.str());
  }
  return std::exp(log_value);
}

double crit_snr_exp_abs(GaussParam p, double lambda) {
  const double log_m1 = log_e_exp_abs(p, lambda);
  const double log_m2 = log_e_exp_abs(p, 2.0 * lambda);
  // M1 / sqrt(M2 - M1^2) = 1 / sqrt(M2 / M1^2 - 1).
  const double ratio_minus_one = std::expm1(log_m2 - 2.0 * log_m1);
  return 1.0 / std::sqrt(clamp_radicand(ratio_minus_one));
}

double kl_gauss_to_prior(GaussParam p, double prior_sigma) {
  require_sigma(p, "kl_gauss_to_prior");
  if (!(prior_sigma > 0.0)) throw Error(Errc::invalid_config, "prior_sigma must be positive");
  const double v = p.sigma * p.sigma + p.mu * p.mu;
  return std::log(prior_sigma / p.sigma) + v / (2.0 * prior_sigma * prior_sigma) - 0.5;
}

KlGrad kl_gauss_to_prior_grad(GaussParam p, double prior_sigma) {
  require_sigma(p, "kl_gauss_to_prior_grad");
  const double inv_var = 1.0 / (prior_sigma * prior_sigma);
  return {p.mu * inv_var, p.sigma * inv_var - 1.0 / p.sigma};
}

double criterion_value(const CriterionKind& kind, GaussParam p) {
  switch (kind.tag()) {
    case CriterionTag::AbsMu: return crit_abs_mu(p);
    case CriterionTag::SnrTheta: return crit_snr_theta(p);
    case CriterionTag::ExpAbs: return crit_e_abs(p);
    case CriterionTag::SnrAbs: return crit_snr_abs(p);
    case CriterionTag::ExpExpAbs: return crit_e_exp_abs(p, *kind.lambda());
    case CriterionTag::SnrExpAbs: return crit_snr_exp_abs(p, *kind.lambda());
  }
  return 0.0;
}

double criterion_score(const CriterionKind& kind, GaussParam p) {
  if (kind.tag() == CriterionTag::ExpExpAbs) return log_e_exp_abs(p, *kind.lambda());
  return criterion_value(kind, p);
}

std::uint64_t radicand_clamp_count() noexcept {
  return g_clamp_count.load(std::memory_order_relaxed);
}

void reset_radicand_clamp_count() noexcept { g_clamp_count.store(0, std::memory_order_relaxed); }

}  // namespace ssvi
