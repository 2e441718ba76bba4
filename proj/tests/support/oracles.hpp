#pragma once

// Reference computations for the test suites. Nothing here calls into the
// library: the sampler, the normal transform and the quadrature are local so
// that an error in the library cannot cancel against the same error here.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace oracle {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, caching the second variate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double a = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Running mean and central moments up to the fourth (Welford / Terriberry).
struct Moments {
  double n = 0.0, mean = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;

  void add(double x) {
    const double n1 = n;
    n += 1.0;
    const double delta = x - mean;
    const double dn = delta / n;
    const double dn2 = dn * dn;
    const double term1 = delta * dn * n1;
    mean += dn;
    m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2 - 4.0 * dn * m3;
    m3 += term1 * dn * (n - 2.0) - 3.0 * dn * m2;
    m2 += term1;
  }

  double variance() const { return m2 / (n - 1.0); }
  double sd() const { return std::sqrt(variance()); }
  double se_mean() const { return std::sqrt(variance() / n); }
  double se_variance() const {
    // Var(s^2) ~ (mu4 - sigma^4 (n-3)/(n-1)) / n.
    const double s2 = m2 / n;
    const double mu4 = m4 / n;
    return std::sqrt(std::max(0.0, (mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n));
  }
  // Mean over standard deviation and its delta-method standard error,
  // Var(r) ~ (1 - r g + r^2 (k - 1) / 4) / n with skewness g and kurtosis k.
  double snr() const { return mean / std::sqrt(m2 / n); }
  double se_snr() const {
    const double s2 = m2 / n;
    const double g = (m3 / n) / std::pow(s2, 1.5);
    const double k = (m4 / n) / (s2 * s2);
    const double r = snr();
    return std::sqrt(std::max(0.0, 1.0 - r * g + r * r * (k - 1.0) / 4.0) / n);
  }
};

struct Estimate {
  double value;
  double se;
};

// Plain Monte Carlo for E|theta| and SNR(|theta|).
struct AbsEstimates {
  Estimate e_abs;
  Estimate snr_abs;
};

inline AbsEstimates mc_abs(double mu, double sigma, std::size_t n, SplitMix64& rng) {
  Moments m;
  for (std::size_t i = 0; i < n; ++i) m.add(std::abs(mu + sigma * rng.normal()));
  return {{m.mean, m.se_mean()}, {m.snr(), m.se_snr()}};
}

// log of the mean of exp(values), numerically safe.
inline double log_mean_exp(const std::vector<double>& logs) {
  const double mx = *std::max_element(logs.begin(), logs.end());
  double s = 0.0;
  for (double v : logs) s += std::exp(v - mx);
  return mx + std::log(s / static_cast<double>(logs.size()));
}

// E exp(t |theta|) by importance sampling from the even mixture of
// N(mu + t sigma^2, sigma^2) and N(mu - t sigma^2, sigma^2). The weighted
// integrand exp(t|theta|) p/q = exp(t|theta| + t^2 sigma^2 / 2) / cosh(t (theta - mu))
// is bounded by 2 exp(t|mu| + t^2 sigma^2 / 2), so the estimator has finite
// variance for any (mu, sigma, t). Returned on the log scale together with
// the relative standard error.
struct LogEstimate {
  double log_value;
  double rel_se;
};

inline LogEstimate is_exp_abs(double mu, double sigma, double t, std::size_t n, SplitMix64& rng) {
  const double shift = t * sigma * sigma;
  const double base = t * std::abs(mu) + 0.5 * t * t * sigma * sigma + std::log(2.0);
  Moments scaled;  // f / exp(base), in (0, 1]
  for (std::size_t i = 0; i < n; ++i) {
    const double centre = rng.uniform() < 0.5 ? mu + shift : mu - shift;
    const double theta = centre + sigma * rng.normal();
    const double a = t * (theta - mu);
    const double log_cosh = std::abs(a) + std::log1p(std::exp(-2.0 * std::abs(a))) - std::log(2.0);
    const double log_f = t * std::abs(theta) + 0.5 * t * t * sigma * sigma - log_cosh;
    scaled.add(std::exp(log_f - base));
  }
  return {base + std::log(scaled.mean), scaled.se_mean() / scaled.mean};
}

// SNR(exp(lambda |theta|)) and E exp(lambda |theta|).
struct ExpEstimates {
  LogEstimate e_exp;  // log scale
  Estimate snr;
};

inline ExpEstimates mc_exp_abs(double mu, double sigma, double lambda, std::size_t n,
                               SplitMix64& rng) {
  ExpEstimates out;
  out.e_exp = is_exp_abs(mu, sigma, lambda, n, rng);
  if (lambda * sigma <= 1.0) {
    // Light tail: plain sampling of Y = exp(lambda (|theta| - |mu|)), whose
    // SNR equals that of exp(lambda |theta|).
    Moments m;
    for (std::size_t i = 0; i < n; ++i) {
      const double theta = mu + sigma * rng.normal();
      m.add(std::exp(lambda * (std::abs(theta) - std::abs(mu))));
    }
    out.snr = {m.snr(), m.se_snr()};
  } else {
    // Heavy tail: ratio of two independent importance-sampled moments.
    const LogEstimate m2 = is_exp_abs(mu, sigma, 2.0 * lambda, n, rng);
    const double r = std::exp(m2.log_value - 2.0 * out.e_exp.log_value);  // M2 / M1^2
    const double snr = 1.0 / std::sqrt(r - 1.0);
    const double rel_r = std::sqrt(m2.rel_se * m2.rel_se + 4.0 * out.e_exp.rel_se * out.e_exp.rel_se);
    out.snr = {snr, 0.5 * r * std::pow(r - 1.0, -1.5) * rel_r};
  }
  return out;
}

// Composite Simpson rule on [a, b] with an even number of panels.
template <class F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2) ++panels;
  const double h = (b - a) / panels;
  double s = f(a) + f(b);
  for (int i = 1; i < panels; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Phi(x) by quadrature of the density from 0.
inline double phi_quadrature(double x) {
  const auto pdf = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  return 0.5 + simpson(pdf, 0.0, x, 20000);
}

// |z| of an estimate against a reference value.
inline double z_score(double reference, const Estimate& e) {
  return std::abs(reference - e.value) / e.se;
}

}  // namespace oracle
