#pragma once

// Closed-form importance statistics of a univariate Gaussian weight
// theta ~ N(mu, sigma^2). Everything here is a pure function of its
// arguments apart from the diagnostic clamp counter, which is atomic.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ssvi {

struct GaussParam {
  double mu = 0.0;
  double sigma = 0.0;
};

enum class CriterionTag {
  AbsMu,      // |mu|
  SnrTheta,   // |mu| / sigma
  ExpAbs,     // E|theta|
  SnrAbs,     // SNR(|theta|)
  ExpExpAbs,  // E exp(lambda |theta|)
  SnrExpAbs,  // SNR(exp(lambda |theta|))
};

inline constexpr double kDefaultLambda = 1.0;

// A removal criterion. lambda is meaningful only for the two exponential
// criteria and must then be strictly positive.
class CriterionKind {
 public:
  static CriterionKind abs_mu() { return CriterionKind(CriterionTag::AbsMu, 0.0); }
  static CriterionKind snr_theta() { return CriterionKind(CriterionTag::SnrTheta, 0.0); }
  static CriterionKind e_abs() { return CriterionKind(CriterionTag::ExpAbs, 0.0); }
  static CriterionKind snr_abs() { return CriterionKind(CriterionTag::SnrAbs, 0.0); }
  static CriterionKind e_exp_abs(double lambda = kDefaultLambda);
  static CriterionKind snr_exp_abs(double lambda = kDefaultLambda);

  // Accepts the snake_case names returned by name(). Throws invalid_config.
  static CriterionKind parse(std::string_view name, double lambda = kDefaultLambda);

  CriterionTag tag() const noexcept { return tag_; }
  std::optional<double> lambda() const noexcept;
  bool is_exponential() const noexcept {
    return tag_ == CriterionTag::ExpExpAbs || tag_ == CriterionTag::SnrExpAbs;
  }
  bool is_scale_invariant() const noexcept {
    return tag_ == CriterionTag::SnrTheta || tag_ == CriterionTag::SnrAbs;
  }
  std::string_view name() const noexcept;

  bool operator==(const CriterionKind&) const = default;

 private:
  CriterionKind(CriterionTag tag, double lambda) : tag_(tag), lambda_(lambda) {}

  CriterionTag tag_;
  double lambda_;
};

// All six criteria in declaration order, exponential ones at `lambda`.
inline constexpr int kNumCriteria = 6;
CriterionKind criterion_by_index(int index, double lambda = kDefaultLambda);

// Standard-normal CDF through erfc, accurate in both tails.
double std_normal_cdf(double x) noexcept;
// log Phi(x); finite down to x around -1e154 via the Mills-ratio asymptote.
double log_std_normal_cdf(double x) noexcept;

double crit_abs_mu(GaussParam p) noexcept;
double crit_snr_theta(GaussParam p);
double crit_e_abs(GaussParam p);
double crit_snr_abs(GaussParam p);
double crit_e_exp_abs(GaussParam p, double lambda);
double crit_snr_exp_abs(GaussParam p, double lambda);

// log E exp(lambda |theta|). Finite whenever the inputs are.
double log_e_exp_abs(GaussParam p, double lambda);

// KL(N(mu, sigma^2) || N(0, prior_sigma^2)).
double kl_gauss_to_prior(GaussParam p, double prior_sigma);

// Partial derivatives of kl_gauss_to_prior with respect to mu and sigma.
struct KlGrad {
  double d_mu;
  double d_sigma;
};
KlGrad kl_gauss_to_prior_grad(GaussParam p, double prior_sigma);

// Dispatches to the kernel for `kind`.
double criterion_value(const CriterionKind& kind, GaussParam p);

// Order-preserving score used for ranking. Identical to criterion_value
// except for ExpExpAbs, which is ranked by its logarithm so that large
// lambda*sigma or lambda*mu cannot overflow inside a training loop.
double criterion_score(const CriterionKind& kind, GaussParam p);

// Number of times an SNR radicand was clamped to 1e-30 by cancellation.
std::uint64_t radicand_clamp_count() noexcept;
void reset_radicand_clamp_count() noexcept;

}  // namespace ssvi
