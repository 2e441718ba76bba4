#pragma once

// Alternating optimisation of the variational parameters phi = (mu, sigma,
// bias) and the subspace selector gamma.
//
// One outer iteration t runs M minibatch SGD steps on the masked ELBO, then
// (except on the last iteration) swaps K_t = round(r_t s) coordinates:
// removal by a (mu, sigma) criterion, addition by a dense gradient probe,
// sigma re-initialisation of the newcomers. The test set is evaluated after
// every outer iteration.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ssvi/config.hpp"
#include "ssvi/data.hpp"
#include "ssvi/network.hpp"
#include "ssvi/subspace.hpp"

namespace ssvi {

// Independent random streams derived from TrainConfig::seed.
enum class Stream : std::uint64_t { Init = 1, Mask = 2, Shuffle = 3, Noise = 4, Probe = 5, Eval = 6,
                                   ProbeBatch = 7 };

Rng stream_rng(std::uint64_t seed, Stream stream);

struct ElboBreakdown {
  double nll = 0.0;        // batch-mean negative log-likelihood
  double kl = 0.0;         // KL over unmasked coordinates, unscaled
  double kl_scaled = 0.0;  // kl * kl_scale
  double beta = 0.0;
  double total = 0.0;      // nll + beta * kl_scaled
};

struct ElboResult {
  ElboBreakdown elbo;
  NetGrads grads;
};

// One-sample LRT estimate of the minibatch objective and its gradient.
// `kl_scale` converts the full-data KL to the per-example scale of the mean
// NLL; the trainer uses 1 / n_train. Throws non_finite_loss.
ElboResult elbo_step(const VariationalNet& net, const Batch& batch, double beta,
                     double prior_sigma, double kl_scale, Rng& rng);

// KL of every unmasked coordinate to N(0, prior_sigma^2), summed.
double net_kl(const VariationalNet& net, double prior_sigma);

double kl_warmup(long step, long total, double beta_max, double warmup_fraction);
double learning_rate(long step, long total, double lr0, LrSchedule schedule);

// theta -= lr * g for mu, sigma and bias; unmasked sigma is floored at
// kSigmaFloor and the mask is re-applied.
void sgd_update(VariationalNet& net, const NetGrads& grads, double lr);

// mu and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); sigma ~ N(m, (m/10)^2)
// redrawn until positive. Drawn densely, then `mask` is installed.
void init_network(VariationalNet& net, const Mask& mask, double sigma_mean, Rng& rng);

// Walks through reshuffled epochs, dropping each epoch's ragged tail.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, std::size_t batch_size, Rng rng);
  Batch next();
  const Rng& rng() const { return rng_; }

 private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct EvalResult {
  double nll = 0.0;
  std::optional<double> accuracy;  // classification
  std::optional<double> ece;       // classification
  std::optional<double> rmse;      // regression
};

EvalResult evaluate(const VariationalNet& net, const Dataset& data, int n_samples, int ece_bins,
                    Rng& rng);

struct MetricsRecord {
  long step = 0;
  int outer = 0;
  double beta = 0.0;
  double lr = 0.0;
  double r_t = 0.0;
  double train_nll = 0.0;  // mean over the preceding inner steps
  double nll = 0.0;        // test
  double kl = 0.0;
  std::optional<double> accuracy;
  std::optional<double> ece;
  std::optional<double> rmse;
  double sparsity = 0.0;
  double flops_est = 0.0;  // cumulative training FLOPs so far
  std::size_t nonzero = 0;
  std::size_t active = 0;
  std::string phase;  // "gamma_update" or "final"
};

struct MaskEvent {
  long step = 0;
  int outer = 0;
  std::size_t removed_count = 0;
  std::size_t added_count = 0;
  std::string criterion;
  double overlap_with_previous = 1.0;  // IoU of the masks before and after
  std::size_t nonzero_after = 0;
  std::size_t reinit_fallbacks = 0;
  // Removed-set IoU for every criterion pair, row-major over
  // criterion_by_index; filled when track_criteria_iou is set.
  std::vector<double> criteria_iou;
};

struct TrainState {
  const VariationalNet* net = nullptr;
  long step = 0;
  const Rng* noise_rng = nullptr;
};

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_metrics;
  std::function<void(const MaskEvent&)> on_mask_event;
  // Called with the offending state before a numerical abort propagates.
  std::function<void(const TrainState&, const std::string&)> on_abort;
};

struct TrainResult {
  VariationalNet net;
  std::vector<MetricsRecord> records;
  std::vector<MaskEvent> mask_events;
  std::size_t budget = 0;
  std::size_t dimension = 0;
  double flops_ratio = 1.0;
  long steps = 0;
  std::string noise_rng_state;
};

std::vector<int> network_widths(const TrainConfig& cfg, const Dataset& train);

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  const TrainHooks& hooks = {});

std::string to_json(const MetricsRecord& r);
std::string to_json(const MaskEvent& e);
std::string metrics_csv_header();
std::string to_csv_row(const MetricsRecord& r);

}  // namespace ssvi
