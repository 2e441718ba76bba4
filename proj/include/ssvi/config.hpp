#pragma once

// Training configuration and its textual form.
//
// Config files are flat key/value text. Keys are dotted ("ssvi.sparsity");
// a "[section]" line prefixes the keys that follow it, '#' starts a comment:
//
//   [ssvi]
//   sparsity = 0.9
//   criterion = snr_abs
//   train.inner_steps = 100   # dotted keys work anywhere
//
// Overrides given as "key=value" may use the bare last component of a key
// ("criterion=snr_abs") when it is unambiguous.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ssvi/gaussian_stats.hpp"
#include "ssvi/network.hpp"
#include "ssvi/subspace.hpp"

namespace ssvi {

enum class LrSchedule { Cosine, Constant };

struct TrainConfig {
  // data
  std::string dataset = "two_moons";  // two_moons | sine | idx | csv
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  double data_noise = 0.1;
  std::string idx_train_images, idx_train_labels, idx_test_images, idx_test_labels;
  std::string csv_train, csv_test, csv_label = "label";

  // model
  std::vector<int> hidden = {32, 32};

  // optimisation (Algorithm 1 outer/inner loop sizes)
  int outer_steps = 50;  // T
  int inner_steps = 100;  // M
  std::size_t batch_size = 128;
  double lr0 = 0.01;
  LrSchedule lr_schedule = LrSchedule::Cosine;
  std::uint64_t seed = 0;
  int eval_samples = 5;
  int ece_bins = 15;

  // variational objective
  double prior_sigma = 1.0;
  double beta_max = 1.0;
  double warmup_fraction = 0.3;
  double sigma_init_mean = 0.001;

  // subspace
  double sparsity = 0.5;
  std::string criterion = "snr_abs";
  double lambda = kDefaultLambda;
  AdditionEstimator addition = AdditionEstimator::OneStepSampled;
  int mc_steps = 1;
  double r0 = 0.3;
  RateDecay rate_decay = RateDecay::Cosine;
  ReinitStrategy reinit = ReinitStrategy::ModuleMean;
  double reinit_epsilon = 1e-3;
  Ranking ranking = Ranking::Global;
  bool track_criteria_iou = false;

  long total_steps() const { return static_cast<long>(outer_steps) * inner_steps; }
  CriterionKind criterion_kind() const { return CriterionKind::parse(criterion, lambda); }

  // Throws Error(invalid_config) naming the first offending key.
  void validate() const;
};

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text, const std::string& source = "<config>");
ConfigMap read_config_file(const std::string& path);

// Every recognised key, canonical dotted form.
const std::vector<std::string>& config_keys();
// Resolves a possibly-bare key to its canonical form or throws invalid_config.
std::string resolve_config_key(const std::string& key);

void apply_config(TrainConfig& cfg, const ConfigMap& values);
void apply_override(TrainConfig& cfg, const std::string& assignment);  // "key=value"
ConfigMap to_config_map(const TrainConfig& cfg);
std::string to_config_text(const TrainConfig& cfg);

std::string addition_name(AdditionEstimator e);
AdditionEstimator parse_addition(const std::string& name);

}  // namespace ssvi
