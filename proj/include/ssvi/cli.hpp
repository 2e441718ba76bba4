#pragma once

// Command-line driver: `ssvi train | eval | criteria-table | ablate`.
//
// Every command writes below one run directory, located under
// $SSVI_RUN_ROOT (or --run-root, default ./runs). A training run directory
// holds:
//   manifest.json     written once before training (config, seed, git describe, start time)
//   metrics.jsonl     one record per evaluation
//   mask_log.jsonl    one record per gamma-update
//   metrics.csv       the metrics records as CSV
//   checkpoint.bin    final parameters (format in checkpoint.hpp)
//   abort.bin         diagnostic checkpoint, only after a numerical abort
//   status.json       outcome, exit code, end time and final metrics
//
// Exit codes: 0 success, 2 invalid configuration or arguments, 3 missing or
// unreadable input data, 4 numerical abort, 1 anything else.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ssvi/config.hpp"
#include "ssvi/data.hpp"
#include "ssvi/error.hpp"
#include "ssvi/trainer.hpp"

namespace ssvi {

inline constexpr const char* kRunRootEnv = "SSVI_RUN_ROOT";

int exit_code_for(Errc code);
const char* exit_category(int exit_code);

// Builds train/test sets as the configuration describes. With `normalize`
// false the features are left raw (eval re-applies checkpointed statistics).
SplitDataset load_datasets(const TrainConfig& cfg, bool normalize = true);

struct RunPaths {
  std::filesystem::path dir, manifest, metrics, mask_log, metrics_csv, checkpoint, abort_checkpoint,
      status;
  static RunPaths under(const std::filesystem::path& dir);
};

struct RunOutcome {
  int exit_code = 0;
  std::string message;
  RunPaths paths;
  std::optional<TrainResult> result;
};

// Runs one training into `run_dir` (created if needed) and never throws for
// categorised failures; they are reported through the outcome and status.json.
RunOutcome run_training(const TrainConfig& cfg, const std::filesystem::path& run_dir,
                        std::ostream* progress = nullptr);

std::filesystem::path resolve_run_root(const std::optional<std::string>& flag);
// A fresh directory name under `root`; `name` is used verbatim when given.
std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& prefix,
                                    const std::optional<std::string>& name);

std::string criteria_table_csv(const std::vector<double>& mu_grid,
                               const std::vector<double>& sigma_grid, double lambda);

enum class AblationAxis { Sparsity, Criterion, SigmaInit, McSteps };
AblationAxis parse_axis(const std::string& name);
// Applies one sweep value to a base configuration.
void apply_axis_value(TrainConfig& cfg, AblationAxis axis, const std::string& value);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ssvi
