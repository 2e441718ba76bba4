#include "ssvi/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ssvi/checkpoint.hpp"
#include "ssvi/metrics.hpp"

#ifndef SSVI_GIT_DESCRIBE
#define SSVI_GIT_DESCRIBE "unknown"
#endif

namespace ssvi {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::invalid_config:
    case Errc::grid_invalid:
    case Errc::budget_out_of_range:
      return 2;
    case Errc::io_error:
    case Errc::bad_magic:
    case Errc::truncated_file:
    case Errc::parse_error:
    case Errc::schema_error:
    case Errc::empty_input:
    case Errc::checkpoint_corrupt:
      return 3;
    case Errc::non_finite_loss:
    case Errc::overflow:
    case Errc::nonpositive_variance:
    case Errc::degenerate_sigma:
      return 4;
    default:
      return 1;
  }
}

const char* exit_category(int exit_code) {
  switch (exit_code) {
    case 0: return "ok";
    case 2: return "config-invalid";
    case 3: return "data-missing";
    case 4: return "numerical-abort";
    default: return "internal-error";
  }
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string compact_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%d-%H%M%S");
  return os.str();
}

void write_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(Errc::io_error, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
  return out;
}

int classify(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return exit_code_for(err->code());
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return 3;
  return 1;
}

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return out;
}

Dataset load_csv_dataset(const std::string& path, const TrainConfig& cfg) {
  CsvSchema schema;
  schema.label_column = cfg.csv_label;
  schema.task = Task::Classification;
  return load_csv(path, schema);
}

}  // namespace

SplitDataset load_datasets(const TrainConfig& cfg, bool normalize) {
  if (cfg.dataset == "two_moons")
    return split_and_normalize(gen_two_moons(cfg.n_train + cfg.n_test, cfg.data_noise, cfg.seed),
                               cfg.n_test, cfg.seed, normalize);
  if (cfg.dataset == "sine")
    return split_and_normalize(gen_sine(cfg.n_train + cfg.n_test, cfg.data_noise, cfg.seed),
                               cfg.n_test, cfg.seed, normalize);

  Dataset train, test;
  bool have_test = false;
  if (cfg.dataset == "idx") {
    train = load_idx(cfg.idx_train_images, cfg.idx_train_labels, cfg.n_train);
    if (!cfg.idx_test_images.empty() && !cfg.idx_test_labels.empty()) {
      test = load_idx(cfg.idx_test_images, cfg.idx_test_labels, cfg.n_test);
      have_test = true;
    }
  } else if (cfg.dataset == "csv") {
    train = load_csv_dataset(cfg.csv_train, cfg);
    if (!cfg.csv_test.empty()) {
      test = load_csv_dataset(cfg.csv_test, cfg);
      have_test = true;
    }
  } else {
    throw Error(Errc::invalid_config, "data.dataset: unknown dataset '" + cfg.dataset + "'");
  }

  if (!have_test) {
    if (cfg.n_test >= train.size())
      throw Error(Errc::invalid_config, "data.n_test: no rows left for training");
    return split_and_normalize(train, cfg.n_test, cfg.seed, normalize);
  }
  if (test.input_dim() != train.input_dim())
    throw Error(Errc::dimension_mismatch, "train and test files have different feature counts");
  const int classes = std::max(train.num_classes, test.num_classes);
  train.num_classes = test.num_classes = classes;
  SplitDataset out;
  out.norm = normalize ? fit_normalization(train)
                       : NormStats{Vector::Zero(train.input_dim()), Vector::Ones(train.input_dim())};
  apply_normalization(train, out.norm);
  apply_normalization(test, out.norm);
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

RunPaths RunPaths::under(const fs::path& dir) {
  RunPaths p;
  p.dir = dir;
  p.manifest = dir / "manifest.json";
  p.metrics = dir / "metrics.jsonl";
  p.mask_log = dir / "mask_log.jsonl";
  p.metrics_csv = dir / "metrics.csv";
  p.checkpoint = dir / "checkpoint.bin";
  p.abort_checkpoint = dir / "abort.bin";
  p.status = dir / "status.json";
  return p;
}

fs::path resolve_run_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv(kRunRootEnv); env && *env) return env;
  return "runs";
}

fs::path fresh_run_dir(const fs::path& root, const std::string& prefix,
                       const std::optional<std::string>& name) {
  if (name && !name->empty()) return root / *name;
  const fs::path base = root / (prefix + "-" + compact_now());
  fs::path dir = base;
  for (int i = 1; fs::exists(dir); ++i) dir = fs::path(base.string() + "-" + std::to_string(i));
  return dir;
}

RunOutcome run_training(const TrainConfig& cfg, const fs::path& run_dir, std::ostream* progress) {
  RunOutcome outcome;
  outcome.paths = RunPaths::under(run_dir);
  const RunPaths& paths = outcome.paths;
  json status;

  auto finish = [&](int code, const std::string& message) {
    outcome.exit_code = code;
    outcome.message = message;
    status["status"] = exit_category(code);
    status["exit_code"] = code;
    if (!message.empty()) status["message"] = message;
    status["finished_at"] = utc_now();
    try {
      write_atomic(paths.status, status.dump(2) + "\n");
    } catch (const std::exception&) {
    }
    return outcome;
  };

  try {
    fs::create_directories(run_dir);
  } catch (const std::exception& e) {
    outcome.exit_code = 3;
    outcome.message = e.what();
    return outcome;
  }

  try {
    cfg.validate();
  } catch (const std::exception& e) {
    return finish(classify(e), e.what());
  }

  json manifest;
  manifest["config"] = to_config_map(cfg);
  manifest["git_describe"] = SSVI_GIT_DESCRIBE;
  manifest["seed"] = cfg.seed;
  manifest["started_at"] = utc_now();
  manifest["outputs"] = {{"metrics", paths.metrics.filename().string()},
                         {"mask_log", paths.mask_log.filename().string()},
                         {"metrics_csv", paths.metrics_csv.filename().string()},
                         {"checkpoint", paths.checkpoint.filename().string()},
                         {"status", paths.status.filename().string()}};
  try {
    write_atomic(paths.manifest, manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    return finish(3, e.what());
  }

  SplitDataset data;
  try {
    data = load_datasets(cfg);
  } catch (const std::exception& e) {
    const int code = classify(e);
    return finish(code == 1 ? 3 : code, e.what());
  }

  try {
    std::ofstream metrics = open_out(paths.metrics);
    std::ofstream mask_log = open_out(paths.mask_log);
    std::ofstream csv = open_out(paths.metrics_csv);
    csv << metrics_csv_header() << '\n';

    TrainHooks hooks;
    hooks.on_metrics = [&](const MetricsRecord& r) {
      metrics << to_json(r) << '\n';
      metrics.flush();
      csv << to_csv_row(r) << '\n';
      if (progress) {
        *progress << "step " << r.step << " nll " << r.nll;
        if (r.accuracy) *progress << " acc " << *r.accuracy;
        if (r.ece) *progress << " ece " << *r.ece;
        if (r.rmse) *progress << " rmse " << *r.rmse;
        *progress << " nonzero " << r.nonzero << '\n';
      }
    };
    hooks.on_mask_event = [&](const MaskEvent& e) { mask_log << to_json(e) << '\n'; };
    hooks.on_abort = [&](const TrainState& st, const std::string&) {
      Checkpoint ck;
      ck.net = *st.net;
      ck.num_classes = data.train.num_classes;
      ck.step = static_cast<std::uint64_t>(st.step);
      ck.budget = st.net->active_count();
      ck.rng_state = serialize_rng(*st.noise_rng);
      ck.config_text = to_config_text(cfg);
      ck.norm = data.norm;
      try {
        save_checkpoint(paths.abort_checkpoint, ck);
      } catch (const std::exception&) {
      }
    };

    TrainResult result = train(cfg, data.train, data.test, hooks);

    Checkpoint ck;
    ck.net = result.net;
    ck.num_classes = data.train.num_classes;
    ck.step = static_cast<std::uint64_t>(result.steps);
    ck.budget = result.budget;
    ck.rng_state = result.noise_rng_state;
    ck.config_text = to_config_text(cfg);
    ck.norm = data.norm;
    save_checkpoint(paths.checkpoint, ck);

    const MetricsRecord& last = result.records.back();
    json final_metrics;
    final_metrics["step"] = last.step;
    final_metrics["nll"] = last.nll;
    if (last.accuracy) final_metrics["acc"] = *last.accuracy;
    if (last.ece) final_metrics["ece"] = *last.ece;
    if (last.rmse) final_metrics["rmse"] = *last.rmse;
    final_metrics["budget"] = result.budget;
    final_metrics["dimension"] = result.dimension;
    final_metrics["flops_ratio"] = result.flops_ratio;
    status["final"] = final_metrics;
    outcome.result = std::move(result);
    return finish(0, "");
  } catch (const std::exception& e) {
    return finish(classify(e), e.what());
  }
}

std::string criteria_table_csv(const std::vector<double>& mu_grid,
                               const std::vector<double>& sigma_grid, double lambda) {
  if (mu_grid.empty() || sigma_grid.empty())
    throw Error(Errc::grid_invalid, "mu and sigma grids must be nonempty");
  for (double s : sigma_grid)
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(Errc::grid_invalid, "sigma grid value " + std::to_string(s) + " is not positive");
  for (double m : mu_grid)
    if (!std::isfinite(m)) throw Error(Errc::grid_invalid, "mu grid value is not finite");
  if (!(lambda > 0.0)) throw Error(Errc::grid_invalid, "lambda must be positive");

  std::ostringstream os;
  os << "mu,sigma";
  for (int i = 0; i < kNumCriteria; ++i) os << ',' << criterion_by_index(i, lambda).name();
  os << '\n';
  os << std::setprecision(10);
  for (double mu : mu_grid)
    for (double sigma : sigma_grid) {
      os << mu << ',' << sigma;
      for (int i = 0; i < kNumCriteria; ++i) {
        os << ',';
        try {
          os << criterion_value(criterion_by_index(i, lambda), {mu, sigma});
        } catch (const Error& e) {
          if (e.code() != Errc::overflow) throw;
          os << "inf";
        }
      }
      os << '\n';
    }
  return os.str();
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "sparsity") return AblationAxis::Sparsity;
  if (name == "criterion") return AblationAxis::Criterion;
  if (name == "sigma_init") return AblationAxis::SigmaInit;
  if (name == "mc_steps") return AblationAxis::McSteps;
  throw Error(Errc::invalid_config,
              "axis must be sparsity, criterion, sigma_init or mc_steps, got '" + name + "'");
}

void apply_axis_value(TrainConfig& cfg, AblationAxis axis, const std::string& value) {
  switch (axis) {
    case AblationAxis::Sparsity: apply_override(cfg, "ssvi.sparsity=" + value); break;
    case AblationAxis::Criterion: apply_override(cfg, "ssvi.criterion=" + value); break;
    case AblationAxis::SigmaInit: apply_override(cfg, "vi.sigma_init_mean=" + value); break;
    case AblationAxis::McSteps:
      apply_override(cfg, "ssvi.mc_steps=" + value);
      cfg.addition = AdditionEstimator::MultiStep;
      break;
  }
}

namespace {

TrainConfig build_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  TrainConfig cfg;
  if (!config_path.empty()) apply_config(cfg, read_config_file(config_path));
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto b = part.find_first_not_of(' ');
    const auto e = part.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
  }
  return out;
}

int report(std::ostream& err, int code, const std::string& message) {
  err << "error[" << exit_category(code) << "]: " << message << '\n';
  return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse subspace variational inference for Bayesian MLPs", "ssvi"};
  app.require_subcommand(1);

  std::optional<std::string> run_root;
  std::optional<std::string> run_name;

  auto* train_cmd = app.add_subcommand("train", "Train one model and write a run directory");
  std::string train_config;
  std::vector<std::string> train_sets;
  bool quiet = false;
  train_cmd->add_option("-c,--config", train_config, "Config file");
  train_cmd->add_option("--set", train_sets, "Override, key=value (repeatable)");
  train_cmd->add_option("--run-root", run_root, std::string("Run root (default $") + kRunRootEnv + " or ./runs)");
  train_cmd->add_option("--name", run_name, "Run directory name");
  train_cmd->add_flag("-q,--quiet", quiet, "No progress output");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint; prints JSON");
  std::string ckpt_path;
  std::string split = "test";
  int n_samples = 5;
  std::uint64_t eval_seed = 0;
  eval_cmd->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("-n,--samples", n_samples, "Posterior samples per prediction")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval_seed, "Seed for the prediction noise");

  auto* table_cmd = app.add_subcommand("criteria-table", "CSV of all removal criteria on a grid");
  std::vector<double> mu_grid{0.0};
  std::vector<double> sigma_grid{1.0};
  double lambda = kDefaultLambda;
  table_cmd->add_option("--mu", mu_grid, "Comma-separated mu values")->delimiter(',');
  table_cmd->add_option("--sigma", sigma_grid, "Comma-separated sigma values")->delimiter(',');
  table_cmd->add_option("--lambda", lambda, "Lambda of the exponential criteria");

  auto* ablate_cmd = app.add_subcommand("ablate", "One training per value of an axis");
  std::string ablate_config;
  std::vector<std::string> ablate_sets;
  std::string axis_name;
  std::string values;
  ablate_cmd->add_option("-c,--config", ablate_config, "Base config file");
  ablate_cmd->add_option("--set", ablate_sets, "Override applied to every leg");
  ablate_cmd->add_option("--axis", axis_name, "sparsity | criterion | sigma_init | mc_steps")->required();
  ablate_cmd->add_option("--values", values, "Comma-separated values")->required();
  ablate_cmd->add_option("--run-root", run_root, "Run root");
  ablate_cmd->add_option("--name", run_name, "Sweep directory name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::ostringstream os;
    const int rc = app.exit(e, os, os);
    if (rc == 0) {
      out << os.str();
      return 0;
    }
    return report(err, 2, e.what());
  }

  try {
    if (*train_cmd) {
      const TrainConfig cfg = build_config(train_config, train_sets);
      cfg.validate();
      const fs::path dir =
          fresh_run_dir(resolve_run_root(run_root), "train-s" + std::to_string(cfg.seed), run_name);
      const RunOutcome o = run_training(cfg, dir, quiet ? nullptr : &err);
      if (o.exit_code != 0) return report(err, o.exit_code, o.message);
      out << o.paths.dir.string() << '\n';
      return 0;
    }

    if (*eval_cmd) {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      TrainConfig cfg;
      apply_config(cfg, parse_config_text(ck.config_text, ckpt_path));
      SplitDataset data = load_datasets(cfg, false);
      Dataset& ds = split == "train" ? data.train : data.test;
      if (ds.input_dim() != ck.net.input_dim())
        throw Error(Errc::dimension_mismatch, "dataset has " + std::to_string(ds.input_dim()) +
                                                  " features, checkpoint expects " +
                                                  std::to_string(ck.net.input_dim()));
      apply_normalization(ds, ck.norm);
      Rng rng = derive_rng(eval_seed, static_cast<std::uint64_t>(Stream::Eval));
      const EvalResult ev = evaluate(ck.net, ds, n_samples, cfg.ece_bins, rng);
      json j;
      j["checkpoint"] = ckpt_path;
      j["split"] = split;
      j["n"] = ds.size();
      j["n_samples"] = n_samples;
      if (ev.accuracy) j["acc"] = *ev.accuracy;
      j["nll"] = ev.nll;
      if (ev.ece) j["ece"] = *ev.ece;
      if (ev.rmse) j["rmse"] = *ev.rmse;
      j["nonzero"] = ck.net.nonzero_count();
      out << j.dump() << '\n';
      return 0;
    }

    if (*table_cmd) {
      out << criteria_table_csv(mu_grid, sigma_grid, lambda);
      return 0;
    }

    if (*ablate_cmd) {
      const AblationAxis axis = parse_axis(axis_name);
      const TrainConfig base = build_config(ablate_config, ablate_sets);
      const std::vector<std::string> legs = split_list(values);
      if (legs.empty()) throw Error(Errc::invalid_config, "--values is empty");
      // Validate every leg up front so a typo does not surface after hours.
      for (const auto& v : legs) {
        TrainConfig c = base;
        apply_axis_value(c, axis, v);
        c.validate();
      }
      const fs::path sweep = fresh_run_dir(resolve_run_root(run_root), "ablate-" + axis_name, run_name);
      fs::create_directories(sweep);
      std::ofstream csv = open_out(sweep / "sweep.csv");
      csv << "axis,value,status,exit_code,final_acc,final_ece,final_nll,flops_ratio,budget,run_dir\n";
      csv << std::setprecision(10);
      int failures = 0;
      for (std::size_t i = 0; i < legs.size(); ++i) {
        TrainConfig c = base;
        apply_axis_value(c, axis, legs[i]);
        const fs::path leg_dir = sweep / ("leg" + std::to_string(i) + "-" + slug(legs[i]));
        err << "leg " << i << ": " << axis_name << " = " << legs[i] << '\n';
        const RunOutcome o = run_training(c, leg_dir, nullptr);
        csv << axis_name << ',' << legs[i] << ',' << exit_category(o.exit_code) << ',' << o.exit_code << ',';
        if (o.result) {
          const MetricsRecord& last = o.result->records.back();
          if (last.accuracy) csv << *last.accuracy;
          csv << ',';
          if (last.ece) csv << *last.ece;
          csv << ',' << last.nll << ',' << o.result->flops_ratio << ',' << o.result->budget;
        } else {
          ++failures;
          err << "  failed: " << o.message << '\n';
          csv << ",,,,";
        }
        csv << ',' << leg_dir.filename().string() << '\n';
        csv.flush();
      }
      out << sweep.string() << '\n';
      return failures == 0 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    return report(err, classify(e), e.what());
  }
  return 1;
}

}  // namespace ssvi
