#include "ssvi/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "ssvi/error.hpp"

namespace ssvi {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(Errc::invalid_config, key + ": " + why);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* first = v.data();
  if (!v.empty() && v.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
    bad(key, "'" + v + "' is not a finite number");
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, "'" + v + "' is not an integer");
  return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) bad(key, "must be nonnegative");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, "'" + v + "' is not a boolean");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SSVI_STR(name, member)                                              \
  Field {                                                                   \
    name, [](TrainConfig& c, const std::string& v) { c.member = v; },       \
        [](const TrainConfig& c) { return c.member; }                       \
  }
#define SSVI_DBL(name, member)                                                           \
  Field {                                                                                \
    name, [](TrainConfig& c, const std::string& v) { c.member = to_double(name, v); },   \
        [](const TrainConfig& c) { return fmt(c.member); }                               \
  }
#define SSVI_INT(name, member)                                                                  \
  Field {                                                                                       \
    name,                                                                                       \
        [](TrainConfig& c, const std::string& v) {                                              \
          c.member = static_cast<decltype(c.member)>(to_int(name, v));                          \
        },                                                                                      \
        [](const TrainConfig& c) { return std::to_string(c.member); }                           \
  }
#define SSVI_SIZE(name, member)                                                        \
  Field {                                                                              \
    name, [](TrainConfig& c, const std::string& v) { c.member = to_size(name, v); },   \
        [](const TrainConfig& c) { return std::to_string(c.member); }                  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      SSVI_STR("data.dataset", dataset),
      SSVI_SIZE("data.n_train", n_train),
      SSVI_SIZE("data.n_test", n_test),
      SSVI_DBL("data.noise", data_noise),
      SSVI_STR("data.idx_train_images", idx_train_images),
      SSVI_STR("data.idx_train_labels", idx_train_labels),
      SSVI_STR("data.idx_test_images", idx_test_images),
      SSVI_STR("data.idx_test_labels", idx_test_labels),
      SSVI_STR("data.csv_train", csv_train),
      SSVI_STR("data.csv_test", csv_test),
      SSVI_STR("data.csv_label", csv_label),
      Field{"model.hidden",
            [](TrainConfig& c, const std::string& v) {
              c.hidden.clear();
              std::stringstream ss(v);
              std::string part;
              while (std::getline(ss, part, ',')) {
                part = trim(part);
                if (part.empty()) continue;
                const long long w = to_int("model.hidden", part);
                if (w <= 0) bad("model.hidden", "widths must be positive");
                c.hidden.push_back(static_cast<int>(w));
              }
            },
            [](const TrainConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.hidden.size(); ++i)
                out += (i ? "," : "") + std::to_string(c.hidden[i]);
              return out;
            }},
      SSVI_INT("train.outer_steps", outer_steps),
      SSVI_INT("train.inner_steps", inner_steps),
      SSVI_SIZE("train.batch_size", batch_size),
      SSVI_DBL("train.lr", lr0),
      Field{"train.lr_schedule",
            [](TrainConfig& c, const std::string& v) {
              if (v == "cosine")
                c.lr_schedule = LrSchedule::Cosine;
              else if (v == "constant")
                c.lr_schedule = LrSchedule::Constant;
              else
                bad("train.lr_schedule", "expected cosine or constant, got '" + v + "'");
            },
            [](const TrainConfig& c) {
              return std::string(c.lr_schedule == LrSchedule::Cosine ? "cosine" : "constant");
            }},
      Field{"train.seed",
            [](TrainConfig& c, const std::string& v) {
              c.seed = static_cast<std::uint64_t>(to_size("train.seed", v));
            },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      SSVI_INT("train.eval_samples", eval_samples),
      SSVI_INT("train.ece_bins", ece_bins),
      SSVI_DBL("vi.prior_sigma", prior_sigma),
      SSVI_DBL("vi.beta_max", beta_max),
      SSVI_DBL("vi.warmup_fraction", warmup_fraction),
      SSVI_DBL("vi.sigma_init_mean", sigma_init_mean),
      SSVI_DBL("ssvi.sparsity", sparsity),
      SSVI_STR("ssvi.criterion", criterion),
      SSVI_DBL("ssvi.lambda", lambda),
      Field{"ssvi.addition",
            [](TrainConfig& c, const std::string& v) { c.addition = parse_addition(v); },
            [](const TrainConfig& c) { return addition_name(c.addition); }},
      SSVI_INT("ssvi.mc_steps", mc_steps),
      SSVI_DBL("ssvi.r0", r0),
      Field{"ssvi.rate_schedule",
            [](TrainConfig& c, const std::string& v) {
              if (v == "cosine")
                c.rate_decay = RateDecay::Cosine;
              else if (v == "constant")
                c.rate_decay = RateDecay::Constant;
              else
                bad("ssvi.rate_schedule", "expected cosine or constant, got '" + v + "'");
            },
            [](const TrainConfig& c) {
              return std::string(c.rate_decay == RateDecay::Cosine ? "cosine" : "constant");
            }},
      Field{"ssvi.reinit",
            [](TrainConfig& c, const std::string& v) {
              if (v == "module_mean")
                c.reinit = ReinitStrategy::ModuleMean;
              else if (v == "epsilon")
                c.reinit = ReinitStrategy::Epsilon;
              else
                bad("ssvi.reinit", "expected module_mean or epsilon, got '" + v + "'");
            },
            [](const TrainConfig& c) {
              return std::string(c.reinit == ReinitStrategy::ModuleMean ? "module_mean" : "epsilon");
            }},
      SSVI_DBL("ssvi.reinit_epsilon", reinit_epsilon),
      Field{"ssvi.ranking",
            [](TrainConfig& c, const std::string& v) {
              if (v == "global")
                c.ranking = Ranking::Global;
              else if (v == "per_layer")
                c.ranking = Ranking::PerLayer;
              else
                bad("ssvi.ranking", "expected global or per_layer, got '" + v + "'");
            },
            [](const TrainConfig& c) {
              return std::string(c.ranking == Ranking::Global ? "global" : "per_layer");
            }},
      Field{"ssvi.track_criteria_iou",
            [](TrainConfig& c, const std::string& v) {
              c.track_criteria_iou = to_bool("ssvi.track_criteria_iou", v);
            },
            [](const TrainConfig& c) { return std::string(c.track_criteria_iou ? "true" : "false"); }},
  };
  return table;
}

#undef SSVI_STR
#undef SSVI_DBL
#undef SSVI_INT
#undef SSVI_SIZE

const Field& field(const std::string& canonical) {
  for (const auto& f : fields())
    if (f.key == canonical) return f;
  bad(canonical, "unknown configuration key");
}

}  // namespace

std::string addition_name(AdditionEstimator e) {
  switch (e) {
    case AdditionEstimator::OneStepSampled: return "one_step_sampled";
    case AdditionEstimator::OneStepMean: return "one_step_mean";
    case AdditionEstimator::MultiStep: return "multi_step";
  }
  return "unknown";
}

AdditionEstimator parse_addition(const std::string& name) {
  if (name == "one_step_sampled") return AdditionEstimator::OneStepSampled;
  if (name == "one_step_mean") return AdditionEstimator::OneStepMean;
  if (name == "multi_step") return AdditionEstimator::MultiStep;
  bad("ssvi.addition", "expected one_step_sampled, one_step_mean or multi_step, got '" + name + "'");
}

void TrainConfig::validate() const {
  if (dataset != "two_moons" && dataset != "sine" && dataset != "idx" && dataset != "csv")
    bad("data.dataset", "expected two_moons, sine, idx or csv, got '" + dataset + "'");
  if ((dataset == "two_moons" || dataset == "sine") && n_train < 2)
    bad("data.n_train", "must be at least 2");
  if (!(data_noise >= 0.0)) bad("data.noise", "must be nonnegative");
  if (dataset == "idx" && (idx_train_images.empty() || idx_train_labels.empty()))
    bad("data.idx_train_images", "idx datasets need train image and label paths");
  if (dataset == "csv" && csv_train.empty()) bad("data.csv_train", "csv datasets need a path");
  for (int w : hidden)
    if (w <= 0) bad("model.hidden", "widths must be positive");
  if (outer_steps < 1) bad("train.outer_steps", "must be at least 1");
  if (inner_steps < 1) bad("train.inner_steps", "must be at least 1");
  if (batch_size < 1) bad("train.batch_size", "must be at least 1");
  if (!(lr0 > 0.0)) bad("train.lr", "must be positive");
  if (eval_samples < 1) bad("train.eval_samples", "must be at least 1");
  if (ece_bins < 1) bad("train.ece_bins", "must be at least 1");
  if (!(prior_sigma > 0.0)) bad("vi.prior_sigma", "must be positive");
  if (!(beta_max >= 0.0)) bad("vi.beta_max", "must be nonnegative");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
    bad("vi.warmup_fraction", "must lie in [0, 1]");
  if (!(sigma_init_mean > 0.0)) bad("vi.sigma_init_mean", "must be positive");
  if (!(sparsity >= 0.0 && sparsity < 1.0))
    bad("ssvi.sparsity", "must lie in [0, 1), got " + fmt(sparsity));
  if (!(lambda > 0.0)) bad("ssvi.lambda", "must be positive");
  try {
    (void)criterion_kind();
  } catch (const Error& e) {
    bad("ssvi.criterion", e.what());
  }
  if (mc_steps < 1) bad("ssvi.mc_steps", "must be at least 1");
  if (!(r0 > 0.0 && r0 <= 1.0)) bad("ssvi.r0", "must lie in (0, 1]");
  if (!(reinit_epsilon > 0.0)) bad("ssvi.reinit_epsilon", "must be positive");
}

ConfigMap parse_config_text(const std::string& text, const std::string& source) {
  ConfigMap out;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw Error(Errc::invalid_config, source + ":" + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(Errc::invalid_config, source + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
    out[resolve_config_key(key)] = value;
  }
  return out;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

std::string resolve_config_key(const std::string& key) {
  std::vector<std::string> matches;
  for (const auto& k : config_keys()) {
    if (k == key) return k;
    const auto dot = k.rfind('.');
    if (k.substr(dot + 1) == key) matches.push_back(k);
  }
  if (matches.size() == 1) return matches.front();
  if (matches.empty()) bad(key, "unknown configuration key");
  bad(key, "ambiguous key, qualify it with its section");
}

void apply_config(TrainConfig& cfg, const ConfigMap& values) {
  for (const auto& [k, v] : values) field(resolve_config_key(k)).set(cfg, v);
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) bad(assignment, "override must look like key=value");
  const std::string key = resolve_config_key(trim(assignment.substr(0, eq)));
  field(key).set(cfg, trim(assignment.substr(eq + 1)));
}

ConfigMap to_config_map(const TrainConfig& cfg) {
  ConfigMap out;
  for (const auto& f : fields()) out[f.key] = f.get(cfg);
  return out;
}

std::string to_config_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_config_map(cfg)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace ssvi
