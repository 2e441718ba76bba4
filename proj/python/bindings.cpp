#include <sstream>
#include <string>
#include <vector>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ssvi/cli.hpp"
#include "ssvi/config.hpp"
#include "ssvi/data.hpp"
#include "ssvi/gaussian_stats.hpp"
#include "ssvi/metrics.hpp"
#include "ssvi/trainer.hpp"

namespace py = pybind11;
using namespace ssvi;

namespace {

TrainConfig make_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  TrainConfig cfg;
  if (!path.empty()) apply_config(cfg, read_config_file(path));
  for (const auto& [k, v] : overrides) apply_override(cfg, k + "=" + v);
  cfg.validate();
  return cfg;
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["step"] = r.step;
  d["outer"] = r.outer;
  d["beta"] = r.beta;
  d["lr"] = r.lr;
  d["r_t"] = r.r_t;
  d["train_nll"] = r.train_nll;
  d["nll"] = r.nll;
  d["kl"] = r.kl;
  d["acc"] = r.accuracy ? py::cast(*r.accuracy) : py::none();
  d["ece"] = r.ece ? py::cast(*r.ece) : py::none();
  d["rmse"] = r.rmse ? py::cast(*r.rmse) : py::none();
  d["sparsity"] = r.sparsity;
  d["nonzero"] = r.nonzero;
  d["phase"] = r.phase;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ssvi, m) {
  m.doc() = "Sparse subspace variational inference for Bayesian MLPs";

  static py::exception<Error> error(m, "SsviError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error;
      py::object inst = exc(e.what());
      inst.attr("code") = errc_name(e.code());
      PyErr_SetObject(exc.ptr(), inst.ptr());
    }
  });

  m.def("criterion_names", [] {
    std::vector<std::string> names;
    for (int i = 0; i < kNumCriteria; ++i) names.emplace_back(criterion_by_index(i).name());
    return names;
  });
  m.def(
      "criterion",
      [](const std::string& name, double mu, double sigma, double lambda) {
        return criterion_value(CriterionKind::parse(name, lambda), {mu, sigma});
      },
      py::arg("name"), py::arg("mu"), py::arg("sigma"), py::arg("lam") = kDefaultLambda);
  m.def("std_normal_cdf", &std_normal_cdf);
  m.def(
      "kl_to_prior", [](double mu, double sigma, double prior) { return kl_gauss_to_prior({mu, sigma}, prior); },
      py::arg("mu"), py::arg("sigma"), py::arg("prior_sigma") = 1.0);
  m.def("criteria_table", &criteria_table_csv, py::arg("mu"), py::arg("sigma"), py::arg("lam") = kDefaultLambda);

  m.def(
      "ece",
      [](const std::vector<double>& conf, const std::vector<bool>& correct, int bins) {
        std::vector<std::uint8_t> ok(correct.begin(), correct.end());
        return ece(conf, ok, EceConfig{bins});
      },
      py::arg("confidence"), py::arg("correct"), py::arg("bins") = 15);

  m.def(
      "two_moons",
      [](std::size_t n, double noise, std::uint64_t seed) {
        const Dataset d = gen_two_moons(n, noise, seed);
        return py::make_tuple(d.features, d.labels);
      },
      py::arg("n"), py::arg("noise") = 0.1, py::arg("seed") = 0);

  m.def(
      "train",
      [](const std::string& config, const std::map<std::string, std::string>& overrides) {
        const TrainConfig cfg = make_config(config, overrides);
        const SplitDataset data = load_datasets(cfg);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(cfg, data.train, data.test);
        }
        py::list records;
        for (const auto& rec : r.records) records.append(record_dict(rec));
        py::dict out;
        out["records"] = records;
        out["budget"] = r.budget;
        out["dimension"] = r.dimension;
        out["flops_ratio"] = r.flops_ratio;
        out["steps"] = r.steps;
        out["mask_events"] = r.mask_events.size();
        return out;
      },
      py::arg("config") = "", py::arg("overrides") = std::map<std::string, std::string>{});

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "ssvi");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
