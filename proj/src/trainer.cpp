#include "ssvi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ssvi/error.hpp"
#include "ssvi/metrics.hpp"

namespace ssvi {

Rng stream_rng(std::uint64_t seed, Stream stream) {
  return derive_rng(seed, static_cast<std::uint64_t>(stream));
}

double net_kl(const VariationalNet& net, double prior_sigma) {
  double kl = 0.0;
  for (const auto& layer : net.layers)
    for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r)
        if (layer.mask(r, c) != 0) kl += kl_gauss_to_prior({layer.mu(r, c), layer.sigma(r, c)}, prior_sigma);
  return kl;
}

ElboResult elbo_step(const VariationalNet& net, const Batch& batch, double beta,
                     double prior_sigma, double kl_scale, Rng& rng) {
  ElboResult res;
  const NetForward fwd = net_forward(net, batch.x, rng);
  const LossResult loss = data_loss(net.task, fwd.output, batch);
  res.grads = net_backward(net, fwd.tape, loss.d_output);

  res.elbo.nll = loss.loss;
  res.elbo.beta = beta;
  const double w = beta * kl_scale;
  double kl = 0.0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const BayesLinear& layer = net.layers[l];
    for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r) {
        if (layer.mask(r, c) == 0) continue;
        const GaussParam p{layer.mu(r, c), layer.sigma(r, c)};
        kl += kl_gauss_to_prior(p, prior_sigma);
        if (w != 0.0) {
          const KlGrad g = kl_gauss_to_prior_grad(p, prior_sigma);
          res.grads.d_mu[l](r, c) += w * g.d_mu;
          res.grads.d_sigma[l](r, c) += w * g.d_sigma;
        }
      }
  }
  res.elbo.kl = kl;
  res.elbo.kl_scaled = kl * kl_scale;
  res.elbo.total = res.elbo.nll + beta * res.elbo.kl_scaled;
  if (!std::isfinite(res.elbo.total)) {
    std::ostringstream os;
    os << "objective is not finite (nll " << res.elbo.nll << ", kl " << res.elbo.kl << ")";
    throw Error(Errc::non_finite_loss, os.str());
  }
  return res;
}

double kl_warmup(long step, long total, double beta_max, double warmup_fraction) {
  if (step < 0 || step > total)
    throw Error(Errc::invalid_config, "warm-up step outside [0, total]");
  const double end = warmup_fraction * static_cast<double>(total);
  if (end <= 0.0) return beta_max;
  return beta_max * std::min(1.0, static_cast<double>(step) / end);
}

double learning_rate(long step, long total, double lr0, LrSchedule schedule) {
  if (schedule == LrSchedule::Constant || total <= 0) return lr0;
  const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total), 0.0, 1.0);
  return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * frac));
}

void sgd_update(VariationalNet& net, const NetGrads& grads, double lr) {
  if (grads.d_mu.size() != net.layers.size() || grads.d_sigma.size() != net.layers.size() ||
      grads.d_bias.size() != net.layers.size())
    throw Error(Errc::dimension_mismatch, "gradient depth does not match network depth");
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    BayesLinear& layer = net.layers[l];
    if (grads.d_mu[l].rows() != layer.out_dim() || grads.d_mu[l].cols() != layer.in_dim() ||
        grads.d_sigma[l].rows() != layer.out_dim() || grads.d_sigma[l].cols() != layer.in_dim() ||
        grads.d_bias[l].size() != layer.out_dim())
      throw Error(Errc::dimension_mismatch, "gradient shape mismatch in layer " + std::to_string(l));
    layer.mu -= lr * grads.d_mu[l];
    layer.sigma -= lr * grads.d_sigma[l];
    layer.bias -= lr * grads.d_bias[l];
    layer.sigma = layer.sigma.cwiseAbs().cwiseMax(kSigmaFloor);
    layer.apply_mask();
  }
}

void init_network(VariationalNet& net, const Mask& mask, double sigma_mean, Rng& rng) {
  std::normal_distribution<double> sigma_dist(sigma_mean, sigma_mean / 10.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    BayesLinear& layer = net.layers[l];
    const MaskMatrix& m = mask.layers.at(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in_dim()));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r) {
        const double fan_in = std::max<double>(1.0, m.row(r).cast<double>().sum());
        layer.mu(r, c) = unit(rng) / std::sqrt(fan_in);
      }
    for (Eigen::Index c = 0; c < layer.in_dim(); ++c)
      for (Eigen::Index r = 0; r < layer.out_dim(); ++r) {
        double s = sigma_dist(rng);
        while (!(s > 0.0)) s = sigma_dist(rng);
        layer.sigma(r, c) = s;
      }
    for (Eigen::Index r = 0; r < layer.out_dim(); ++r) layer.bias(r) = uni(rng);
  }
  install_mask(net, mask);
}

BatchSampler::BatchSampler(const Dataset& data, std::size_t batch_size, Rng rng)
    : data_(&data), batch_size_(std::min(batch_size, data.size())), rng_(std::move(rng)) {
  if (data.size() == 0) throw Error(Errc::empty_input, "cannot sample batches from an empty dataset");
  order_.resize(data.size());
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order_[i - 1], order_[pick(rng_)]);
  }
  cursor_ = 0;
}

Batch BatchSampler::next() {
  if (cursor_ + batch_size_ > order_.size()) reshuffle();
  std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
  cursor_ += batch_size_;
  return data_->batch(idx);
}

EvalResult evaluate(const VariationalNet& net, const Dataset& data, int n_samples, int ece_bins,
                    Rng& rng) {
  if (data.size() == 0) throw Error(Errc::empty_input, "cannot evaluate on an empty dataset");
  const Batch all = data.all();
  const Matrix pred = predict(net, all.x, n_samples, rng);
  EvalResult res;
  if (net.task == Task::Classification) {
    const AccuracyNll an = accuracy_nll(pred, all.labels);
    const Calibration cal = calibration_inputs(pred, all.labels);
    res.nll = an.nll;
    res.accuracy = an.accuracy;
    res.ece = ece(cal.confidence, cal.correct, EceConfig{ece_bins});
  } else {
    const double var = kRegressionNoise * kRegressionNoise;
    const Eigen::RowVectorXd resid = pred.row(0) - all.values;
    const double mse = resid.squaredNorm() / static_cast<double>(resid.size());
    res.nll = 0.5 * mse / var + 0.5 * std::log(2.0 * std::numbers::pi * var);
    res.rmse = std::sqrt(mse);
  }
  return res;
}

std::vector<int> network_widths(const TrainConfig& cfg, const Dataset& train) {
  std::vector<int> widths{static_cast<int>(train.input_dim())};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(train.task == Task::Classification ? train.num_classes : 1);
  return widths;
}

namespace {

std::vector<double> criteria_iou_matrix(const Mask& mask, const VariationalNet& net, std::size_t k,
                                        Ranking ranking, double lambda) {
  std::vector<std::vector<std::size_t>> sets;
  for (int i = 0; i < kNumCriteria; ++i)
    sets.push_back(removal_set(mask, net, k, criterion_by_index(i, lambda), ranking));
  std::vector<double> out;
  for (int i = 0; i < kNumCriteria; ++i)
    for (int j = 0; j < kNumCriteria; ++j) out.push_back(criterion_iou(sets[i], sets[j]));
  return out;
}

std::vector<std::size_t> per_layer_counts(const std::vector<std::size_t>& flat,
                                          const std::vector<LayerShape>& shapes) {
  std::vector<std::size_t> counts(shapes.size(), 0);
  for (std::size_t f : flat) ++counts[locate(shapes, f).layer];
  return counts;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.size() == 0) throw Error(Errc::empty_input, "training set is empty");
  if (test_set.size() == 0) throw Error(Errc::empty_input, "test set is empty");
  if (test_set.input_dim() != train_set.input_dim() || test_set.task != train_set.task)
    throw Error(Errc::dimension_mismatch, "train and test sets disagree on shape or task");

  const CriterionKind kind = cfg.criterion_kind();
  const std::vector<int> widths = network_widths(cfg, train_set);

  TrainResult res;
  res.net = VariationalNet::with_widths(widths, train_set.task);
  VariationalNet& net = res.net;
  const auto shapes = shapes_of(net);
  res.dimension = net.weight_count();
  res.budget = budget_for_sparsity(res.dimension, cfg.sparsity);
  const bool dense = res.budget == res.dimension;

  Rng mask_rng = stream_rng(cfg.seed, Stream::Mask);
  Mask mask = init_mask(shapes, res.budget, mask_rng());
  Rng init_rng = stream_rng(cfg.seed, Stream::Init);
  init_network(net, mask, cfg.sigma_init_mean, init_rng);

  BatchSampler sampler(train_set, cfg.batch_size, stream_rng(cfg.seed, Stream::Shuffle));
  BatchSampler probe_sampler(train_set, cfg.batch_size, stream_rng(cfg.seed, Stream::ProbeBatch));
  Rng noise_rng = stream_rng(cfg.seed, Stream::Noise);
  Rng probe_rng = stream_rng(cfg.seed, Stream::Probe);
  Rng eval_rng = stream_rng(cfg.seed, Stream::Eval);

  const long total = cfg.total_steps();
  const double kl_scale = 1.0 / static_cast<double>(train_set.size());
  const ReplacementSchedule sched{cfg.r0, cfg.outer_steps, cfg.rate_decay};
  long step = 0;

  auto emit = [&](int outer, double r_t, double train_nll, const std::string& phase) {
    const EvalResult ev = evaluate(net, test_set, cfg.eval_samples, cfg.ece_bins, eval_rng);
    MetricsRecord rec;
    rec.step = step;
    rec.outer = outer;
    rec.beta = kl_warmup(step, total, cfg.beta_max, cfg.warmup_fraction);
    rec.lr = learning_rate(step, total, cfg.lr0, cfg.lr_schedule);
    rec.r_t = r_t;
    rec.train_nll = train_nll;
    rec.nll = ev.nll;
    rec.kl = net_kl(net, cfg.prior_sigma);
    rec.accuracy = ev.accuracy;
    rec.ece = ev.ece;
    rec.rmse = ev.rmse;
    rec.nonzero = net.nonzero_count();
    rec.active = net.active_count();
    rec.sparsity = 1.0 - static_cast<double>(rec.nonzero) / static_cast<double>(res.dimension);
    rec.flops_est = flops_estimate(widths, res.budget, cfg.batch_size, static_cast<std::size_t>(step))
                        .sparse_total();
    rec.phase = phase;
    res.records.push_back(rec);
    if (hooks.on_metrics) hooks.on_metrics(rec);
  };

  try {
    for (int t = 0; t < cfg.outer_steps; ++t) {
      double nll_sum = 0.0;
      for (int m = 0; m < cfg.inner_steps; ++m) {
        const double beta = kl_warmup(step, total, cfg.beta_max, cfg.warmup_fraction);
        const double lr = learning_rate(step, total, cfg.lr0, cfg.lr_schedule);
        const Batch batch = sampler.next();
        ElboResult er = elbo_step(net, batch, beta, cfg.prior_sigma, kl_scale, noise_rng);
        sgd_update(net, er.grads, lr);
        nll_sum += er.elbo.nll;
        ++step;
      }
      const double train_nll = nll_sum / static_cast<double>(cfg.inner_steps);

      const bool last = t + 1 == cfg.outer_steps;
      const double r_t = last ? 0.0 : replacement_rate(t, sched);
      const std::size_t k = dense || last ? 0 : replacement_count(r_t, res.budget);
      if (!last && !dense) {
        MaskEvent ev;
        ev.step = step;
        ev.outer = t;
        ev.criterion = std::string(kind.name());
        if (k > 0) {
          if (cfg.track_criteria_iou)
            ev.criteria_iou = criteria_iou_matrix(mask, net, k, cfg.ranking, cfg.lambda);
          const Mask before = mask;
          RemovalResult rem = removal(mask, net, k, kind, cfg.ranking);
          const std::vector<Matrix> probe = addition_scores(
              net, cfg.addition, cfg.mc_steps, [&] { return probe_sampler.next(); }, probe_rng);
          const auto quota = cfg.ranking == Ranking::PerLayer
                                 ? per_layer_counts(rem.removed, shapes)
                                 : std::vector<std::size_t>{};
          AdditionResult add = addition(rem.mask, probe, k, cfg.ranking, quota);
          const ReinitReport rep = reinit_sigma(net, add.added, cfg.reinit, cfg.reinit_epsilon);
          mask = add.mask;
          ev.removed_count = rem.removed.size();
          ev.added_count = add.added.size();
          ev.reinit_fallbacks = rep.fallback_layers;
          ev.overlap_with_previous = criterion_iou(before.active_indices(), mask.active_indices());
        }
        ev.nonzero_after = net.nonzero_count();
        res.mask_events.push_back(ev);
        if (hooks.on_mask_event) hooks.on_mask_event(ev);
      }
      emit(t, r_t, train_nll, last ? "final" : "gamma_update");
    }
  } catch (const Error& e) {
    if (e.code() == Errc::non_finite_loss) {
      if (hooks.on_abort) hooks.on_abort(TrainState{&net, step, &noise_rng}, e.what());
      const std::string detail = std::string(e.what()).substr(std::string(errc_name(e.code())).size() + 2);
      throw Error(Errc::non_finite_loss, "step " + std::to_string(step) + ": " + detail);
    }
    throw;
  }

  res.steps = step;
  res.flops_ratio = flops_estimate(widths, res.budget, cfg.batch_size, static_cast<std::size_t>(total)).ratio();
  res.noise_rng_state = serialize_rng(noise_rng);
  return res;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string to_json(const MetricsRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["beta"] = r.beta;
  j["lr"] = r.lr;
  j["r_t"] = r.r_t;
  j["nll"] = r.nll;
  j["kl"] = r.kl;
  j["acc"] = optional_json(r.accuracy);
  j["ece"] = optional_json(r.ece);
  j["sparsity"] = r.sparsity;
  j["flops_est"] = r.flops_est;
  j["outer"] = r.outer;
  j["train_nll"] = r.train_nll;
  j["rmse"] = optional_json(r.rmse);
  j["nonzero"] = r.nonzero;
  j["active"] = r.active;
  j["phase"] = r.phase;
  return j.dump();
}

std::string to_json(const MaskEvent& e) {
  nlohmann::ordered_json j;
  j["step"] = e.step;
  j["removed_count"] = e.removed_count;
  j["added_count"] = e.added_count;
  j["criterion"] = e.criterion;
  j["overlap_with_previous"] = e.overlap_with_previous;
  j["outer"] = e.outer;
  j["nonzero_after"] = e.nonzero_after;
  j["reinit_fallbacks"] = e.reinit_fallbacks;
  if (!e.criteria_iou.empty()) j["criteria_iou"] = e.criteria_iou;
  return j.dump();
}

std::string metrics_csv_header() {
  return "step,outer,beta,lr,r_t,train_nll,nll,kl,acc,ece,rmse,sparsity,flops_est,nonzero,active,phase";
}

std::string to_csv_row(const MetricsRecord& r) {
  std::ostringstream os;
  os.precision(17);
  auto opt = [&](const std::optional<double>& v) {
    if (v) os << *v;
  };
  os << r.step << ',' << r.outer << ',' << r.beta << ',' << r.lr << ',' << r.r_t << ','
     << r.train_nll << ',' << r.nll << ',' << r.kl << ',';
  opt(r.accuracy);
  os << ',';
  opt(r.ece);
  os << ',';
  opt(r.rmse);
  os << ',' << r.sparsity << ',' << r.flops_est << ',' << r.nonzero << ',' << r.active << ','
     << r.phase;
  return os.str();
}

}  // namespace ssvi
