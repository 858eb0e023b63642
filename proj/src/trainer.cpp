#include "dcoef/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dcoef/losses.hpp"
#include "dcoef/pseudo_labeler.hpp"

namespace dcoef {
namespace {

constexpr std::uint64_t kStepTag = 0x73746570;
constexpr std::uint64_t kMixTag = 0x6d6978;
constexpr std::uint64_t kInitTag = 0x696e6974;
constexpr std::uint64_t kShuffleTag = 0x73687566;
constexpr std::uint64_t kProbeTag = 0x70726f62;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct StepCaches {
  const ForwardCache* x = nullptr;
  const ForwardCache* x_hat = nullptr;
  const ForwardCache* mix = nullptr;
};

LossBreakdown losses_from(const StepCaches& caches, const StepTargets& t) {
  const Matrix& probs = caches.x->probs;
  LossBreakdown out;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    out.omega += t.omega_star[i] * soft_cross_entropy(t.p0.row(i), probs.row(i));
    out.lambda += t.omega0 * soft_cross_entropy(t.y_star.row(i), probs.row(i));
  }
  if (t.mix && caches.mix != nullptr) {
    const MixupLosses m = mixup_losses_from_predictions(caches.mix->probs, *t.mix);
    out.mix_probe = m.probe;
    out.mix_train = m.train;
  }
  out.kl = kl_consistency_from_predictions(probs, caches.x_hat->probs);
  out.total = out.omega + out.lambda + out.mix_probe + t.p * out.mix_train + t.k * out.kl;
  return out;
}

GradientVector gradient_from(const Mlp& model, const StepCaches& caches, const StepTargets& t) {
  const Matrix& probs = caches.x->probs;
  const std::vector<double> w0(probs.rows(), t.omega0);
  Matrix d_x = cross_entropy_logit_grad(probs, t.p0, t.omega_star);
  const Matrix d_lambda = cross_entropy_logit_grad(probs, t.y_star, w0);
  axpy(1.0, d_lambda.values(), d_x.values());

  GradientVector grad;
  if (t.k != 0.0) {
    KlLogitGrads kl = kl_consistency_logit_grads(probs, caches.x_hat->probs);
    axpy(t.k, kl.d_clean.values(), d_x.values());
    for (double& v : kl.d_augmented.values()) v *= t.k;
    grad = model.backward(*caches.x_hat, kl.d_augmented);
    axpy(1.0, model.backward(*caches.x, d_x), grad);
  } else {
    grad = model.backward(*caches.x, d_x);
  }
  if (t.mix && caches.mix != nullptr && caches.mix->probs.rows() > 0) {
    axpy(1.0, model.backward(*caches.mix, mixup_logit_grad(caches.mix->probs, *t.mix, 1.0, t.p)), grad);
  }
  return grad;
}

void check_targets(const Mlp& model, const StepTargets& t) {
  const std::size_t n = t.x.rows();
  if (t.x_hat.rows() != n || t.p0.rows() != n || t.y_star.rows() != n || t.omega_star.size() != n) {
    throw DimensionError("step targets: inconsistent row counts");
  }
  if (t.p0.cols() != model.num_classes() || t.y_star.cols() != model.num_classes()) {
    throw DimensionError("step targets: label width does not match model output");
  }
}

double fraction_correct(const Matrix& probs, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string to_string(Method m) { return m == Method::full ? "full" : "vanilla"; }

Method parse_method(const std::string& name) {
  if (name == "full") return Method::full;
  if (name == "vanilla") return Method::vanilla;
  throw std::invalid_argument("unknown method '" + name + "' (expected full or vanilla)");
}

void RunConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (probe_batch_size == 0) throw std::invalid_argument("config: probe_batch_size must be positive");
  if (!(p >= 0.0)) throw std::invalid_argument("config: p must be >= 0");
  if (!(k >= 0.0)) throw std::invalid_argument("config: k must be >= 0");
  if (!(T >= 0.0 && T <= 1.0)) throw std::invalid_argument("config: T must lie in [0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("config: tau must lie in (0, 1]");
  if (K == 0) throw std::invalid_argument("config: K must be at least 1");
  if (!(epochs >= 0.0)) throw std::invalid_argument("config: epochs must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("config: momentum must lie in [0, 1)");
  if (!(meta.lambda0 >= 0.0 && meta.lambda0 <= 1.0)) throw std::invalid_argument("config: lambda0 must lie in [0, 1]");
  if (!(augment.jitter_sigma >= 0.0) || !(augment.scale_lo <= augment.scale_hi)) {
    throw std::invalid_argument("config: invalid augmentation policy");
  }
  schedule.validate();
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::string hidden;
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) hidden += (i ? "x" : "") + std::to_string(hidden_dims[i]);
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  return {
      {"method", to_string(method)},
      {"hidden_dims", hidden},
      {"activation", to_string(activation)},
      {"batch_size", std::to_string(batch_size)},
      {"probe_batch_size", std::to_string(probe_batch_size)},
      {"epochs", fmt_double(epochs)},
      {"steps", steps ? std::to_string(*steps) : std::string()},
      {"p", fmt_double(p)},
      {"k", fmt_double(k)},
      {"T", fmt_double(T)},
      {"lambda0", fmt_double(meta.lambda0)},
      {"tiebreak", meta.tiebreak == TieBreak::original ? "original" : "pseudo"},
      {"eps_norm", fmt_double(meta.eps_norm)},
      {"tau", fmt_double(tau)},
      {"K", std::to_string(K)},
      {"jitter_sigma", fmt_double(augment.jitter_sigma)},
      {"scale_lo", fmt_double(augment.scale_lo)},
      {"scale_hi", fmt_double(augment.scale_hi)},
      {"cutout_span", std::to_string(augment.cutout_span)},
      {"eta0", fmt_double(schedule.eta0)},
      {"cycle0", fmt_double(schedule.cycle0)},
      {"growth", fmt_double(schedule.growth)},
      {"restart_decay", fmt_double(schedule.restart_decay)},
      {"eta_min", fmt_double(schedule.eta_min)},
      {"momentum", fmt_double(momentum)},
      {"use_kl", flag(ablation.use_kl)},
      {"use_mixup", flag(ablation.use_mixup)},
      {"use_augment_policy", flag(ablation.use_augment_policy)},
      {"use_lambda", flag(ablation.use_lambda)},
      {"joint_labels", joint_labels == MislabeledLabels::pseudo ? "pseudo" : "selected"},
      {"train_on_clean_labels", flag(train_on_clean_labels)},
      {"eval_every", std::to_string(eval_every)},
      {"seed", std::to_string(seed)},
  };
}

std::string RunConfig::hash() const {
  // The seed is reported separately, so runs that differ only in seed share a hash.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [key, value] : entries()) {
    if (key == "seed") continue;
    for (char c : key + "=" + value + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

LossBreakdown total_loss(const Mlp& model, const StepTargets& targets) {
  check_targets(model, targets);
  const ForwardCache cx = model.forward_cached(targets.x);
  const ForwardCache ch = model.forward_cached(targets.x_hat);
  std::optional<ForwardCache> cm;
  if (targets.mix) cm = model.forward_cached(targets.mix->mixed_features);
  return losses_from({&cx, &ch, cm ? &*cm : nullptr}, targets);
}

std::pair<LossBreakdown, GradientVector> total_loss_and_gradient(const Mlp& model, const StepTargets& targets) {
  check_targets(model, targets);
  const ForwardCache cx = model.forward_cached(targets.x);
  const ForwardCache ch = model.forward_cached(targets.x_hat);
  std::optional<ForwardCache> cm;
  if (targets.mix) cm = model.forward_cached(targets.mix->mixed_features);
  const StepCaches caches{&cx, &ch, cm ? &*cm : nullptr};
  return {losses_from(caches, targets), gradient_from(model, caches, targets)};
}

StepReport train_step(Mlp& model, MomentumState& momentum, const TrainBatch& batch, const ProbeBatch& probe,
                      const RunConfig& cfg, std::size_t step, std::size_t steps_per_epoch) {
  const std::size_t B = batch.x.rows();
  if (B == 0) throw EmptyInputError("train_step: empty training batch");
  if (batch.labels.size() != B) throw DimensionError("train_step: label count does not match batch rows");
  if (cfg.method == Method::full && probe.x.rows() == 0) throw EmptyInputError("train_step: empty probe batch");
  if (steps_per_epoch == 0) throw std::invalid_argument("train_step: steps_per_epoch must be positive");

  const PassCounters before = pass_counters();
  const std::size_t C = model.num_classes();
  StepReport report;
  report.step = step;
  report.epoch = static_cast<double>(step) / static_cast<double>(steps_per_epoch);
  report.lr = lr_at(cfg.schedule, report.epoch);
  const Matrix y = one_hot_rows(batch.labels, C);
  const double w0 = 1.0 / static_cast<double>(B);

  GradientVector grad;
  if (cfg.method == Method::vanilla) {
    const ForwardCache cx = model.forward_cached(batch.x);
    for (std::size_t i = 0; i < B; ++i) report.loss_omega += w0 * soft_cross_entropy(y.row(i), cx.probs.row(i));
    report.total = report.loss_omega;
    report.train_acc = fraction_correct(cx.probs, batch.labels);
    grad = model.backward(cx, cross_entropy_logit_grad(cx.probs, y, std::vector<double>(B, w0)));
  } else {
    const std::uint64_t step_seed = derive_seed(cfg.seed, kStepTag, step);
    AugmentPolicy policy = cfg.augment;
    if (!cfg.ablation.use_augment_policy) {
      policy.jitter_sigma = 0.0;
      policy.scale_lo = policy.scale_hi = 1.0;
    }
    // Pseudo labels average K-1 augmented copies; the consistency loss and the joint batch always
    // need at least one, so K = 1 still draws a copy without averaging it in.
    const std::size_t n_copies = std::max<std::size_t>(cfg.K - 1, 1);
    std::vector<Matrix> copies;
    std::vector<ForwardCache> copy_caches;
    for (std::size_t k = 1; k <= n_copies; ++k) {
      copies.push_back(augment(batch.x, policy, derive_seed(step_seed, k)));
      copy_caches.push_back(model.forward_cached(copies.back()));
    }
    const ForwardCache cx = model.forward_cached(batch.x);
    if (!all_finite(cx.probs.values())) {
      throw NumericError("step " + std::to_string(step) + ": non-finite predictions on the training batch (lr=" +
                         fmt_double(report.lr) + ")");
    }
    std::vector<Matrix> aug_preds;
    for (std::size_t k = 0; k + 1 < cfg.K; ++k) aug_preds.push_back(copy_caches[k].probs);
    const PseudoLabelBatch pseudo = pseudo_labels_from_predictions(cx.probs, aug_preds, cfg.tau);

    MetaConfig meta = cfg.meta;
    meta.alpha_meta = report.lr;
    if (!cfg.ablation.use_lambda) meta.lambda0 = 1.0;
    const Matrix probe_y = one_hot_rows(probe.labels, C);
    DataCoefficients dc = compute_data_coefficients(model, momentum, cx, y, pseudo.g, probe.x, probe_y, meta);
    if (!cfg.ablation.use_lambda) {
      dc.lambda_star.assign(B, 1);
      dc.y_star = y;
    }
    const WeightSplit split = split_by_weight(dc.omega_star, cfg.T);

    StepTargets t;
    t.x = batch.x;
    t.x_hat = copies.front();
    t.p0 = mix_labels(y, pseudo.g, meta.lambda0);
    t.y_star = dc.y_star;
    t.omega_star = dc.omega_star;
    t.omega0 = w0;
    t.p = cfg.p;
    t.k = cfg.ablation.use_kl ? cfg.k : 0.0;
    std::optional<ForwardCache> cm;
    if (cfg.ablation.use_mixup) {
      const JointBatchInputs in{probe.x, probe_y, batch.x, y, copies.front(), pseudo.g, &dc.y_star};
      const JointBatch joint = build_joint_batch(in, split, cfg.joint_labels);
      t.mix = mixup_batch(joint, derive_seed(step_seed, kMixTag));
      cm = model.forward_cached(t.mix->mixed_features);
    }
    const StepCaches caches{&cx, &copy_caches.front(), cm ? &*cm : nullptr};
    const LossBreakdown losses = losses_from(caches, t);
    report.loss_omega = losses.omega;
    report.loss_lambda = losses.lambda;
    report.loss_mix_probe = losses.mix_probe;
    report.loss_mix_train = losses.mix_train;
    report.loss_kl = losses.kl;
    report.total = losses.total;
    report.probe_loss = dc.probe_loss;
    report.n_split_mislabeled = split.mislabeled.size();
    report.train_acc = fraction_correct(cx.probs, batch.labels);

    if (batch.clean_labels.size() == B) {
      double oc = 0.0, om = 0.0, lc = 0.0, lm = 0.0;
      for (std::size_t i = 0; i < B; ++i) {
        if (batch.labels[i] == batch.clean_labels[i]) {
          oc += dc.omega_star[i];
          lc += dc.lambda_star[i];
          ++report.n_clean;
        } else {
          om += dc.omega_star[i];
          lm += dc.lambda_star[i];
          ++report.n_mislabeled;
        }
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      report.omega_clean = report.n_clean ? oc / static_cast<double>(report.n_clean) : nan;
      report.lambda_clean = report.n_clean ? lc / static_cast<double>(report.n_clean) : nan;
      report.omega_mislabeled = report.n_mislabeled ? om / static_cast<double>(report.n_mislabeled) : nan;
      report.lambda_mislabeled = report.n_mislabeled ? lm / static_cast<double>(report.n_mislabeled) : nan;
    }
    grad = gradient_from(model, caches, t);
  }

  if (!std::isfinite(report.total) || !all_finite(grad)) {
    throw NumericError("step " + std::to_string(step) + ": non-finite loss (omega=" + fmt_double(report.loss_omega) +
                       " lambda=" + fmt_double(report.loss_lambda) + " mix_probe=" + fmt_double(report.loss_mix_probe) +
                       " mix_train=" + fmt_double(report.loss_mix_train) + " kl=" + fmt_double(report.loss_kl) +
                       " lr=" + fmt_double(report.lr) + ")");
  }
  sgd_momentum_step(model, momentum, grad, report.lr);

  const PassCounters& after = pass_counters();
  report.forward_equiv = static_cast<double>(after.forward_rows - before.forward_rows) / static_cast<double>(B);
  report.backward_equiv = static_cast<double>(after.backward_rows - before.backward_rows) / static_cast<double>(B);
  return report;
}

double evaluate(const Mlp& model, const Matrix& features, std::span<const int> labels) {
  if (features.rows() == 0) throw EmptyInputError("evaluate: no rows");
  if (labels.size() != features.rows()) throw DimensionError("evaluate: label count does not match rows");
  return fraction_correct(model.forward(features), labels);
}

std::size_t steps_per_epoch(std::size_t num_train, std::size_t batch_size) {
  return std::max<std::size_t>(1, num_train / batch_size);
}

std::size_t total_steps(const RunConfig& cfg, std::size_t num_train) {
  if (cfg.steps) return *cfg.steps;
  return static_cast<std::size_t>(std::llround(cfg.epochs * static_cast<double>(steps_per_epoch(num_train, cfg.batch_size))));
}

FitResult fit(const NoisyDataset& dataset, const RunConfig& cfg, const LabeledSet* eval) {
  cfg.validate();
  const std::size_t n = dataset.features.rows();
  const std::size_t d = dataset.feature_dim();
  if (dataset.num_classes < 2) throw std::invalid_argument("fit: need at least 2 categories");
  if (dataset.noisy_labels.size() != n || dataset.clean_labels.size() != n) {
    throw DimensionError("fit: label columns do not match feature rows");
  }
  if (eval != nullptr && eval->features.rows() > 0 && eval->features.cols() != d) {
    throw DimensionError("fit: evaluation features have " + std::to_string(eval->features.cols()) +
                         " columns, training has " + std::to_string(d));
  }

  std::vector<std::size_t> dims{d};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(dataset.num_classes);
  Mlp model = Mlp::initialized(dims, cfg.activation, derive_seed(cfg.seed, kInitTag));
  MomentumState momentum = MomentumState::zeros(model.num_params(), cfg.momentum);

  FitResult result;
  result.model = model;
  const std::size_t steps = total_steps(cfg, n);
  if (steps == 0) {
    result.final_model = model;
    return result;
  }
  if (n == 0) throw EmptyInputError("fit: empty training set");
  if (cfg.method == Method::full && dataset.probe_features.rows() == 0) {
    throw EmptyInputError("fit: the full method needs a nonempty probe set");
  }

  const std::vector<int>& train_labels = cfg.train_on_clean_labels ? dataset.clean_labels : dataset.noisy_labels;
  const std::size_t batch = std::min(cfg.batch_size, n);
  const std::size_t spe = steps_per_epoch(n, cfg.batch_size);
  const std::size_t m = dataset.probe_features.rows();
  const std::size_t mb = cfg.probe_batch_size;

  std::vector<std::size_t> order(n);
  std::vector<std::size_t> probe_order(m);
  std::iota(probe_order.begin(), probe_order.end(), std::size_t{0});
  double best_lr = std::numeric_limits<double>::infinity();
  result.history.reserve(steps);

  for (std::size_t step = 0; step < steps; ++step) {
    if (step % spe == 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::mt19937_64 rng(derive_seed(cfg.seed, kShuffleTag, step / spe));
      std::shuffle(order.begin(), order.end(), rng);
    }
    const std::span<const std::size_t> rows(order.data() + (step % spe) * batch, batch);
    TrainBatch tb;
    tb.x = dataset.features.select_rows(rows);
    for (std::size_t i : rows) {
      tb.labels.push_back(train_labels[i]);
      tb.clean_labels.push_back(dataset.clean_labels[i]);
    }

    ProbeBatch pb;
    if (cfg.method == Method::full) {
      std::mt19937_64 rng(derive_seed(cfg.seed, kProbeTag, step));
      std::vector<std::size_t> picked;
      if (m >= mb) {
        // Partial Fisher-Yates: first mb entries become a uniform sample without replacement.
        for (std::size_t i = 0; i < mb; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, m - 1);
          std::swap(probe_order[i], probe_order[pick(rng)]);
        }
        picked.assign(probe_order.begin(), probe_order.begin() + static_cast<std::ptrdiff_t>(mb));
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, m - 1);
        for (std::size_t i = 0; i < mb; ++i) picked.push_back(pick(rng));
      }
      pb.x = dataset.probe_features.select_rows(picked);
      for (std::size_t i : picked) pb.labels.push_back(dataset.probe_labels[i]);
    }

    StepReport report = train_step(model, momentum, tb, pb, cfg, step, spe);
    const bool last = step + 1 == steps;
    if (eval != nullptr && eval->features.rows() > 0 &&
        (last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0))) {
      report.eval_acc = evaluate(model, eval->features, eval->labels);
    }
    if (report.lr <= best_lr) {
      best_lr = report.lr;
      result.model = model;
      result.selected_step = step;
    }
    result.history.push_back(report);
  }
  result.final_model = std::move(model);
  return result;
}

std::string metrics_header() {
  return "config_hash,seed,step,epoch,lr,loss_omega,loss_lambda,loss_mix_probe,loss_mix_train,loss_kl,total,"
         "probe_loss,omega_clean,omega_mislabeled,lambda_clean,lambda_mislabeled,n_clean,n_mislabeled,"
         "n_split_mislabeled,train_acc,eval_acc,forward_equiv,backward_equiv";
}

std::string metrics_row(const StepReport& r, const RunConfig& cfg) {
  auto num = [](double v) { return std::isfinite(v) ? fmt_double(v) : std::string(); };
  std::string row = cfg.hash() + "," + std::to_string(cfg.seed) + "," + std::to_string(r.step);
  for (double v : {r.epoch, r.lr, r.loss_omega, r.loss_lambda, r.loss_mix_probe, r.loss_mix_train, r.loss_kl, r.total,
                   r.probe_loss, r.omega_clean, r.omega_mislabeled, r.lambda_clean, r.lambda_mislabeled}) {
    row += "," + num(v);
  }
  row += "," + std::to_string(r.n_clean) + "," + std::to_string(r.n_mislabeled) + "," + std::to_string(r.n_split_mislabeled);
  row += "," + num(r.train_acc) + "," + (r.eval_acc ? num(*r.eval_acc) : std::string());
  row += "," + num(r.forward_equiv) + "," + num(r.backward_equiv);
  return row;
}

std::string metrics_text(std::span<const StepReport> history, const RunConfig& cfg) {
  std::string out;
  for (const auto& [key, value] : cfg.entries()) out += "# " + key + "=" + value + "\n";
  out += "# config_hash=" + cfg.hash() + "\n";
  out += metrics_header() + "\n";
  for (const StepReport& r : history) out += metrics_row(r, cfg) + "\n";
  return out;
}

void write_metrics(std::span<const StepReport> history, const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << metrics_text(history, cfg);
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

CoefficientSummary summarize_coefficients(std::span<const StepReport> history) {
  double oc = 0.0, om = 0.0, lc = 0.0, lm = 0.0;
  std::size_t nc = 0, nm = 0;
  for (const StepReport& r : history) {
    if (r.n_clean > 0) {
      oc += r.omega_clean * static_cast<double>(r.n_clean);
      lc += r.lambda_clean * static_cast<double>(r.n_clean);
      nc += r.n_clean;
    }
    if (r.n_mislabeled > 0) {
      om += r.omega_mislabeled * static_cast<double>(r.n_mislabeled);
      lm += r.lambda_mislabeled * static_cast<double>(r.n_mislabeled);
      nm += r.n_mislabeled;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nc ? oc / static_cast<double>(nc) : nan, nm ? om / static_cast<double>(nm) : nan,
          nc ? lc / static_cast<double>(nc) : nan, nm ? lm / static_cast<double>(nm) : nan};
}

}  // namespace dcoef
