#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcoef/augment.hpp"
#include "dcoef/batch_builder.hpp"
#include "dcoef/meta_coefficients.hpp"
#include "dcoef/model.hpp"
#include "dcoef/noise_harness.hpp"
#include "dcoef/schedule.hpp"

namespace dcoef {

enum class Method {
  full,     // meta-learned data coefficients with pseudo labels, mixup and consistency
  vanilla,  // plain cross-entropy on the given labels
};

std::string to_string(Method m);
Method parse_method(const std::string& name);

/// Component switches for ablation runs; all on is the full method.
struct Ablation {
  bool use_kl = true;              // consistency loss (k forced to 0 when off)
  bool use_mixup = true;           // both mixup losses
  bool use_augment_policy = true;  // jitter and scale; an explicit cutout span is kept when off
  bool use_lambda = true;          // meta re-labeling; off means lambda0 = 1 and y* = y
};

struct RunConfig {
  std::vector<std::size_t> hidden_dims{64, 64};
  Activation activation = Activation::relu;
  std::size_t batch_size = 64;
  std::size_t probe_batch_size = 40;
  double epochs = 49.2578125;  // end of the eighth cosine cycle
  std::optional<std::size_t> steps;  // overrides epochs when set
  double p = 5.0;   // weight of the training-anchored mixup loss
  double k = 20.0;  // weight of the consistency loss
  double T = 1.0;   // omega* threshold below which an example counts as possibly mislabeled
  MetaConfig meta;
  double tau = 0.5;
  std::size_t K = 2;
  AugmentPolicy augment;
  LrSchedule schedule;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  Method method = Method::full;
  Ablation ablation;
  MislabeledLabels joint_labels = MislabeledLabels::pseudo;
  bool train_on_clean_labels = false;  // reference baselines only
  std::size_t eval_every = 0;          // steps between held-out evaluations; 0 = last step only

  void validate() const;
  /// Resolved settings in a fixed order, as printed into metrics files.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// 64-bit FNV-1a of the "key=value\n" lines of entries(), as 16 hex digits.
  std::string hash() const;
};

struct StepReport {
  std::size_t step = 0;
  double epoch = 0.0;
  double lr = 0.0;
  double loss_omega = 0.0;
  double loss_lambda = 0.0;
  double loss_mix_probe = 0.0;
  double loss_mix_train = 0.0;
  double loss_kl = 0.0;
  double total = 0.0;
  double probe_loss = 0.0;  // probe loss at the lookahead parameters
  // Coefficient means split by the hidden clean labels; NaN when the group is empty.
  double omega_clean = 0.0;
  double omega_mislabeled = 0.0;
  double lambda_clean = 0.0;
  double lambda_mislabeled = 0.0;
  std::size_t n_clean = 0;
  std::size_t n_mislabeled = 0;
  std::size_t n_split_mislabeled = 0;  // rows below the omega* threshold
  double train_acc = 0.0;              // batch accuracy against the training labels, before the update
  std::optional<double> eval_acc;
  double forward_equiv = 0.0;   // rows forwarded / batch size
  double backward_equiv = 0.0;  // rows back-propagated / batch size
};

struct TrainBatch {
  Matrix x;
  std::vector<int> labels;                  // labels used for training (noisy)
  std::vector<int> clean_labels;            // optional; only for coefficient diagnostics
};

struct ProbeBatch {
  Matrix x;
  std::vector<int> labels;
};

/// Everything the total loss needs once the meta step is done. All label-like members are
/// plain values, so nothing differentiates through pseudo labels or coefficients.
struct StepTargets {
  Matrix x;
  Matrix x_hat;
  Matrix p0;          // P(lambda0) labels
  Matrix y_star;
  std::vector<double> omega_star;
  double omega0 = 0.0;
  std::optional<MixupBatch> mix;
  double p = 0.0;
  double k = 0.0;
};

struct LossBreakdown {
  double omega = 0.0;
  double lambda = 0.0;
  double mix_probe = 0.0;
  double mix_train = 0.0;
  double kl = 0.0;
  double total = 0.0;  // omega + lambda + mix_probe + p * mix_train + k * kl
};

LossBreakdown total_loss(const Mlp& model, const StepTargets& targets);
std::pair<LossBreakdown, GradientVector> total_loss_and_gradient(const Mlp& model, const StepTargets& targets);

/// One training step at learning rate lr_at(step / steps_per_epoch).
StepReport train_step(Mlp& model, MomentumState& momentum, const TrainBatch& batch, const ProbeBatch& probe,
                      const RunConfig& cfg, std::size_t step, std::size_t steps_per_epoch);

/// Fraction of rows whose argmax prediction (lowest index on ties) equals the label.
double evaluate(const Mlp& model, const Matrix& features, std::span<const int> labels);

struct FitResult {
  Mlp model;        // checkpoint taken right after the lowest-learning-rate step
  Mlp final_model;
  std::optional<std::size_t> selected_step;
  std::vector<StepReport> history;
};

std::size_t steps_per_epoch(std::size_t num_train, std::size_t batch_size);
std::size_t total_steps(const RunConfig& cfg, std::size_t num_train);

/// `eval` (optional) is scored every cfg.eval_every steps and on the last step.
FitResult fit(const NoisyDataset& dataset, const RunConfig& cfg, const LabeledSet* eval = nullptr);

/// Comma-separated metrics: "# key=value" lines for the resolved config, one header line,
/// then one row per step in the column order of metrics_header().
std::string metrics_header();
std::string metrics_row(const StepReport& r, const RunConfig& cfg);
std::string metrics_text(std::span<const StepReport> history, const RunConfig& cfg);
void write_metrics(std::span<const StepReport> history, const RunConfig& cfg, const std::filesystem::path& path);

/// Aggregate of the coefficient diagnostics over a slice of history, weighted by group size.
struct CoefficientSummary {
  double omega_clean = 0.0;
  double omega_mislabeled = 0.0;
  double lambda_clean = 0.0;
  double lambda_mislabeled = 0.0;
};
CoefficientSummary summarize_coefficients(std::span<const StepReport> history);

}  // namespace dcoef
