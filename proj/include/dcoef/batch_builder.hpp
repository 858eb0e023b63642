#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dcoef/model.hpp"

namespace dcoef {

enum class SourceTag { probe, clean, mislabeled, aug_clean, aug_mislabeled };

const char* to_string(SourceTag tag);

struct WeightSplit {
  std::vector<std::size_t> clean;
  std::vector<std::size_t> mislabeled;
};

/// Example i is treated as possibly mislabeled iff omega_star_i < threshold.
WeightSplit split_by_weight(std::span<const double> omega_star, double threshold);

/// Beta(0.5, 0.5) sampler (arcsine law, beta = sin^2(pi u / 2)). Draws of exactly 0 or 1
/// are rejected so a mixed row never coincides with either endpoint.
class BetaSampler {
 public:
  explicit BetaSampler(std::uint64_t seed) : seed_(seed) {}
  double next();
  std::uint64_t draws() const { return index_; }

 private:
  std::uint64_t seed_;
  std::uint64_t index_ = 0;
};

/// Draw number `draw_index` of the stream keyed by `seed`.
double sample_beta(std::uint64_t seed, std::uint64_t draw_index = 0);

struct JointBatch {
  Matrix features;
  Matrix labels;
  std::vector<SourceTag> source_tags;
};

/// Labels for rows judged possibly mislabeled.
enum class MislabeledLabels { pseudo, selected };

struct JointBatchInputs {
  const Matrix& probe_x;
  const Matrix& probe_y;
  const Matrix& train_x;
  const Matrix& train_y;  // original (possibly noisy) labels
  const Matrix& train_aug;
  const Matrix& pseudo;   // g, one row per training example
  const Matrix* selected = nullptr;  // y*, required for MislabeledLabels::selected
};

/// Rows in order: probe, mislabeled, clean, augmented mislabeled, augmented clean.
/// Clean rows keep their original label, mislabeled rows take the pseudo (or selected) label,
/// and every augmented row carries the label of its source row.
JointBatch build_joint_batch(const JointBatchInputs& in, const WeightSplit& split,
                             MislabeledLabels policy = MislabeledLabels::pseudo);

struct MixupBatch {
  Matrix mixed_features;
  Matrix mixed_labels;
  std::vector<bool> anchor_is_probe;
  std::vector<double> beta_values;
  std::vector<std::size_t> partner;  // row of the joint batch each anchor was mixed with
};

/// Row a is mixed with row perm[a]: beta_a * row_a + (1 - beta_a) * row_perm[a].
MixupBatch mixup_with(const JointBatch& joint, std::span<const std::size_t> permutation,
                      std::span<const double> betas);

/// One random permutation over the whole joint pool and one Beta draw per row.
MixupBatch mixup_batch(const JointBatch& joint, std::uint64_t seed);

struct MixupLosses {
  double probe = 0.0;  // mean CE over probe-anchored rows (0 if there are none)
  double train = 0.0;  // mean CE over the remaining rows (0 if there are none)
};

MixupLosses mixup_losses_from_predictions(const Matrix& probs, const MixupBatch& mix);
MixupLosses mixup_losses(const Mlp& model, const MixupBatch& mix);

/// d(probe_weight * L_probe + train_weight * L_train) / d logits.
Matrix mixup_logit_grad(const Matrix& probs, const MixupBatch& mix, double probe_weight, double train_weight);

}  // namespace dcoef
