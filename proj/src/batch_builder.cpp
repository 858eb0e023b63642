#include "dcoef/batch_builder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "dcoef/augment.hpp"
#include "dcoef/losses.hpp"

namespace dcoef {

const char* to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::probe: return "probe";
    case SourceTag::clean: return "clean";
    case SourceTag::mislabeled: return "mislabeled";
    case SourceTag::aug_clean: return "aug_clean";
    case SourceTag::aug_mislabeled: return "aug_mislabeled";
  }
  return "?";
}

WeightSplit split_by_weight(std::span<const double> omega_star, double threshold) {
  WeightSplit split;
  for (std::size_t i = 0; i < omega_star.size(); ++i) {
    (omega_star[i] < threshold ? split.mislabeled : split.clean).push_back(i);
  }
  return split;
}

double BetaSampler::next() {
  for (;;) {
    std::mt19937_64 rng(derive_seed(seed_, index_++));
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double s = std::sin(0.5 * std::numbers::pi * u);
    const double beta = s * s;
    if (beta > 0.0 && beta < 1.0) return beta;
  }
}

double sample_beta(std::uint64_t seed, std::uint64_t draw_index) {
  BetaSampler sampler(seed);
  double beta = 0.0;
  for (std::uint64_t i = 0; i <= draw_index; ++i) beta = sampler.next();
  return beta;
}

JointBatch build_joint_batch(const JointBatchInputs& in, const WeightSplit& split, MislabeledLabels policy) {
  const std::size_t n = in.train_x.rows();
  if (in.probe_x.rows() != in.probe_y.rows()) throw DimensionError("joint batch: probe rows and labels differ");
  if (in.train_y.rows() != n || in.train_aug.rows() != n || in.pseudo.rows() != n) {
    throw DimensionError("joint batch: training features " + in.train_x.shape_string() + ", labels " +
                         in.train_y.shape_string() + ", augmented " + in.train_aug.shape_string() +
                         ", pseudo labels " + in.pseudo.shape_string() + " disagree");
  }
  if (n > 0 && in.probe_x.rows() > 0 &&
      (in.probe_x.cols() != in.train_x.cols() || in.probe_y.cols() != in.train_y.cols())) {
    throw DimensionError("joint batch: probe " + in.probe_x.shape_string() + " vs train " + in.train_x.shape_string());
  }
  if (split.clean.size() + split.mislabeled.size() != n) {
    throw std::invalid_argument("joint batch: split does not cover the training batch");
  }
  const Matrix* mislabeled_source = &in.pseudo;
  if (policy == MislabeledLabels::selected) {
    if (in.selected == nullptr || in.selected->rows() != n) {
      throw std::invalid_argument("joint batch: selected labels required for this policy");
    }
    mislabeled_source = in.selected;
  }

  JointBatch out;
  out.features = in.probe_x;
  out.labels = in.probe_y;
  out.source_tags.assign(in.probe_x.rows(), SourceTag::probe);

  auto add = [&](const Matrix& features, std::size_t i, std::span<const double> label, SourceTag tag) {
    if (i >= n) throw std::out_of_range("joint batch: split index out of range");
    out.features.append_row(features.row(i));
    out.labels.append_row(label);
    out.source_tags.push_back(tag);
  };
  for (std::size_t i : split.mislabeled) add(in.train_x, i, mislabeled_source->row(i), SourceTag::mislabeled);
  for (std::size_t i : split.clean) add(in.train_x, i, in.train_y.row(i), SourceTag::clean);
  for (std::size_t i : split.mislabeled) add(in.train_aug, i, mislabeled_source->row(i), SourceTag::aug_mislabeled);
  for (std::size_t i : split.clean) add(in.train_aug, i, in.train_y.row(i), SourceTag::aug_clean);
  return out;
}

MixupBatch mixup_with(const JointBatch& joint, std::span<const std::size_t> permutation,
                      std::span<const double> betas) {
  const std::size_t n = joint.features.rows();
  if (permutation.size() != n || betas.size() != n) {
    throw DimensionError("mixup: permutation/beta length does not match " + std::to_string(n) + " rows");
  }
  MixupBatch mix;
  mix.mixed_features = Matrix(n, joint.features.cols());
  mix.mixed_labels = Matrix(n, joint.labels.cols());
  mix.anchor_is_probe.resize(n);
  mix.beta_values.assign(betas.begin(), betas.end());
  mix.partner.assign(permutation.begin(), permutation.end());
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t b = permutation[a];
    if (b >= n) throw std::out_of_range("mixup: permutation entry out of range");
    const double beta = betas[a];
    auto fx = mix.mixed_features.row(a);
    for (std::size_t j = 0; j < fx.size(); ++j) fx[j] = beta * joint.features(a, j) + (1.0 - beta) * joint.features(b, j);
    auto fy = mix.mixed_labels.row(a);
    for (std::size_t c = 0; c < fy.size(); ++c) fy[c] = beta * joint.labels(a, c) + (1.0 - beta) * joint.labels(b, c);
    mix.anchor_is_probe[a] = joint.source_tags[a] == SourceTag::probe;
  }
  return mix;
}

MixupBatch mixup_batch(const JointBatch& joint, std::uint64_t seed) {
  const std::size_t n = joint.features.rows();
  if (n == 0) throw EmptyInputError("mixup_batch: empty joint batch");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0x6d6978));
  std::shuffle(perm.begin(), perm.end(), rng);
  BetaSampler sampler(derive_seed(seed, 0x62657461));
  std::vector<double> betas(n);
  for (double& b : betas) b = sampler.next();
  return mixup_with(joint, perm, betas);
}

MixupLosses mixup_losses_from_predictions(const Matrix& probs, const MixupBatch& mix) {
  if (probs.rows() != mix.mixed_labels.rows()) throw DimensionError("mixup losses: prediction rows differ");
  MixupLosses out;
  std::size_t n_probe = 0;
  std::size_t n_train = 0;
  for (std::size_t a = 0; a < probs.rows(); ++a) {
    const double ce = soft_cross_entropy(mix.mixed_labels.row(a), probs.row(a));
    if (mix.anchor_is_probe[a]) {
      out.probe += ce;
      ++n_probe;
    } else {
      out.train += ce;
      ++n_train;
    }
  }
  if (n_probe > 0) out.probe /= static_cast<double>(n_probe);
  if (n_train > 0) out.train /= static_cast<double>(n_train);
  return out;
}

MixupLosses mixup_losses(const Mlp& model, const MixupBatch& mix) {
  if (mix.mixed_features.rows() == 0) return {};
  return mixup_losses_from_predictions(model.forward(mix.mixed_features), mix);
}

Matrix mixup_logit_grad(const Matrix& probs, const MixupBatch& mix, double probe_weight, double train_weight) {
  const std::size_t n = probs.rows();
  const auto n_probe = static_cast<std::size_t>(std::count(mix.anchor_is_probe.begin(), mix.anchor_is_probe.end(), true));
  const std::size_t n_train = n - n_probe;
  std::vector<double> w(n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    if (mix.anchor_is_probe[a]) {
      w[a] = probe_weight / static_cast<double>(n_probe);
    } else {
      w[a] = train_weight / static_cast<double>(n_train);
    }
  }
  return cross_entropy_logit_grad(probs, mix.mixed_labels, w);
}

}  // namespace dcoef
