#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dcoef/augment.hpp"
#include "dcoef/model.hpp"

namespace dcoef {

struct PseudoLabelBatch {
  Matrix g;       // sharpened pseudo labels, one row per input
  Matrix pr_raw;  // averaged predictions before sharpening
  double tau = 0.5;
  std::size_t K = 2;
  // The K-1 augmented copies that were fed to the model, in draw order.
  std::vector<Matrix> augmented;
};

/// Pr = (base + sum of the K-1 augmented predictions) / K, then g = sharpen(Pr, tau).
/// The result holds plain values; nothing downstream differentiates through it.
PseudoLabelBatch pseudo_labels_from_predictions(const Matrix& base_pred,
                                                std::span<const Matrix> augmented_preds, double tau);

/// Augmentation k (1-based) is drawn with derive_seed(seed, k).
PseudoLabelBatch estimate_pseudo_labels(const Mlp& model, const Matrix& x, const AugmentPolicy& policy,
                                        std::size_t K, double tau, std::uint64_t seed);

/// Mean over rows of KL(clean_i || augmented_i).
double kl_consistency_from_predictions(const Matrix& clean_pred, const Matrix& augmented_pred);

double kl_consistency_loss(const Mlp& model, const Matrix& x, const Matrix& x_hat);

/// d(mean_i KL(p_i || q_i)) with respect to the logits of both arguments,
/// where p = softmax(logits_p) and q = softmax(logits_q).
struct KlLogitGrads {
  Matrix d_clean;
  Matrix d_augmented;
};
KlLogitGrads kl_consistency_logit_grads(const Matrix& clean_pred, const Matrix& augmented_pred);

}  // namespace dcoef
