#include "dcoef/pseudo_labeler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dcoef/losses.hpp"

namespace dcoef {

PseudoLabelBatch pseudo_labels_from_predictions(const Matrix& base_pred,
                                                std::span<const Matrix> augmented_preds, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("pseudo labels: tau must lie in (0, 1]");
  PseudoLabelBatch out;
  out.tau = tau;
  out.K = augmented_preds.size() + 1;
  out.pr_raw = base_pred;
  for (const Matrix& p : augmented_preds) {
    if (p.rows() != base_pred.rows() || p.cols() != base_pred.cols()) {
      throw DimensionError("pseudo labels: augmented prediction " + p.shape_string() + " vs " +
                           base_pred.shape_string());
    }
    axpy(1.0, p.values(), out.pr_raw.values());
  }
  const double inv_k = 1.0 / static_cast<double>(out.K);
  for (double& v : out.pr_raw.values()) v *= inv_k;
  out.g = sharpen_rows(out.pr_raw, tau);
  return out;
}

PseudoLabelBatch estimate_pseudo_labels(const Mlp& model, const Matrix& x, const AugmentPolicy& policy,
                                        std::size_t K, double tau, std::uint64_t seed) {
  if (K == 0) throw std::invalid_argument("pseudo labels: K must be at least 1");
  std::vector<Matrix> copies;
  std::vector<Matrix> preds;
  for (std::size_t k = 1; k < K; ++k) {
    copies.push_back(augment(x, policy, derive_seed(seed, k)));
    preds.push_back(model.forward(copies.back()));
  }
  PseudoLabelBatch out = pseudo_labels_from_predictions(model.forward(x), preds, tau);
  out.augmented = std::move(copies);
  return out;
}

double kl_consistency_from_predictions(const Matrix& clean_pred, const Matrix& augmented_pred) {
  if (clean_pred.rows() != augmented_pred.rows() || clean_pred.cols() != augmented_pred.cols()) {
    throw DimensionError("kl_consistency: " + clean_pred.shape_string() + " vs " +
                         augmented_pred.shape_string());
  }
  if (clean_pred.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < clean_pred.rows(); ++i) {
    total += kl_divergence(clean_pred.row(i), augmented_pred.row(i));
  }
  return total / static_cast<double>(clean_pred.rows());
}

double kl_consistency_loss(const Mlp& model, const Matrix& x, const Matrix& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) {
    throw DimensionError("kl_consistency: inputs " + x.shape_string() + " vs " + x_hat.shape_string());
  }
  return kl_consistency_from_predictions(model.forward(x), model.forward(x_hat));
}

KlLogitGrads kl_consistency_logit_grads(const Matrix& clean_pred, const Matrix& augmented_pred) {
  const std::size_t n = clean_pred.rows();
  KlLogitGrads out{Matrix(n, clean_pred.cols()), Matrix(n, clean_pred.cols())};
  if (n == 0) return out;
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto p = clean_pred.row(i);
    auto q = augmented_pred.row(i);
    // d/dz_p: p_j (a_j - sum_k p_k a_k) with a = ln p - ln q; d/dz_q: q - p.
    std::vector<double> a(p.size(), 0.0);
    double mean_a = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (p[c] <= 0.0) continue;
      a[c] = std::log(p[c]) - std::log(std::max(q[c], kLogEps));
      mean_a += p[c] * a[c];
    }
    auto dp = out.d_clean.row(i);
    auto dq = out.d_augmented.row(i);
    for (std::size_t c = 0; c < p.size(); ++c) {
      dp[c] = scale * p[c] * (a[c] - mean_a);
      dq[c] = scale * (q[c] - p[c]);
    }
  }
  return out;
}

}  // namespace dcoef
