#pragma once

#include <span>
#include <vector>

#include "dcoef/tensor.hpp"

namespace dcoef {

/// Lower clamp applied to probabilities inside every logarithm.
inline constexpr double kLogEps = 1e-12;

/// A probability vector over C categories: soft label, prediction or pseudo label.
/// Batches of distributions are stored as the rows of a Matrix.
using LabelDistribution = std::vector<double>;

bool is_distribution(std::span<const double> p, double tol = 1e-9);

LabelDistribution one_hot(std::size_t category, std::size_t num_categories);
Matrix one_hot_rows(std::span<const int> labels, std::size_t num_categories);

/// -sum_c target_c * ln(max(pred_c, kLogEps))
double soft_cross_entropy(std::span<const double> target, std::span<const double> pred);

/// KL(p || q) = sum_c p_c ln(p_c / q_c), with 0 ln 0 = 0 and q clamped below by kLogEps.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Temperature sharpening: pr_i^(1/tau) / sum_j pr_j^(1/tau).
LabelDistribution sharpen(std::span<const double> pr, double tau);
Matrix sharpen_rows(const Matrix& pr, double tau);

double entropy(std::span<const double> p);

}  // namespace dcoef
