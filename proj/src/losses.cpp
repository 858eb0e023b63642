#include "dcoef/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dcoef {
namespace {

void check_same_length(std::span<const double> a, std::span<const double> b, const char* op) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(op) + ": distributions over " + std::to_string(a.size()) +
                         " and " + std::to_string(b.size()) + " categories");
  }
}

}  // namespace

bool is_distribution(std::span<const double> p, double tol) {
  if (p.empty()) return false;
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= tol;
}

LabelDistribution one_hot(std::size_t category, std::size_t num_categories) {
  if (category >= num_categories) throw std::out_of_range("one_hot: category out of range");
  LabelDistribution out(num_categories, 0.0);
  out[category] = 1.0;
  return out;
}

Matrix one_hot_rows(std::span<const int> labels, std::size_t num_categories) {
  Matrix out(labels.size(), num_categories);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_categories) {
      throw std::out_of_range("one_hot_rows: label " + std::to_string(labels[i]) + " out of range");
    }
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

double soft_cross_entropy(std::span<const double> target, std::span<const double> pred) {
  check_same_length(target, pred, "soft_cross_entropy");
  double loss = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    if (target[c] == 0.0) continue;
    loss -= target[c] * std::log(std::max(pred[c], kLogEps));
  }
  return loss;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_same_length(p, q, "kl_divergence");
  double kl = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] <= 0.0) continue;
    kl += p[c] * (std::log(p[c]) - std::log(std::max(q[c], kLogEps)));
  }
  // Clamping can push an exact-match KL a hair below zero.
  return std::max(kl, 0.0);
}

LabelDistribution sharpen(std::span<const double> pr, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("sharpen: temperature must be positive");
  LabelDistribution out(pr.begin(), pr.end());
  // Scale by the largest entry so a small tau cannot underflow every term.
  const double mx = *std::max_element(out.begin(), out.end());
  if (!(mx > 0.0)) throw std::invalid_argument("sharpen: cannot normalize an all-zero vector");
  const double inv_tau = 1.0 / tau;
  double total = 0.0;
  for (double& v : out) {
    v = v > 0.0 ? std::pow(v / mx, inv_tau) : 0.0;
    total += v;
  }
  for (double& v : out) v /= total;
  return out;
}

Matrix sharpen_rows(const Matrix& pr, double tau) {
  Matrix out(pr.rows(), pr.cols());
  for (std::size_t i = 0; i < pr.rows(); ++i) {
    const auto g = sharpen(pr.row(i), tau);
    std::copy(g.begin(), g.end(), out.row(i).begin());
  }
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

}  // namespace dcoef
