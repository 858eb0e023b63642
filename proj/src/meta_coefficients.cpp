#include "dcoef/meta_coefficients.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "dcoef/losses.hpp"

namespace dcoef {
namespace {

void check_labels(const Matrix& y, const Matrix& g, std::size_t batch, std::size_t classes) {
  if (y.rows() != batch || g.rows() != batch || y.cols() != classes || g.cols() != classes) {
    throw DimensionError("meta step: labels " + y.shape_string() + " and pseudo labels " +
                         g.shape_string() + " for a batch of " + std::to_string(batch) + " over " +
                         std::to_string(classes) + " categories");
  }
}

// theta' for arbitrary per-example weights and label-mixing coefficients.
std::vector<double> lookahead_with(const Mlp& model, const MomentumState& momentum, const Matrix& x,
                                   const Matrix& y, const Matrix& g, std::span<const double> omegas,
                                   std::span<const double> lambdas, double alpha) {
  const GradientVector grad = grad_weighted_loss(model, x, mix_labels(y, g, lambdas), omegas);
  std::vector<double> theta(model.params().begin(), model.params().end());
  for (std::size_t j = 0; j < theta.size(); ++j) {
    theta[j] -= alpha * (momentum.mu * momentum.velocity[j] + grad[j]);
  }
  return theta;
}

}  // namespace

void MetaConfig::validate() const {
  if (!(lambda0 >= 0.0 && lambda0 <= 1.0)) throw std::invalid_argument("meta: lambda0 must lie in [0, 1]");
  if (!(alpha_meta >= 0.0)) throw std::invalid_argument("meta: alpha_meta must be >= 0");
  if (!(eps_norm >= 0.0)) throw std::invalid_argument("meta: eps_norm must be >= 0");
}

Matrix mix_labels(const Matrix& y, const Matrix& g, double lambda) {
  const std::vector<double> lambdas(y.rows(), lambda);
  return mix_labels(y, g, lambdas);
}

Matrix mix_labels(const Matrix& y, const Matrix& g, std::span<const double> lambdas) {
  if (y.rows() != g.rows() || y.cols() != g.cols() || lambdas.size() != y.rows()) {
    throw DimensionError("mix_labels: " + y.shape_string() + " vs " + g.shape_string() + " with " +
                         std::to_string(lambdas.size()) + " coefficients");
  }
  Matrix out(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    for (std::size_t c = 0; c < y.cols(); ++c) out(i, c) = lambdas[i] * y(i, c) + (1.0 - lambdas[i]) * g(i, c);
  }
  return out;
}

double mean_cross_entropy(const Mlp& model, const Matrix& x, const Matrix& targets) {
  if (x.rows() == 0) throw EmptyInputError("mean_cross_entropy: empty batch");
  const Matrix probs = model.forward(x);
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) total += soft_cross_entropy(targets.row(i), probs.row(i));
  return total / static_cast<double>(x.rows());
}

std::vector<double> lookahead_params(const Mlp& model, const MomentumState& momentum, const Matrix& x,
                                     const Matrix& y, const Matrix& g, const MetaConfig& cfg) {
  cfg.validate();
  check_labels(y, g, x.rows(), model.num_classes());
  if (x.rows() == 0) return {model.params().begin(), model.params().end()};
  const std::vector<double> omegas(x.rows(), 1.0 / static_cast<double>(x.rows()));
  const std::vector<double> lambdas(x.rows(), cfg.lambda0);
  return lookahead_with(model, momentum, x, y, g, omegas, lambdas, cfg.alpha_meta);
}

MetaGradients meta_gradients(const Mlp& model, const MomentumState& momentum, const Matrix& x,
                             const Matrix& y, const Matrix& g, const Matrix& probe_x,
                             const Matrix& probe_y, const MetaConfig& cfg) {
  return meta_gradients(model, momentum, model.forward_cached(x), y, g, probe_x, probe_y, cfg);
}

MetaGradients meta_gradients(const Mlp& model, const MomentumState& momentum, const ForwardCache& train,
                             const Matrix& y, const Matrix& g, const Matrix& probe_x,
                             const Matrix& probe_y, const MetaConfig& cfg) {
  cfg.validate();
  if (probe_x.rows() == 0) throw EmptyInputError("meta_gradients: empty probe batch");
  if (probe_y.rows() != probe_x.rows()) throw DimensionError("meta_gradients: probe labels do not match probe rows");
  const std::size_t batch = train.probs.rows();
  check_labels(y, g, batch, model.num_classes());

  MetaGradients out;
  out.d_omega.assign(batch, 0.0);
  out.d_lambda.assign(batch, 0.0);
  const double w0 = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
  const double lambda0 = cfg.lambda0;
  const double alpha = cfg.alpha_meta;

  const std::vector<double> ones(batch, 1.0);
  const auto grads_y = model.backward_per_example(train, cross_entropy_logit_grad(train.probs, y, ones));
  const auto grads_g = model.backward_per_example(train, cross_entropy_logit_grad(train.probs, g, ones));

  std::vector<double> theta(model.params().begin(), model.params().end());
  for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= alpha * momentum.mu * momentum.velocity[j];
  for (std::size_t i = 0; i < batch; ++i) {
    axpy(-alpha * w0 * lambda0, grads_y[i], theta);
    axpy(-alpha * w0 * (1.0 - lambda0), grads_g[i], theta);
  }

  const Mlp ahead = model.with_params(theta);
  const std::vector<double> probe_w(probe_x.rows(), 1.0 / static_cast<double>(probe_x.rows()));
  const auto probe_cache = ahead.forward_cached(probe_x);
  const GradientVector gp = ahead.backward(probe_cache, cross_entropy_logit_grad(probe_cache.probs, probe_y, probe_w));
  for (std::size_t i = 0; i < probe_x.rows(); ++i) {
    out.probe_loss += soft_cross_entropy(probe_y.row(i), probe_cache.probs.row(i));
  }
  out.probe_loss /= static_cast<double>(probe_x.rows());

  for (std::size_t i = 0; i < batch; ++i) {
    const double gy = dot(gp, grads_y[i]);
    const double gg = dot(gp, grads_g[i]);
    out.d_omega[i] = -alpha * (lambda0 * gy + (1.0 - lambda0) * gg);
    out.d_lambda[i] = -alpha * w0 * (gy - gg);
  }
  return out;
}

std::vector<double> omega_star(std::span<const double> d_omega, const MetaConfig& cfg) {
  const std::size_t batch = d_omega.size();
  if (batch == 0) return {};
  const double w0 = 1.0 / static_cast<double>(batch);
  std::vector<double> w(batch);
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    w[i] = std::max(w0 - d_omega[i], 0.0);
    total += w[i];
  }
  if (total > cfg.eps_norm) {
    for (double& v : w) v /= total;
  } else {
    std::fill(w.begin(), w.end(), w0);
  }
  return w;
}

std::vector<int> lambda_star(std::span<const double> d_lambda, const MetaConfig& cfg) {
  std::vector<int> out(d_lambda.size());
  for (std::size_t i = 0; i < d_lambda.size(); ++i) {
    if (d_lambda[i] < 0.0) {
      out[i] = 1;
    } else if (d_lambda[i] > 0.0) {
      out[i] = 0;
    } else {
      out[i] = cfg.tiebreak == TieBreak::original ? 1 : 0;
    }
  }
  return out;
}

Matrix select_labels(std::span<const int> lambda_star, const Matrix& y, const Matrix& g) {
  if (lambda_star.size() != y.rows() || y.rows() != g.rows() || y.cols() != g.cols()) {
    throw DimensionError("select_labels: " + std::to_string(lambda_star.size()) + " selections for labels " +
                         y.shape_string() + " and pseudo labels " + g.shape_string());
  }
  Matrix out(y.rows(), y.cols());
  for (std::size_t i = 0; i < y.rows(); ++i) {
    const auto src = lambda_star[i] > 0 ? y.row(i) : g.row(i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

DataCoefficients compute_data_coefficients(const Mlp& model, const MomentumState& momentum,
                                           const ForwardCache& train, const Matrix& y, const Matrix& g,
                                           const Matrix& probe_x, const Matrix& probe_y,
                                           const MetaConfig& cfg) {
  MetaGradients mg = meta_gradients(model, momentum, train, y, g, probe_x, probe_y, cfg);
  DataCoefficients out;
  out.omega_star = omega_star(mg.d_omega, cfg);
  out.lambda_star = lambda_star(mg.d_lambda, cfg);
  out.y_star = select_labels(out.lambda_star, y, g);
  out.d_omega = std::move(mg.d_omega);
  out.d_lambda = std::move(mg.d_lambda);
  out.probe_loss = mg.probe_loss;
  return out;
}

double fd_meta_gradient(const Mlp& model, const MomentumState& momentum, const Matrix& x, const Matrix& y,
                        const Matrix& g, const Matrix& probe_x, const Matrix& probe_y,
                        const MetaConfig& cfg, std::size_t index, MetaCoefficient which, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_meta_gradient: step must be positive");
  if (index >= x.rows()) throw std::out_of_range("fd_meta_gradient: example index out of range");
  check_labels(y, g, x.rows(), model.num_classes());

  auto probe_loss_at = [&](double delta) {
    std::vector<double> omegas(x.rows(), 1.0 / static_cast<double>(x.rows()));
    std::vector<double> lambdas(x.rows(), cfg.lambda0);
    (which == MetaCoefficient::omega ? omegas : lambdas)[index] += delta;
    const auto theta = lookahead_with(model, momentum, x, y, g, omegas, lambdas, cfg.alpha_meta);
    return mean_cross_entropy(model.with_params(theta), probe_x, probe_y);
  };
  return (probe_loss_at(h) - probe_loss_at(-h)) / (2.0 * h);
}

}  // namespace dcoef
