#pragma once

#include <span>
#include <vector>

#include "dcoef/model.hpp"

namespace dcoef {

/// Which label an example keeps when its label-selection gradient is exactly zero.
enum class TieBreak { original, pseudo };

struct MetaConfig {
  double lambda0 = 0.9;     // initial label-mixing coefficient, leans to the original label
  double alpha_meta = 0.1;  // lookahead step size; the trainer sets it to the scheduled lr
  double eps_norm = 1e-12;  // below this total the rectified weights fall back to uniform
  TieBreak tiebreak = TieBreak::original;

  void validate() const;
};

/// Raw derivatives of the probe loss through the one-step lookahead, at (omega0, lambda0).
struct MetaGradients {
  std::vector<double> d_omega;
  std::vector<double> d_lambda;
  double probe_loss = 0.0;  // mean probe cross-entropy at the lookahead parameters
};

struct DataCoefficients {
  std::vector<double> omega_star;
  std::vector<int> lambda_star;  // 1 keeps the original label, 0 switches to the pseudo label
  Matrix y_star;
  std::vector<double> d_omega;
  std::vector<double> d_lambda;
  double probe_loss = 0.0;
};

/// Row-wise lambda * y + (1 - lambda) * g.
Matrix mix_labels(const Matrix& y, const Matrix& g, double lambda);
Matrix mix_labels(const Matrix& y, const Matrix& g, std::span<const double> lambdas);

/// theta' = theta - alpha * (mu * v + grad sum_i w0_i CE(P(lambda0)_i, model(x_i))), w0 = 1/B.
/// Neither the model nor the momentum state is touched.
std::vector<double> lookahead_params(const Mlp& model, const MomentumState& momentum, const Matrix& x,
                                     const Matrix& y, const Matrix& g, const MetaConfig& cfg);

/// Exact d(probe loss at theta')/d(omega_i) and /d(lambda_i).
///
/// theta' is affine in omega and lambda because cross-entropy is linear in its target, so
/// with gp the probe-loss gradient at theta' and G_i the per-example training gradients at
/// theta:
///   d_omega_i  = -alpha * gp . G_i(P(lambda0)_i)
///   d_lambda_i = -alpha * w0 * gp . (G_i(y_i) - G_i(g_i))
MetaGradients meta_gradients(const Mlp& model, const MomentumState& momentum, const Matrix& x,
                             const Matrix& y, const Matrix& g, const Matrix& probe_x,
                             const Matrix& probe_y, const MetaConfig& cfg);
/// Same, reusing a forward pass of `x` already taken at the current parameters.
MetaGradients meta_gradients(const Mlp& model, const MomentumState& momentum, const ForwardCache& train,
                             const Matrix& y, const Matrix& g, const Matrix& probe_x,
                             const Matrix& probe_y, const MetaConfig& cfg);

/// raw_i = max(w0 - d_omega_i, 0), normalized to sum 1; uniform 1/B if the raw total is <= eps_norm.
std::vector<double> omega_star(std::span<const double> d_omega, const MetaConfig& cfg);

/// Rectified sign rule: 1 when d_lambda_i < 0, 0 when > 0, tie per cfg.tiebreak.
std::vector<int> lambda_star(std::span<const double> d_lambda, const MetaConfig& cfg);

/// Row i is y_i when lambda_star_i > 0, otherwise g_i.
Matrix select_labels(std::span<const int> lambda_star, const Matrix& y, const Matrix& g);

DataCoefficients compute_data_coefficients(const Mlp& model, const MomentumState& momentum,
                                           const ForwardCache& train, const Matrix& y, const Matrix& g,
                                           const Matrix& probe_x, const Matrix& probe_y,
                                           const MetaConfig& cfg);

enum class MetaCoefficient { omega, lambda };

/// Central finite difference of the probe loss with respect to one coefficient, rebuilding
/// the lookahead from scratch at both perturbed points. Test oracle for meta_gradients.
double fd_meta_gradient(const Mlp& model, const MomentumState& momentum, const Matrix& x, const Matrix& y,
                        const Matrix& g, const Matrix& probe_x, const Matrix& probe_y,
                        const MetaConfig& cfg, std::size_t index, MetaCoefficient which, double h);

/// Mean probe cross-entropy of `model`.
double mean_cross_entropy(const Mlp& model, const Matrix& x, const Matrix& targets);

}  // namespace dcoef
