#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dcoef/tensor.hpp"

namespace dcoef {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& name);

/// Flat parameter-space vector aligned with Mlp's block order.
using GradientVector = std::vector<double>;

/// Heavy-ball momentum state: v <- mu * v + g, theta <- theta - lr * v.
struct MomentumState {
  std::vector<double> velocity;
  double mu = 0.9;

  static MomentumState zeros(std::size_t num_params, double mu = 0.9) {
    return {std::vector<double>(num_params, 0.0), mu};
  }
};

/// Activations recorded by a forward pass, consumed by backward().
struct ForwardCache {
  // layer_inputs[l] is the input of layer l; layer_inputs[0] is the batch itself.
  std::vector<Matrix> layer_inputs;
  Matrix probs;
};

/// Row counts pushed through forward and backward passes on the calling thread.
struct PassCounters {
  std::size_t forward_rows = 0;
  std::size_t backward_rows = 0;
};
PassCounters& pass_counters();

/// Multilayer perceptron with softmax output.
///
/// Parameters live in one flat vector. For each layer l (input to output) the block
/// order is: weight W_l stored row-major with shape (fan_in x fan_out), then bias b_l
/// of length fan_out. A layer computes z = a W_l + b_l; hidden layers apply the
/// activation and the final layer applies a row softmax.
class Mlp {
 public:
  Mlp() = default;
  /// All parameters zero.
  explicit Mlp(std::vector<std::size_t> layer_dims, Activation activation = Activation::relu);

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  static Mlp initialized(std::vector<std::size_t> layer_dims, Activation activation,
                         std::uint64_t seed);

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  Activation activation() const { return activation_; }
  std::size_t num_layers() const { return dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t num_classes() const { return dims_.back(); }
  std::size_t num_params() const { return params_.size(); }

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }
  void set_params(std::span<const double> p);
  Mlp with_params(std::span<const double> p) const;

  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + dims_[layer] * dims_[layer + 1];
  }

  /// Row-wise class probabilities for a (B x input_dim) batch.
  Matrix forward(const Matrix& x) const;
  ForwardCache forward_cached(const Matrix& x) const;

  /// Gradient of a scalar loss given its derivative with respect to the logits.
  GradientVector backward(const ForwardCache& cache, const Matrix& dlogits) const;
  /// Same, but one gradient per batch row.
  std::vector<GradientVector> backward_per_example(const ForwardCache& cache,
                                                   const Matrix& dlogits) const;

  friend bool operator==(const Mlp&, const Mlp&) = default;

 private:
  void check_input(const Matrix& x) const;
  std::vector<Matrix> output_deltas(const ForwardCache& cache, const Matrix& dlogits) const;

  std::vector<std::size_t> dims_;
  Activation activation_ = Activation::relu;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// d/dlogits of sum_i w_i * soft_cross_entropy(targets_i, softmax(logits_i)).
/// Targets need not be normalized: row i is w_i * (p_i * sum(t_i) - t_i).
Matrix cross_entropy_logit_grad(const Matrix& probs, const Matrix& targets,
                                std::span<const double> weights);

/// Gradient of sum_i w_i * CE(targets_i, model(x_i)).
GradientVector grad_weighted_loss(const Mlp& model, const Matrix& x, const Matrix& targets,
                                  std::span<const double> weights);

/// Element i is the gradient of CE(targets_i, model(x_i)) alone.
std::vector<GradientVector> per_example_gradients(const Mlp& model, const Matrix& x,
                                                  const Matrix& targets);

/// v <- mu * v + g; theta <- theta - lr * v. No dampening, no Nesterov.
void sgd_momentum_step(Mlp& model, MomentumState& state, std::span<const double> g, double lr);

/// Text checkpoint; values printed with 17 significant digits so they round-trip exactly.
void save_checkpoint(const Mlp& model, const std::filesystem::path& path);
Mlp load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const Mlp& model);
Mlp parse_checkpoint(const std::string& text);

}  // namespace dcoef
