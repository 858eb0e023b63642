#pragma once

#include <cstdint>

#include "dcoef/tensor.hpp"

namespace dcoef {

/// Feature-vector augmentation: x_hat = scale * (x + noise), then a contiguous span zeroed.
struct AugmentPolicy {
  double jitter_sigma = 0.3;  // std-dev of additive Gaussian noise per feature
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  std::size_t cutout_span = 0;  // contiguous features zeroed per row; 0 disables

  static AugmentPolicy identity() { return {0.0, 1.0, 1.0, 0}; }

  /// Throws std::invalid_argument when the policy cannot be applied to `feature_dim` features.
  void validate(std::size_t feature_dim) const;
};

/// Row-wise independent augmentation. Row i draws from a generator keyed by (seed, i),
/// so the result is a pure function of (x, policy, seed).
Matrix augment(const Matrix& x, const AugmentPolicy& policy, std::uint64_t seed);

/// Mixes several integers into one well-spread seed (splitmix64 finalizer chain).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

}  // namespace dcoef
