#include "dcoef/augment.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace dcoef {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix(base);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ c);
}

void AugmentPolicy::validate(std::size_t feature_dim) const {
  if (!(jitter_sigma >= 0.0)) throw std::invalid_argument("augment: jitter_sigma must be >= 0");
  if (!(scale_lo <= scale_hi)) throw std::invalid_argument("augment: scale range lo > hi");
  if (cutout_span > feature_dim) {
    throw std::invalid_argument("augment: cutout span " + std::to_string(cutout_span) +
                                " exceeds feature dim " + std::to_string(feature_dim));
  }
}

Matrix augment(const Matrix& x, const AugmentPolicy& policy, std::uint64_t seed) {
  policy.validate(x.cols());
  Matrix out = x;
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, i));
    auto row = out.row(i);
    if (policy.jitter_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, policy.jitter_sigma);
      for (double& v : row) v += noise(rng);
    }
    if (policy.scale_lo != 1.0 || policy.scale_hi != 1.0) {
      const double scale = policy.scale_lo == policy.scale_hi
                               ? policy.scale_lo
                               : std::uniform_real_distribution<double>(policy.scale_lo, policy.scale_hi)(rng);
      for (double& v : row) v *= scale;
    }
    if (policy.cutout_span > 0) {
      std::uniform_int_distribution<std::size_t> start_dist(0, d - policy.cutout_span);
      const std::size_t start = start_dist(rng);
      for (std::size_t j = start; j < start + policy.cutout_span; ++j) row[j] = 0.0;
    }
  }
  return out;
}

}  // namespace dcoef
