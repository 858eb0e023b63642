#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dcoef/tensor.hpp"

namespace dcoef {

/// Features with integer category labels.
struct LabeledSet {
  Matrix features;
  std::vector<int> labels;
  std::size_t num_classes = 0;
};

enum class NoiseKind { uniform, asymmetric };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::uniform;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  double realized_ratio = 0.0;  // filled in by injection
};

/// Training pool with noisy labels plus a trusted probe set. clean_labels are only for metrics.
struct NoisyDataset {
  Matrix features;
  std::vector<int> noisy_labels;
  std::vector<int> clean_labels;
  Matrix probe_features;
  std::vector<int> probe_labels;
  std::size_t num_classes = 0;
  NoiseSpec noise_spec;

  std::size_t feature_dim() const;
};

/// Category means equally spaced on a circle of `radius` in the first two coordinates,
/// isotropic Gaussian spread `sigma` in all d coordinates. Rows are grouped by category.
LabeledSet gen_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double radius,
                     double sigma, std::uint64_t seed);
/// Two interleaved half circles in the first two coordinates; remaining coordinates carry noise only.
LabeledSet gen_moons(std::size_t per_class, std::size_t dim, double sigma, std::uint64_t seed);
/// Concentric rings of radius 1, 2, ..., C in the first two coordinates.
LabeledSet gen_rings(std::size_t num_classes, std::size_t per_class, std::size_t dim, double sigma,
                     std::uint64_t seed);

struct NoiseResult {
  std::vector<int> noisy;
  std::size_t flips = 0;
  double realized_ratio = 0.0;
};

/// With probability r each label is replaced by one of the other C-1 categories, uniformly.
NoiseResult inject_uniform(std::span<const int> clean, std::size_t num_classes, double ratio, std::uint64_t seed);
/// With probability r label c becomes (c + 1) mod C.
NoiseResult inject_asymmetric(std::span<const int> clean, std::size_t num_classes, double ratio, std::uint64_t seed);
NoiseResult inject_noise(std::span<const int> clean, std::size_t num_classes, NoiseSpec& spec);

struct ProbeSplit {
  LabeledSet probe;
  LabeledSet train;
  std::vector<std::size_t> probe_rows;  // row indices of the input that went to the probe set
  std::vector<std::size_t> train_rows;
};

/// Moves exactly `per_class` randomly chosen rows of every category into the probe set.
ProbeSplit split_probe(const LabeledSet& clean, std::size_t per_class, std::uint64_t seed);

/// Probe split first, then noise injected into the remaining pool only.
NoisyDataset make_noisy_dataset(const LabeledSet& clean, std::size_t probe_per_class, NoiseSpec spec,
                                std::uint64_t split_seed);

/// Comma-separated table. Header: f0,...,f{d-1},clean_label,noisy_label,is_probe.
/// Training rows first, then probe rows (whose noisy_label equals clean_label).
std::string dataset_text(const NoisyDataset& ds);
NoisyDataset parse_dataset(const std::string& text, const std::string& source = "dataset");
void write_dataset(const NoisyDataset& ds, const std::filesystem::path& path);
NoisyDataset read_dataset(const std::filesystem::path& path);

}  // namespace dcoef
