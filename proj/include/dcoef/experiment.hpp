#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcoef/noise_harness.hpp"
#include "dcoef/trainer.hpp"

namespace dcoef {

enum class Generator { blobs, moons, rings };
std::string to_string(Generator g);
Generator parse_generator(const std::string& name);

/// Everything needed to regenerate a dataset file from scratch.
struct DataSpec {
  Generator generator = Generator::blobs;
  std::size_t num_classes = 4;  // ignored for moons (always 2)
  std::size_t per_class = 1010;  // before the probe split
  std::size_t dim = 10;
  double radius = 3.0;  // blobs only
  double sigma = 1.0;
  std::size_t probe_per_class = 10;
  NoiseKind noise = NoiseKind::uniform;
  double ratio = 0.0;
  std::uint64_t seed = 1;
  std::size_t test_per_class = 250;

  void validate() const;
};

/// Training pool with probe split and injected noise.
NoisyDataset generate_dataset(const DataSpec& spec);
/// Clean held-out rows from the same distribution under an independent stream.
NoisyDataset generate_test_set(const DataSpec& spec);
LabeledSet as_labeled(const NoisyDataset& test);

/// A named row of the ablation grid.
struct Variant {
  std::string name;
  Method method = Method::full;
  Ablation ablation;
  bool train_on_clean_labels = false;
};
/// full, no-kl, no-mixup, no-augment-policy, no-lambda, vanilla, clean.
Variant parse_variant(const std::string& name);

struct SweepSpec {
  DataSpec data;
  RunConfig run;
  std::vector<double> ratios{0.4};
  std::vector<std::uint64_t> seeds{1};
  std::vector<Variant> variants{parse_variant("full")};
};

struct CellResult {
  double ratio = 0.0;
  std::string variant;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  CoefficientSummary tail;  // coefficient means over the last 20% of steps
  std::string config_hash;
};

/// One (ratio, variant, seed) cell: the data and the run both use `seed`.
CellResult run_cell(const SweepSpec& spec, double ratio, const Variant& variant, std::uint64_t seed);

struct CellSummary {
  double ratio = 0.0;
  std::string variant;
  std::size_t n = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; NaN for a single seed
};

struct SweepResult {
  std::vector<CellResult> runs;
  std::vector<CellSummary> summary;
};

SweepResult run_sweep(const SweepSpec& spec);
std::vector<CellSummary> summarize(const std::vector<CellResult>& runs);
double sample_std(const std::vector<double>& values);

std::string runs_table(const std::vector<CellResult>& runs);
std::string summary_table(const std::vector<CellSummary>& summary);

}  // namespace dcoef
