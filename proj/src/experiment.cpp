#include "dcoef/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dcoef/augment.hpp"

namespace dcoef {
namespace {

constexpr std::uint64_t kGenTag = 0x67656e;
constexpr std::uint64_t kSplitTag = 0x73706c;
constexpr std::uint64_t kNoiseTag = 0x6e6f69;
constexpr std::uint64_t kTestTag = 0x746573;

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

LabeledSet generate_clean(const DataSpec& spec, std::size_t per_class, std::uint64_t seed) {
  switch (spec.generator) {
    case Generator::blobs: return gen_blobs(spec.num_classes, per_class, spec.dim, spec.radius, spec.sigma, seed);
    case Generator::moons: return gen_moons(per_class, spec.dim, spec.sigma, seed);
    case Generator::rings: return gen_rings(spec.num_classes, per_class, spec.dim, spec.sigma, seed);
  }
  throw std::invalid_argument("unknown generator");
}

}  // namespace

std::string to_string(Generator g) {
  switch (g) {
    case Generator::blobs: return "blobs";
    case Generator::moons: return "moons";
    case Generator::rings: return "rings";
  }
  return "?";
}

Generator parse_generator(const std::string& name) {
  if (name == "blobs") return Generator::blobs;
  if (name == "moons") return Generator::moons;
  if (name == "rings") return Generator::rings;
  throw std::invalid_argument("unknown generator '" + name + "' (expected blobs, moons or rings)");
}

void DataSpec::validate() const {
  if (generator != Generator::moons && num_classes < 2) throw std::invalid_argument("data: need at least 2 categories");
  if (dim < 2) throw std::invalid_argument("data: dim must be at least 2");
  if (per_class <= probe_per_class) throw std::invalid_argument("data: per_class must exceed probe_per_class");
  if (!(sigma >= 0.0)) throw std::invalid_argument("data: sigma must be >= 0");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("data: ratio must lie in [0, 1]");
}

NoisyDataset generate_dataset(const DataSpec& spec) {
  spec.validate();
  const LabeledSet clean = generate_clean(spec, spec.per_class, derive_seed(spec.seed, kGenTag));
  NoiseSpec noise{spec.noise, spec.ratio, derive_seed(spec.seed, kNoiseTag)};
  return make_noisy_dataset(clean, spec.probe_per_class, noise, derive_seed(spec.seed, kSplitTag));
}

NoisyDataset generate_test_set(const DataSpec& spec) {
  spec.validate();
  if (spec.test_per_class == 0) throw std::invalid_argument("data: test_per_class must be positive");
  const LabeledSet clean = generate_clean(spec, spec.test_per_class, derive_seed(spec.seed, kTestTag));
  return make_noisy_dataset(clean, 0, NoiseSpec{spec.noise, 0.0, 0}, 0);
}

LabeledSet as_labeled(const NoisyDataset& test) {
  return {test.features, test.clean_labels, test.num_classes};
}

Variant parse_variant(const std::string& name) {
  Variant v;
  v.name = name;
  if (name == "full") return v;
  if (name == "no-kl") v.ablation.use_kl = false;
  else if (name == "no-mixup") v.ablation.use_mixup = false;
  else if (name == "no-augment-policy") v.ablation.use_augment_policy = false;
  else if (name == "no-lambda") v.ablation.use_lambda = false;
  else if (name == "vanilla") v.method = Method::vanilla;
  else if (name == "clean") {
    v.method = Method::vanilla;
    v.train_on_clean_labels = true;
  } else {
    throw std::invalid_argument("unknown variant '" + name +
                                "' (expected full, no-kl, no-mixup, no-augment-policy, no-lambda, vanilla or clean)");
  }
  return v;
}

CellResult run_cell(const SweepSpec& spec, double ratio, const Variant& variant, std::uint64_t seed) {
  DataSpec data = spec.data;
  data.ratio = ratio;
  data.seed = seed;
  const NoisyDataset train = generate_dataset(data);
  const LabeledSet test = as_labeled(generate_test_set(data));

  RunConfig cfg = spec.run;
  cfg.seed = seed;
  cfg.method = variant.method;
  cfg.ablation = variant.ablation;
  cfg.train_on_clean_labels = variant.train_on_clean_labels;
  const FitResult fitted = fit(train, cfg);

  CellResult out;
  out.ratio = ratio;
  out.variant = variant.name;
  out.seed = seed;
  out.accuracy = evaluate(fitted.model, test.features, test.labels);
  const std::size_t n = fitted.history.size();
  const std::size_t from = n - n / 5;
  out.tail = summarize_coefficients(std::span(fitted.history).subspan(from));
  out.config_hash = cfg.hash();
  return out;
}

double sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::vector<CellSummary> summarize(const std::vector<CellResult>& runs) {
  std::vector<CellSummary> out;
  std::vector<std::vector<double>> groups;
  for (const CellResult& r : runs) {
    std::size_t g = 0;
    while (g < out.size() && !(out[g].ratio == r.ratio && out[g].variant == r.variant)) ++g;
    if (g == out.size()) {
      out.push_back({r.ratio, r.variant});
      groups.emplace_back();
    }
    groups[g].push_back(r.accuracy);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    out[g].n = groups[g].size();
    out[g].mean = std::accumulate(groups[g].begin(), groups[g].end(), 0.0) / static_cast<double>(groups[g].size());
    out[g].std = sample_std(groups[g]);
  }
  return out;
}

SweepResult run_sweep(const SweepSpec& spec) {
  if (spec.ratios.empty() || spec.seeds.empty() || spec.variants.empty()) {
    throw std::invalid_argument("sweep: ratios, seeds and variants must all be nonempty");
  }
  SweepResult result;
  for (double r : spec.ratios) {
    for (const Variant& v : spec.variants) {
      for (std::uint64_t s : spec.seeds) result.runs.push_back(run_cell(spec, r, v, s));
    }
  }
  result.summary = summarize(result.runs);
  return result;
}

std::string runs_table(const std::vector<CellResult>& runs) {
  std::string out = "ratio,variant,seed,config_hash,accuracy,omega_clean,omega_mislabeled,lambda_clean,lambda_mislabeled\n";
  for (const CellResult& r : runs) {
    out += num(r.ratio) + "," + r.variant + "," + std::to_string(r.seed) + "," + r.config_hash + "," + num(r.accuracy) +
           "," + num(r.tail.omega_clean) + "," + num(r.tail.omega_mislabeled) + "," + num(r.tail.lambda_clean) + "," +
           num(r.tail.lambda_mislabeled) + "\n";
  }
  return out;
}

std::string summary_table(const std::vector<CellSummary>& summary) {
  std::string out = "ratio,variant,n,mean,std\n";
  for (const CellSummary& s : summary) {
    out += num(s.ratio) + "," + s.variant + "," + std::to_string(s.n) + "," + num(s.mean) + "," + num(s.std) + "\n";
  }
  return out;
}

}  // namespace dcoef
