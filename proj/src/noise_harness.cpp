#include "dcoef/noise_harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dcoef/augment.hpp"

namespace dcoef {
namespace {

void check_classes(std::size_t num_classes) {
  if (num_classes < 2) throw std::invalid_argument("noise: need at least 2 categories");
}

void check_ratio(double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("noise: ratio must lie in [0, 1]");
}

LabeledSet sample_around(std::size_t num_classes, std::size_t per_class, std::size_t dim, double sigma,
                         std::uint64_t seed, auto&& center) {
  if (num_classes < 2) throw std::invalid_argument("generator: need at least 2 categories");
  if (dim < 2) throw std::invalid_argument("generator: need at least 2 feature dimensions");
  if (!(sigma >= 0.0)) throw std::invalid_argument("generator: sigma must be >= 0");
  LabeledSet out;
  out.num_classes = num_classes;
  out.features = Matrix(num_classes * per_class, dim);
  out.labels.resize(num_classes * per_class);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      const std::size_t i = c * per_class + k;
      auto row = out.features.row(i);
      const auto [cx, cy] = center(c, rng);
      row[0] = cx;
      row[1] = cy;
      if (sigma > 0.0) {
        for (double& v : row) v += sigma * noise(rng);
      }
      out.labels[i] = static_cast<int>(c);
    }
  }
  return out;
}

NoiseResult finish(std::vector<int> noisy, std::span<const int> clean) {
  NoiseResult r;
  r.noisy = std::move(noisy);
  for (std::size_t i = 0; i < clean.size(); ++i) r.flips += r.noisy[i] != clean[i];
  r.realized_ratio = clean.empty() ? 0.0 : static_cast<double>(r.flips) / static_cast<double>(clean.size());
  return r;
}

}  // namespace

std::string to_string(NoiseKind kind) { return kind == NoiseKind::uniform ? "uniform" : "asymmetric"; }

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "uniform") return NoiseKind::uniform;
  if (name == "asymmetric") return NoiseKind::asymmetric;
  throw std::invalid_argument("unknown noise kind '" + name + "' (expected uniform or asymmetric)");
}

std::size_t NoisyDataset::feature_dim() const {
  return features.rows() > 0 ? features.cols() : probe_features.cols();
}

LabeledSet gen_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double radius,
                     double sigma, std::uint64_t seed) {
  return sample_around(num_classes, per_class, dim, sigma, seed, [&](std::size_t c, auto&) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    return std::pair{radius * std::cos(angle), radius * std::sin(angle)};
  });
}

LabeledSet gen_moons(std::size_t per_class, std::size_t dim, double sigma, std::uint64_t seed) {
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  return sample_around(2, per_class, dim, sigma, seed, [&](std::size_t c, std::mt19937_64& rng) {
    const double t = angle(rng);
    return c == 0 ? std::pair{std::cos(t), std::sin(t)} : std::pair{1.0 - std::cos(t), 0.5 - std::sin(t)};
  });
}

LabeledSet gen_rings(std::size_t num_classes, std::size_t per_class, std::size_t dim, double sigma,
                     std::uint64_t seed) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  return sample_around(num_classes, per_class, dim, sigma, seed, [&](std::size_t c, std::mt19937_64& rng) {
    const double t = angle(rng);
    const double r = static_cast<double>(c + 1);
    return std::pair{r * std::cos(t), r * std::sin(t)};
  });
}

NoiseResult inject_uniform(std::span<const int> clean, std::size_t num_classes, double ratio, std::uint64_t seed) {
  check_classes(num_classes);
  check_ratio(ratio);
  std::mt19937_64 rng(derive_seed(seed, 0x756e69));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> other(0, static_cast<int>(num_classes) - 2);
  std::vector<int> noisy(clean.begin(), clean.end());
  for (int& y : noisy) {
    if (coin(rng) < ratio) {
      const int k = other(rng);
      y = k >= y ? k + 1 : k;
    }
  }
  return finish(std::move(noisy), clean);
}

NoiseResult inject_asymmetric(std::span<const int> clean, std::size_t num_classes, double ratio, std::uint64_t seed) {
  check_classes(num_classes);
  check_ratio(ratio);
  std::mt19937_64 rng(derive_seed(seed, 0x617379));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<int> noisy(clean.begin(), clean.end());
  for (int& y : noisy) {
    if (coin(rng) < ratio) y = (y + 1) % static_cast<int>(num_classes);
  }
  return finish(std::move(noisy), clean);
}

NoiseResult inject_noise(std::span<const int> clean, std::size_t num_classes, NoiseSpec& spec) {
  NoiseResult r = spec.kind == NoiseKind::uniform ? inject_uniform(clean, num_classes, spec.ratio, spec.seed)
                                                  : inject_asymmetric(clean, num_classes, spec.ratio, spec.seed);
  spec.realized_ratio = r.realized_ratio;
  return r;
}

ProbeSplit split_probe(const LabeledSet& clean, std::size_t per_class, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(clean.num_classes);
  for (std::size_t i = 0; i < clean.labels.size(); ++i) {
    by_class.at(static_cast<std::size_t>(clean.labels[i])).push_back(i);
  }
  std::mt19937_64 rng(derive_seed(seed, 0x70726f));
  std::vector<bool> is_probe(clean.labels.size(), false);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& rows = by_class[c];
    if (rows.size() < per_class) {
      throw std::invalid_argument("split_probe: category " + std::to_string(c) + " has " +
                                  std::to_string(rows.size()) + " rows, need " + std::to_string(per_class));
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t k = 0; k < per_class; ++k) is_probe[rows[k]] = true;
  }
  ProbeSplit out;
  for (std::size_t i = 0; i < is_probe.size(); ++i) (is_probe[i] ? out.probe_rows : out.train_rows).push_back(i);
  auto take = [&](const std::vector<std::size_t>& rows) {
    LabeledSet s;
    s.num_classes = clean.num_classes;
    s.features = clean.features.select_rows(rows);
    if (rows.empty()) s.features = Matrix(0, clean.features.cols());
    for (std::size_t i : rows) s.labels.push_back(clean.labels[i]);
    return s;
  };
  out.probe = take(out.probe_rows);
  out.train = take(out.train_rows);
  return out;
}

NoisyDataset make_noisy_dataset(const LabeledSet& clean, std::size_t probe_per_class, NoiseSpec spec,
                                std::uint64_t split_seed) {
  ProbeSplit split = split_probe(clean, probe_per_class, split_seed);
  NoisyDataset ds;
  ds.num_classes = clean.num_classes;
  ds.features = std::move(split.train.features);
  ds.clean_labels = std::move(split.train.labels);
  ds.probe_features = std::move(split.probe.features);
  ds.probe_labels = std::move(split.probe.labels);
  ds.noisy_labels = inject_noise(ds.clean_labels, ds.num_classes, spec).noisy;
  ds.noise_spec = spec;
  return ds;
}

std::string dataset_text(const NoisyDataset& ds) {
  const std::size_t d = ds.feature_dim();
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += "f" + std::to_string(j) + ",";
  out += "clean_label,noisy_label,is_probe\n";
  char buf[40];
  auto emit = [&](std::span<const double> row, int clean, int noisy, int probe) {
    for (double v : row) {
      std::snprintf(buf, sizeof buf, "%.17g,", v);
      out += buf;
    }
    out += std::to_string(clean) + "," + std::to_string(noisy) + "," + std::to_string(probe) + "\n";
  };
  for (std::size_t i = 0; i < ds.features.rows(); ++i) emit(ds.features.row(i), ds.clean_labels[i], ds.noisy_labels[i], 0);
  for (std::size_t i = 0; i < ds.probe_features.rows(); ++i) {
    emit(ds.probe_features.row(i), ds.probe_labels[i], ds.probe_labels[i], 1);
  }
  return out;
}

NoisyDataset parse_dataset(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    return FormatError(source + " line " + std::to_string(line_no) + ": " + msg);
  };
  auto split_commas = [](const std::string& s) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ss(s);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!s.empty() && s.back() == ',') fields.emplace_back();
    return fields;
  };

  if (!std::getline(in, line)) throw FormatError(source + ": empty file");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  if (header.size() < 4) throw fail("header too short");
  const std::size_t d = header.size() - 3;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j] != "f" + std::to_string(j)) throw fail("expected column 'f" + std::to_string(j) + "', found '" + header[j] + "'");
  }
  if (header[d] != "clean_label" || header[d + 1] != "noisy_label" || header[d + 2] != "is_probe") {
    throw fail("expected trailing columns clean_label,noisy_label,is_probe");
  }

  NoisyDataset ds;
  ds.features = Matrix(0, d);
  ds.probe_features = Matrix(0, d);
  int max_label = -1;
  std::vector<double> row(d);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 3) {
      throw fail("expected " + std::to_string(d + 3) + " fields, found " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < d; ++j) {
      char* end = nullptr;
      row[j] = std::strtod(fields[j].c_str(), &end);
      if (fields[j].empty() || *end != '\0' || !std::isfinite(row[j])) throw fail("bad feature value '" + fields[j] + "'");
    }
    auto parse_int = [&](const std::string& f, const char* what) {
      char* end = nullptr;
      const long v = std::strtol(f.c_str(), &end, 10);
      if (f.empty() || *end != '\0' || v < 0) throw fail(std::string("bad ") + what + " '" + f + "'");
      return static_cast<int>(v);
    };
    const int clean = parse_int(fields[d], "clean_label");
    const int noisy = parse_int(fields[d + 1], "noisy_label");
    const int probe = parse_int(fields[d + 2], "is_probe");
    if (probe > 1) throw fail("is_probe must be 0 or 1");
    max_label = std::max({max_label, clean, noisy});
    if (probe == 1) {
      if (noisy != clean) throw fail("probe row with a noisy label");
      ds.probe_features.append_row(row);
      ds.probe_labels.push_back(clean);
    } else {
      ds.features.append_row(row);
      ds.clean_labels.push_back(clean);
      ds.noisy_labels.push_back(noisy);
    }
  }
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < ds.clean_labels.size(); ++i) flips += ds.clean_labels[i] != ds.noisy_labels[i];
  ds.noise_spec.realized_ratio =
      ds.clean_labels.empty() ? 0.0 : static_cast<double>(flips) / static_cast<double>(ds.clean_labels.size());
  return ds;
}

void write_dataset(const NoisyDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out << dataset_text(ds);
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

NoisyDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path.string());
}

}  // namespace dcoef
