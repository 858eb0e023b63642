// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is the
// number of failed criteria (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dcoef/experiment.hpp"
#include "dcoef/losses.hpp"
#include "dcoef/meta_coefficients.hpp"
#include "dcoef/noise_harness.hpp"
#include "dcoef/schedule.hpp"
#include "dcoef/trainer.hpp"

using namespace dcoef;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (double& v : m.values()) v = n(rng);
  return m;
}

std::vector<double> random_distribution(std::size_t c, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<double> p(c);
  double s = 0.0;
  for (double& v : p) s += v = g(rng) + 1e-6;
  for (double& v : p) v /= s;
  return p;
}

Matrix random_distributions(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    const auto p = random_distribution(c, rng);
    std::copy(p.begin(), p.end(), m.row(i).begin());
  }
  return m;
}

std::vector<int> random_labels(std::size_t n, std::size_t c, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(c) - 1);
  std::vector<int> v(n);
  for (int& x : v) x = d(rng);
  return v;
}

struct MetaInstance {
  Mlp model;
  MomentumState momentum;
  Matrix x, y, g, px, py;
};

MetaInstance meta_instance(std::mt19937_64& rng, std::uint64_t seed) {
  std::uniform_int_distribution<std::size_t> b(4, 8), m(2, 4), dims(2, 5), hidden(3, 8), cats(2, 4);
  const std::size_t B = b(rng), M = m(rng), d = dims(rng), h = hidden(rng), C = cats(rng);
  MetaInstance in;
  in.model = Mlp::initialized({d, h, C}, Activation::tanh, seed);
  in.momentum = MomentumState::zeros(in.model.num_params(), 0.9);
  std::normal_distribution<double> n(0.0, 0.1);
  for (double& v : in.momentum.velocity) v = n(rng);
  in.x = random_matrix(B, d, rng);
  in.y = one_hot_rows(random_labels(B, C, rng), C);
  in.g = random_distributions(B, C, rng);
  in.px = random_matrix(M, d, rng);
  in.py = one_hot_rows(random_labels(M, C, rng), C);
  return in;
}

void criterion_1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  MetaConfig cfg;
  cfg.alpha_meta = 0.5;
  for (int trial = 0; trial < 20; ++trial) {
    const MetaInstance in = meta_instance(rng, 500 + trial);
    const MetaGradients mg = meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
    for (std::size_t i = 0; i < in.x.rows(); ++i) {
      for (MetaCoefficient which : {MetaCoefficient::omega, MetaCoefficient::lambda}) {
        const double fd = fd_meta_gradient(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg, i, which, 1e-4);
        const double an = which == MetaCoefficient::omega ? mg.d_omega[i] : mg.d_lambda[i];
        worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-8));
      }
    }
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-5 && secs < 10.0, "meta-gradient exactness vs finite differences",
         "max rel err " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s");
}

void criterion_2() {
  std::mt19937_64 rng(1002);
  MetaConfig cfg;
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    MetaInstance in = meta_instance(rng, 9000 + trial);
    std::uniform_int_distribution<std::size_t> pick(0, in.x.rows() - 1);
    const std::size_t i = pick(rng);
    for (std::size_t c = 0; c < in.y.cols(); ++c) in.g(i, c) = in.y(i, c);
    const MetaGradients mg = meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
    worst = std::max(worst, std::abs(mg.d_lambda[i]));
  }
  report(2, worst <= 1e-12, "d_lambda vanishes when g_i == y_i", "max |d_lambda| " + fmt("%.3g", worst) + " over 1000 trials");
}

void criterion_3() {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto a = random_distribution(6, rng), b = random_distribution(6, rng), p = random_distribution(6, rng);
    const double beta = u(rng);
    std::vector<double> mix(6);
    for (int c = 0; c < 6; ++c) mix[c] = beta * a[c] + (1 - beta) * b[c];
    const double diff = soft_cross_entropy(mix, p) - (beta * soft_cross_entropy(a, p) + (1 - beta) * soft_cross_entropy(b, p));
    worst = std::max(worst, std::abs(diff));
  }
  report(3, worst <= 1e-12, "cross-entropy target linearity", "max abs diff " + fmt("%.3g", worst) + " over 1000 triples");
}

void criterion_4() {
  std::mt19937_64 rng(1004);
  std::uniform_int_distribution<std::size_t> cats(2, 10);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto p = random_distribution(cats(rng), rng);
    if (entropy(sharpen(p, 0.5)) > entropy(p) + 1e-12) ++violations;
  }
  const auto s = sharpen(std::vector<double>{0.8, 0.2}, 0.5);
  const bool worked = std::abs(s[0] - 0.941176) <= 1e-6 && std::abs(s[1] - 0.058824) <= 1e-6;
  report(4, violations == 0 && worked, "sharpening lowers entropy; sharpen([0.8,0.2],0.5)",
         std::to_string(violations) + " violations, got [" + fmt("%.6f", s[0]) + ", " + fmt("%.6f", s[1]) + "]");
}

void criterion_5() {
  const LrSchedule s;
  bool ok = true;
  std::string detail;
  double start = 0.0;
  for (int n = 0; n < 8; ++n) {
    const double closed_start = s.cycle0 * (std::pow(s.growth, n) - 1.0) / (s.growth - 1.0);
    const double closed_peak = s.eta0 * std::pow(0.9, n);
    const CyclePosition pos = cycle_at(s, closed_start);
    const double len = s.cycle0 * std::pow(1.5, n);
    ok = ok && pos.cycle == static_cast<std::size_t>(n) && pos.start == closed_start && start == closed_start &&
         pos.length == len && std::abs(lr_at(s, closed_start) - closed_peak) <= 1e-15 * closed_peak * 10;
    start += len;
  }
  ok = ok && cycle_at(s, 0.0).length == 1.0 && cycle_at(s, 1.0).length == 1.5 && cycle_at(s, 2.5).length == 2.25;
  detail = "lengths 1, 1.5, 2.25; peaks " + fmt("%.4g", lr_at(s, 0.0)) + ", " + fmt("%.4g", lr_at(s, 1.0)) + ", " +
           fmt("%.4g", lr_at(s, 2.5));
  report(5, ok, "cosine warm restarts: cycle lengths x1.5, peaks x0.9", detail);
}

struct DeskRuns {
  std::map<std::string, std::vector<CellResult>> cells;  // key "<ratio>/<variant>"
  double slowest = 0.0;
};

DeskRuns desk_runs() {
  SweepSpec spec;  // defaults are the desk-scale reference configuration
  DeskRuns out;
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const std::vector<std::pair<double, std::vector<std::string>>> grid{
      {0.4, {"full", "vanilla", "clean"}}, {0.8, {"full", "vanilla", "no-kl", "no-mixup"}}};
  for (const auto& [ratio, variants] : grid) {
    for (const std::string& v : variants) {
      for (std::uint64_t seed : seeds) {
        const auto t0 = Clock::now();
        const CellResult cell = run_cell(spec, ratio, parse_variant(v), seed);
        const double secs = seconds_since(t0);
        out.slowest = std::max(out.slowest, secs);
        std::printf("  run ratio=%.1f variant=%-9s seed=%llu acc=%.4f omega(clean/mis)=%.5f/%.5f lambda(clean/mis)=%.4f/%.4f %.1fs\n",
                    ratio, v.c_str(), static_cast<unsigned long long>(seed), cell.accuracy, cell.tail.omega_clean,
                    cell.tail.omega_mislabeled, cell.tail.lambda_clean, cell.tail.lambda_mislabeled, secs);
        std::fflush(stdout);
        out.cells[fmt("%.1f", ratio) + "/" + v].push_back(cell);
      }
    }
  }
  return out;
}

void criteria_6_to_8(const DeskRuns& runs) {
  auto acc = [&](const std::string& key, std::size_t s) { return runs.cells.at(key)[s].accuracy; };
  bool ok6 = runs.slowest < 600.0;
  std::string d6;
  bool ok7 = true;
  std::string d7;
  bool ok8 = true;
  std::string d8;
  for (std::size_t s = 0; s < 3; ++s) {
    const double full4 = acc("0.4/full", s), van4 = acc("0.4/vanilla", s), clean4 = acc("0.4/clean", s);
    const double full8 = acc("0.8/full", s), van8 = acc("0.8/vanilla", s);
    ok6 = ok6 && full4 >= clean4 - 0.03 && full4 >= van4 + 0.08 && full8 >= van8 + 0.20;
    d6 += fmt("seed %.0f: ", s + 1.0) + fmt("40%%: full %.3f", full4) + fmt(" clean %.3f", clean4) + fmt(" vanilla %.3f", van4) +
          fmt("; 80%%: full %.3f", full8) + fmt(" vanilla %.3f", van8) + "; ";

    const CoefficientSummary& t = runs.cells.at("0.4/full")[s].tail;
    ok7 = ok7 && t.lambda_mislabeled < t.lambda_clean && t.omega_mislabeled < t.omega_clean;
    d7 += fmt("seed %.0f: ", s + 1.0) + fmt("lambda %.3f", t.lambda_mislabeled) + fmt("<%.3f", t.lambda_clean) +
          fmt(" omega %.5f", t.omega_mislabeled) + fmt("<%.5f", t.omega_clean) + "; ";

    const double nokl = acc("0.8/no-kl", s), nomix = acc("0.8/no-mixup", s);
    ok8 = ok8 && full8 > nokl && full8 > nomix;
    d8 += fmt("seed %.0f: ", s + 1.0) + fmt("full %.3f", full8) + fmt(" no-kl %.3f", nokl) + fmt(" no-mixup %.3f", nomix) + "; ";
  }
  d6 += fmt("slowest run %.1f s", runs.slowest);
  report(6, ok6, "desk-scale robustness at 40% and 80% uniform noise", d6);
  d7.resize(d7.size() - 2);
  report(7, ok7, "mislabeled rows get lower lambda* and omega* (last 20% of steps, 40% noise)", d7);
  d8.resize(d8.size() - 2);
  report(8, ok8, "full method beats --no-kl and --no-mixup at 80% noise", d8);
}

void criterion_9() {
  namespace fs = std::filesystem;
  DataSpec data;
  data.ratio = 0.4;
  data.seed = 9;
  RunConfig cfg;
  cfg.seed = 9;
  cfg.steps = 300;
  const fs::path dir = fs::temp_directory_path() / "dcoef_acceptance";
  fs::create_directories(dir);
  auto run_once = [&](const fs::path& path) {
    const NoisyDataset ds = generate_dataset(data);
    const LabeledSet test = as_labeled(generate_test_set(data));
    RunConfig c = cfg;
    c.eval_every = 50;
    const FitResult r = fit(ds, c, &test);
    write_metrics(r.history, c, path);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string a = run_once(dir / "a.csv"), b = run_once(dir / "b.csv");
  fs::remove_all(dir);
  report(9, !a.empty() && a == b, "identical config and seed give byte-identical metrics files",
         std::to_string(a.size()) + " bytes each, 300 steps");
}

void criterion_10() {
  std::vector<int> clean(10000);
  for (std::size_t i = 0; i < clean.size(); ++i) clean[i] = static_cast<int>(i % 4);
  bool ok = true;
  std::string detail;
  for (double r : {0.2, 0.4, 0.8}) {
    const NoiseResult res = inject_uniform(clean, 4, r, 77);
    ok = ok && std::abs(res.realized_ratio - r) <= 0.02;
    detail += fmt("uniform %.1f", r) + fmt(" -> %.4f; ", res.realized_ratio);
  }
  std::size_t bad = 0;
  for (std::size_t C : {2u, 4u, 10u}) {
    std::vector<int> labels(10000);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % C);
    const NoiseResult res = inject_asymmetric(labels, C, 0.4, 78);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (res.noisy[i] != labels[i] && res.noisy[i] != static_cast<int>((labels[i] + 1) % C)) ++bad;
    }
  }
  ok = ok && bad == 0;
  detail += "asymmetric off-map flips: " + std::to_string(bad);
  report(10, ok, "noise injection statistics", detail);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> quick{criterion_1, criterion_2, criterion_3, criterion_4, criterion_5};
  for (const auto& c : quick) c();
  criteria_6_to_8(desk_runs());
  criterion_9();
  criterion_10();
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
