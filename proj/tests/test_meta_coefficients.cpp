#include <cmath>
#include <random>

#include "doctest.h"
#include "dcoef/meta_coefficients.hpp"
#include "test_helpers.hpp"

using namespace dcoef;

namespace {

struct Instance {
  Mlp model;
  MomentumState momentum;
  Matrix x, y, g, px, py;
};

Instance random_instance(std::mt19937_64& rng, std::size_t B, std::size_t M, std::uint64_t seed) {
  Instance in;
  in.model = Mlp::initialized({2, 6, 3}, Activation::tanh, seed);
  in.momentum = MomentumState::zeros(in.model.num_params(), 0.9);
  std::normal_distribution<double> n(0.0, 0.1);
  for (double& v : in.momentum.velocity) v = n(rng);
  in.x = testutil::random_matrix(B, 2, rng);
  in.y = one_hot_rows(testutil::random_labels(B, 3, rng), 3);
  in.g = testutil::random_distributions(B, 3, rng);
  in.px = testutil::random_matrix(M, 2, rng);
  in.py = one_hot_rows(testutil::random_labels(M, 3, rng), 3);
  return in;
}

// Lookahead computed straight from the update equation with a finite-difference-free
// weighted gradient, independent of lookahead_params.
std::vector<double> oracle_lookahead(const Instance& in, const MetaConfig& cfg) {
  const std::size_t B = in.x.rows();
  Matrix p0(B, 3);
  for (std::size_t i = 0; i < p0.size(); ++i) p0.values()[i] = cfg.lambda0 * in.y.values()[i] + (1 - cfg.lambda0) * in.g.values()[i];
  const auto per = per_example_gradients(in.model, in.x, p0);
  std::vector<double> out(in.model.params().begin(), in.model.params().end());
  for (std::size_t j = 0; j < out.size(); ++j) {
    double s = in.momentum.mu * in.momentum.velocity[j];
    for (const auto& gi : per) s += gi[j] / static_cast<double>(B);
    out[j] -= cfg.alpha_meta * s;
  }
  return out;
}

}  // namespace

TEST_CASE("lookahead examples") {
  std::mt19937_64 rng(1);
  Instance in = random_instance(rng, 5, 3, 11);
  MetaConfig cfg;
  cfg.alpha_meta = 0.0;
  const auto same = lookahead_params(in.model, in.momentum, in.x, in.y, in.g, cfg);
  CHECK(std::vector<double>(in.model.params().begin(), in.model.params().end()) == same);

  cfg.alpha_meta = 0.3;
  const auto la = lookahead_params(in.model, in.momentum, in.x, in.y, in.g, cfg);
  const auto oracle = oracle_lookahead(in, cfg);
  for (std::size_t j = 0; j < la.size(); ++j) CHECK(la[j] == doctest::Approx(oracle[j]).epsilon(1e-13));

  in.momentum.mu = 0.0;
  cfg.lambda0 = 1.0;
  const auto plain = lookahead_params(in.model, in.momentum, in.x, in.y, in.g, cfg);
  const auto grad = grad_weighted_loss(in.model, in.x, in.y, std::vector<double>(5, 0.2));
  for (std::size_t j = 0; j < plain.size(); ++j) CHECK(plain[j] == doctest::Approx(in.model.params()[j] - 0.3 * grad[j]).epsilon(1e-13));
}

TEST_CASE("meta gradients match finite differences of the lookahead probe loss") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    Instance in = random_instance(rng, 4, 3, 200 + trial);
    MetaConfig cfg;
    cfg.alpha_meta = 0.5;
    const MetaGradients mg = meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
      const double fo = fd_meta_gradient(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg, i, MetaCoefficient::omega, 1e-4);
      const double fl = fd_meta_gradient(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg, i, MetaCoefficient::lambda, 1e-4);
      CHECK(testutil::rel_err(mg.d_omega[i], fo) <= 1e-5);
      CHECK(testutil::rel_err(mg.d_lambda[i], fl) <= 1e-5);
    }
  }
}

TEST_CASE("d_lambda vanishes when the pseudo label equals the original") {
  std::mt19937_64 rng(3);
  Instance in = random_instance(rng, 5, 3, 31);
  for (std::size_t c = 0; c < 3; ++c) in.g(2, c) = in.y(2, c);
  MetaConfig cfg;
  const MetaGradients mg = meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
  CHECK(std::abs(mg.d_lambda[2]) <= 1e-12);
  const double fd = fd_meta_gradient(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg, 2, MetaCoefficient::lambda, 1e-4);
  CHECK(std::abs(fd) <= 1e-10);
}

TEST_CASE("zero probe gradient gives zero meta gradients") {
  std::mt19937_64 rng(4);
  Instance in = random_instance(rng, 4, 2, 41);
  in.model = Mlp(in.model.layer_dims(), Activation::tanh);  // all zero: uniform predictions
  in.momentum = MomentumState::zeros(in.model.num_params(), 0.9);
  // A probe set with every category equally represented at identical inputs has zero gradient.
  in.px = Matrix(3, 2, 0.0);
  in.py = Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  MetaConfig cfg;
  cfg.alpha_meta = 1e-9;
  in.x = Matrix(4, 2, 0.0);
  in.y = Matrix(4, 3, 1.0 / 3.0);
  in.g = in.y;
  const MetaGradients mg = meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
  for (double v : mg.d_omega) CHECK(std::abs(v) <= 1e-12);
  for (double v : mg.d_lambda) CHECK(std::abs(v) <= 1e-12);
  CHECK(std::abs(fd_meta_gradient(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg, 0, MetaCoefficient::omega, 1e-4)) <= 1e-10);
  CHECK_THROWS(meta_gradients(in.model, in.momentum, in.x, in.y, in.g, Matrix(0, 2), Matrix(0, 3), cfg));
}

TEST_CASE("meta step leaves model and momentum untouched") {
  std::mt19937_64 rng(5);
  Instance in = random_instance(rng, 6, 4, 51);
  const Mlp model_before = in.model;
  const auto v_before = in.momentum.velocity;
  MetaConfig cfg;
  meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
  lookahead_params(in.model, in.momentum, in.x, in.y, in.g, cfg);
  CHECK(in.model == model_before);
  CHECK(in.momentum.velocity == v_before);
}

TEST_CASE("omega_star examples and simplex property") {
  MetaConfig cfg;
  auto w = omega_star(std::vector<double>(4, 0.0), cfg);
  for (double v : w) CHECK(v == doctest::Approx(0.25));
  w = omega_star(std::vector<double>{0.6, -0.1}, cfg);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == doctest::Approx(1.0));
  w = omega_star(std::vector<double>{0.5, 0.7, 2.0}, cfg);
  for (double v : w) CHECK(v == doctest::Approx(1.0 / 3.0));

  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 0.2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> d(8);
    for (double& v : d) v = n(rng);
    const auto ws = omega_star(d, cfg);
    double s = 0.0;
    for (double v : ws) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
}

TEST_CASE("lambda_star sign rule and select_labels") {
  MetaConfig cfg;
  CHECK(lambda_star(std::vector<double>{-0.2, 0.3, 0.0}, cfg) == std::vector<int>{1, 0, 1});
  cfg.tiebreak = TieBreak::pseudo;
  CHECK(lambda_star(std::vector<double>{0.0}, cfg) == std::vector<int>{0});

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> s(0.01, 100.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> d(6), scaled(6);
    const double k = s(rng);
    for (std::size_t i = 0; i < 6; ++i) scaled[i] = k * (d[i] = n(rng));
    CHECK(lambda_star(d, cfg) == lambda_star(scaled, cfg));
  }

  const Matrix y{{1, 0}, {0, 1}}, g{{0.3, 0.7}, {0.6, 0.4}};
  CHECK(select_labels(std::vector<int>{1, 1}, y, g) == y);
  CHECK(select_labels(std::vector<int>{0, 0}, y, g) == g);
  CHECK(select_labels(std::vector<int>{1, 0}, y, g) == Matrix{{1, 0}, {0.6, 0.4}});
  CHECK_THROWS(select_labels(std::vector<int>{1}, y, g));
}

TEST_CASE("data coefficients satisfy their invariants") {
  std::mt19937_64 rng(8);
  Instance in = random_instance(rng, 8, 4, 61);
  MetaConfig cfg;
  const DataCoefficients dc =
      compute_data_coefficients(in.model, in.momentum, in.model.forward_cached(in.x), in.y, in.g, in.px, in.py, cfg);
  double s = 0.0;
  for (double v : dc.omega_star) s += v;
  CHECK(std::abs(s - 1.0) <= 1e-9);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK((dc.lambda_star[i] == 0 || dc.lambda_star[i] == 1));
    const Matrix& src = dc.lambda_star[i] == 1 ? in.y : in.g;
    for (std::size_t c = 0; c < 3; ++c) CHECK(dc.y_star(i, c) == src(i, c));
  }
  const MetaGradients mg = meta_gradients(in.model, in.momentum, in.x, in.y, in.g, in.px, in.py, cfg);
  CHECK(dc.d_omega == mg.d_omega);
  CHECK(dc.d_lambda == mg.d_lambda);
}
