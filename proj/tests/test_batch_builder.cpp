#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "dcoef/batch_builder.hpp"
#include "dcoef/losses.hpp"
#include "test_helpers.hpp"

using namespace dcoef;

namespace {

struct Pools {
  Matrix px, py, tx, ty, ta, g;
};

Pools make_pools(std::mt19937_64& rng, std::size_t M, std::size_t B) {
  Pools p;
  p.px = testutil::random_matrix(M, 3, rng);
  p.py = one_hot_rows(testutil::random_labels(M, 4, rng), 4);
  p.tx = testutil::random_matrix(B, 3, rng);
  p.ty = one_hot_rows(testutil::random_labels(B, 4, rng), 4);
  p.ta = testutil::random_matrix(B, 3, rng);
  p.g = testutil::random_distributions(B, 4, rng);
  return p;
}

}  // namespace

TEST_CASE("split_by_weight examples") {
  const std::vector<double> w{0.2, 0.3, 0.5};
  auto s = split_by_weight(w, 1.0);
  CHECK(s.clean.empty());
  CHECK(s.mislabeled.size() == 3);
  s = split_by_weight(w, 0.0);
  CHECK(s.clean.size() == 3);
  CHECK(s.mislabeled.empty());
  s = split_by_weight(std::vector<double>{0.0, 1.0}, 0.5);
  CHECK(s.mislabeled == std::vector<std::size_t>{0});
  CHECK(s.clean == std::vector<std::size_t>{1});

  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto ws = testutil::random_distribution(10, rng);
    const auto part = split_by_weight(ws, 0.1);
    std::vector<int> seen(10, 0);
    for (auto i : part.clean) ++seen[i];
    for (auto i : part.mislabeled) ++seen[i];
    for (int c : seen) CHECK(c == 1);
  }
}

TEST_CASE("beta sampler support, mean and arcsine mass") {
  BetaSampler sampler(123);
  const int n = 100000;
  double sum = 0.0;
  int mid = 0;
  for (int i = 0; i < n; ++i) {
    const double b = sampler.next();
    CHECK_MESSAGE((b > 0.0 && b < 1.0), "draw " << i);
    sum += b;
    mid += (b >= 0.4 && b <= 0.6);
  }
  CHECK(sum / n >= 0.49);
  CHECK(sum / n <= 0.51);
  const double expected = 2.0 / std::numbers::pi * (std::asin(std::sqrt(0.6)) - std::asin(std::sqrt(0.4)));
  CHECK(static_cast<double>(mid) / n == doctest::Approx(expected).epsilon(0.01 / expected));
  CHECK(sample_beta(7, 3) == sample_beta(7, 3));
  BetaSampler again(123);
  CHECK(again.next() == sample_beta(123, 0));
}

TEST_CASE("joint batch composition") {
  std::mt19937_64 rng(2);
  const Pools p = make_pools(rng, 3, 5);
  const JointBatchInputs in{p.px, p.py, p.tx, p.ty, p.ta, p.g};

  const JointBatch all_mis = build_joint_batch(in, split_by_weight(std::vector<double>(5, 0.2), 1.0));
  CHECK(all_mis.features.rows() == 3 + 2 * 5);
  for (std::size_t r = 0; r < all_mis.labels.rows(); ++r) CHECK(is_distribution(all_mis.labels.row(r)));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(all_mis.source_tags[3 + i] == SourceTag::mislabeled);
    CHECK(all_mis.source_tags[8 + i] == SourceTag::aug_mislabeled);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(all_mis.labels(3 + i, c) == p.g(i, c));
      CHECK(all_mis.labels(8 + i, c) == p.g(i, c));
    }
    for (std::size_t j = 0; j < 3; ++j) CHECK(all_mis.features(8 + i, j) == p.ta(i, j));
  }

  const JointBatch all_clean = build_joint_batch(in, split_by_weight(std::vector<double>(5, 0.2), 0.0));
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(all_clean.source_tags[3 + i] == SourceTag::clean);
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(all_clean.labels(3 + i, c) == p.ty(i, c));
      CHECK(all_clean.labels(8 + i, c) == p.ty(i, c));
    }
  }

  const Matrix empty_x(0, 3), empty_y(0, 4);
  const JointBatchInputs none{p.px, p.py, empty_x, empty_y, empty_x, empty_y};
  const JointBatch probe_only = build_joint_batch(none, WeightSplit{});
  CHECK(probe_only.features == p.px);
  CHECK(probe_only.labels == p.py);

  CHECK_THROWS(build_joint_batch(in, WeightSplit{{0, 1}, {}}));
  CHECK_THROWS(build_joint_batch(in, split_by_weight(std::vector<double>(5, 0.2), 1.0), MislabeledLabels::selected));
}

TEST_CASE("mixup examples") {
  JointBatch j;
  j.features = Matrix{{1, 0}, {0, 1}};
  j.labels = Matrix{{1, 0}, {0, 1}};
  j.source_tags = {SourceTag::probe, SourceTag::mislabeled};
  const std::vector<std::size_t> perm{1, 0};
  MixupBatch m = mixup_with(j, perm, std::vector<double>{0.3, 1.0});
  CHECK(m.mixed_features(0, 0) == doctest::Approx(0.3));
  CHECK(m.mixed_features(0, 1) == doctest::Approx(0.7));
  CHECK(m.mixed_labels(0, 0) == doctest::Approx(0.3));
  CHECK(m.mixed_labels(0, 1) == doctest::Approx(0.7));
  CHECK(m.mixed_features.row(1)[1] == 1.0);
  CHECK(m.anchor_is_probe == std::vector<bool>{true, false});

  const std::vector<std::size_t> self{0, 1};
  m = mixup_with(j, self, std::vector<double>{0.42, 0.77});
  CHECK(m.mixed_features == j.features);
  CHECK(m.mixed_labels == j.labels);
  CHECK_THROWS_AS(mixup_batch(JointBatch{}, 1), EmptyInputError);
}

TEST_CASE("mixup rows stay in the convex hull and probe anchors are never raw") {
  std::mt19937_64 rng(3);
  const Pools p = make_pools(rng, 6, 10);
  const JointBatchInputs in{p.px, p.py, p.tx, p.ty, p.ta, p.g};
  const JointBatch joint = build_joint_batch(in, split_by_weight(std::vector<double>(10, 0.1), 1.0));
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const MixupBatch m = mixup_batch(joint, seed);
    CHECK(m.mixed_features == mixup_batch(joint, seed).mixed_features);
    for (std::size_t a = 0; a < joint.features.rows(); ++a) {
      const std::size_t b = m.partner[a];
      for (std::size_t d = 0; d < 3; ++d) {
        const double lo = std::min(joint.features(a, d), joint.features(b, d)), hi = std::max(joint.features(a, d), joint.features(b, d));
        CHECK(m.mixed_features(a, d) >= lo - 1e-12);
        CHECK(m.mixed_features(a, d) <= hi + 1e-12);
      }
      CHECK(is_distribution(m.mixed_labels.row(a), 1e-9));
      if (m.anchor_is_probe[a]) {
        CHECK(m.beta_values[a] > 0.0);
        CHECK(m.beta_values[a] < 1.0);
      }
    }
  }
}

TEST_CASE("mixup losses") {
  MixupBatch m;
  m.mixed_features = Matrix(2, 1);
  m.mixed_labels = Matrix{{0.3, 0.7}, {1, 0}};
  m.anchor_is_probe = {false, false};
  MixupLosses l = mixup_losses_from_predictions(Matrix{{0.3, 0.7}, {0.5, 0.5}}, m);
  CHECK(l.probe == 0.0);
  CHECK(l.train == doctest::Approx((entropy(std::vector<double>{0.3, 0.7}) + std::log(2.0)) / 2).epsilon(1e-12));

  m.anchor_is_probe = {true, false};
  l = mixup_losses_from_predictions(Matrix{{0.3, 0.7}, {1.0, 0.0}}, m);
  CHECK(l.probe == doctest::Approx(entropy(std::vector<double>{0.3, 0.7})).epsilon(1e-12));
  CHECK(l.train == doctest::Approx(0.0));
}

TEST_CASE("mixup logit gradient matches finite differences") {
  std::mt19937_64 rng(4);
  MixupBatch m;
  m.mixed_labels = testutil::random_distributions(5, 3, rng);
  m.anchor_is_probe = {true, false, true, false, false};
  const Matrix z = testutil::random_matrix(5, 3, rng);
  const Matrix g = mixup_logit_grad(row_softmax(z), m, 1.0, 5.0);
  auto f = [&](const Matrix& zz) {
    const MixupLosses l = mixup_losses_from_predictions(row_softmax(zz), m);
    return l.probe + 5.0 * l.train;
  };
  for (std::size_t j = 0; j < z.size(); ++j) {
    Matrix a = z, b = z;
    a.values()[j] += 1e-6;
    b.values()[j] -= 1e-6;
    CHECK(g.values()[j] == doctest::Approx((f(a) - f(b)) / 2e-6).epsilon(1e-6));
  }
}
