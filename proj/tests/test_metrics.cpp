#include "splice/metrics.hpp"

#include <gtest/gtest.h>

using namespace splice;

namespace {

// 360 x 2 trace of a unit circle delayed by `shift` degrees.
Mat circle_curve(int shift, double radius = 1.0) {
  Mat c(360, 2);
  for (int t = 0; t < 360; ++t) {
    const double a = (t - shift) * M_PI / 180.0;
    c(t, 0) = radius * std::cos(a);
    c(t, 1) = radius * std::sin(a);
  }
  return c;
}

}  // namespace

TEST(Angles, WrapDegrees) {
  EXPECT_EQ(wrap_degrees(-1), 359);
  EXPECT_EQ(wrap_degrees(360), 0);
  EXPECT_EQ(wrap_degrees(725), 5);
}

TEST(Angles, OffsetsRecovered) {
  const std::vector<Mat> curves{circle_curve(0), circle_curve(37), circle_curve(90), circle_curve(270)};
  EXPECT_EQ(angle_offset_correct(curves, 0), (std::vector<int>{0, 37, 90, 270}));
  // Relative to another reference the offsets shift uniformly.
  EXPECT_EQ(angle_offset_correct(curves, 1), (std::vector<int>{323, 0, 53, 233}));
}

TEST(Angles, RandomReferenceIsReproducible) {
  const std::vector<Mat> curves{circle_curve(0), circle_curve(10), circle_curve(20)};
  Rng a(5), b(5);
  EXPECT_EQ(angle_offset_correct(curves, a), angle_offset_correct(curves, b));
}

TEST(AngleVariance, ExactCircleExplainsAlmostAll) {
  std::vector<Mat> curves;
  std::vector<int> offsets;
  for (int k = 0; k < 10; ++k) {
    curves.push_back(circle_curve(k * 31));
    offsets.push_back(k * 31);
  }
  const AngleVarianceReport r = angle_conditioned_variance(curves, offsets);
  // Oracle: window of five consecutive degrees on a unit circle.
  Mat w(5, 2);
  for (int k = -2; k <= 2; ++k) w.row(k + 2) << std::cos(k * M_PI / 180.0), std::sin(k * M_PI / 180.0);
  const RowVec mu = w.colwise().mean();
  const double window = (w.rowwise() - mu).squaredNorm() / 5.0;
  EXPECT_NEAR(r.total_variance, 1.0, 1e-12);
  EXPECT_NEAR(r.fraction_explained, 1.0 - window, 1e-12);
  EXPECT_GT(r.fraction_explained, 0.99);
}

TEST(AngleVariance, WrongOffsetsLoseVariance) {
  std::vector<Mat> curves;
  std::vector<int> wrong;
  for (int k = 0; k < 8; ++k) {
    curves.push_back(circle_curve(k * 45));
    wrong.push_back(0);
  }
  EXPECT_LT(angle_conditioned_variance(curves, wrong).fraction_explained, 0.05);
}

TEST(AngleVariance, NoiseExplainsNothing) {
  Rng rng(1);
  std::vector<Mat> curves;
  for (int k = 0; k < 50; ++k) curves.push_back(randn(360, 3, rng));
  const AngleVarianceReport r = angle_conditioned_variance(curves, std::vector<int>(50, 0));
  EXPECT_NEAR(r.fraction_explained, 0.0, 0.03);
}

TEST(AngleVariance, InvariantToRotationScaleAndShift) {
  Rng rng(2);
  std::vector<Mat> curves, moved;
  std::vector<int> offsets;
  const Mat q = Eigen::HouseholderQR<Mat>(randn(2, 2, rng)).householderQ();
  for (int k = 0; k < 6; ++k) {
    curves.push_back(circle_curve(k * 17) + 0.3 * randn(360, 2, rng));
    moved.push_back(((curves.back() * q) * 4.5).rowwise() + RowVec::Constant(2, -3.0));
    offsets.push_back(k * 17);
  }
  EXPECT_NEAR(angle_conditioned_variance(curves, offsets).fraction_explained,
              angle_conditioned_variance(moved, offsets).fraction_explained, 1e-10);
}

TEST(AngleVariance, ConstantLatentIsDegenerate) {
  EXPECT_THROW(angle_conditioned_variance({Mat::Ones(360, 1)}, {0}), DegenerateInputError);
}

TEST(Membership, ProjectionsOnDataHaveZeroDistance) {
  Rng rng(3);
  const Mat data = randn(50, 4, rng);
  const std::vector<int> labels(50, 1);
  const MembershipReport r = manifold_membership(data.topRows(10), data, &labels);
  for (double d : r.projection_nn) EXPECT_EQ(d, 0.0);
  EXPECT_EQ(r.fraction_below_within_class, 1.0);
  for (std::size_t i = 0; i < r.data_nn.size(); ++i) EXPECT_GT(r.data_nn[i], 0.0);
}

TEST(Membership, NearestDistancesMatchBruteForce) {
  Rng rng(4);
  const Mat q = randn(7, 3, rng), data = randn(30, 3, rng);
  const MembershipReport r = manifold_membership(q, data);
  for (Index i = 0; i < 7; ++i) {
    double best = 1e300;
    for (Index j = 0; j < 30; ++j) best = std::min(best, (q.row(i) - data.row(j)).norm());
    EXPECT_NEAR(r.projection_nn[static_cast<std::size_t>(i)], best, 1e-12);
  }
  EXPECT_TRUE(std::isnan(r.mean_within_class));
}

TEST(Membership, WithinClassDistanceHandArithmetic) {
  Mat x(4, 1);
  x << 0, 3, 10, 14;
  // Class 0: {0, 3} -> 3; class 1: {10, 14} -> 4.
  EXPECT_DOUBLE_EQ(mean_within_class_distance(x, {0, 0, 1, 1}), 3.5);
  EXPECT_THROW(mean_within_class_distance(x, {0, 1, 2, 3}), DegenerateInputError);
}

TEST(HigherOrder, CentredPower) {
  Mat x(2, 1);
  x << 1, 3;
  Mat expect(2, 1);
  expect << -1, 1;
  EXPECT_TRUE(centred_power(x, RowVec::Constant(1, 2.0), 3).isApprox(expect));
}

TEST(HigherOrder, DetectsQuadraticDependence) {
  // y depends on z only through z^2: invisible to order-1 means of y, visible to the network.
  Rng rng(5);
  const Mat z = randn(3000, 1, rng);
  const Mat y = z.array().square().matrix() + 0.1 * randn(3000, 1, rng);
  PredictorConfig cfg;
  cfg.steps = 600;
  cfg.hidden = {32, 32};
  const double dep = higher_order_ratio(z.topRows(2000), y.topRows(2000), z.bottomRows(1000), y.bottomRows(1000), 1, cfg);
  const Mat noise = randn(3000, 1, rng);
  const double ind =
      higher_order_ratio(noise.topRows(2000), y.topRows(2000), noise.bottomRows(1000), y.bottomRows(1000), 2, cfg);
  EXPECT_GT(dep, 0.8);
  EXPECT_LT(ind, 0.05);
}

TEST(HigherOrder, OrderMustBePositive) {
  const Mat z = Mat::Ones(4, 1);
  EXPECT_THROW(higher_order_ratio(z, z, z, z, 0), ConfigError);
}

TEST(Leakage, TrueToyPrivatesCarryNoSharedLabel) {
  LinearToyConfig c;
  c.noise = 0.1;
  const PairedDataset d = gen_linear_toy(c);
  // Labels: quadrant of the true shared latent.
  std::vector<int> labels;
  for (Index i = 0; i < d.size(); ++i) labels.push_back((d.truth->s(i, 0) > 0 ? 1 : 0) + (d.truth->s(i, 1) > 0 ? 2 : 0));
  const auto tr = d.indices(Split::Train), te = d.indices(Split::Test);
  std::vector<int> ytr, yte;
  for (Index i : tr) ytr.push_back(labels[static_cast<std::size_t>(i)]);
  for (Index i : te) yte.push_back(labels[static_cast<std::size_t>(i)]);
  const ClassifierRecipe r{0.01, 20, 1e-4, 1};
  const auto priv = fit_linear_classifier(take_rows(d.truth->z_B, tr), ytr, 4, r);
  EXPECT_NEAR(accuracy(priv.model.predict(take_rows(d.truth->z_B, te)), yte), 0.25, 0.05);
  const auto shared = fit_linear_classifier(take_rows(d.truth->s, tr), ytr, 4, r);
  EXPECT_GT(accuracy(shared.model.predict(take_rows(d.truth->s, te)), yte), 0.9);
}
