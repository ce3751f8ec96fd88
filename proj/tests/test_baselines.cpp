#include "splice/baselines.hpp"

#include <gtest/gtest.h>

using namespace splice;

namespace {

double sse(const Mat& y, const Mat& yhat) { return (y - yhat).squaredNorm(); }

}  // namespace

TEST(Stats, RSquaredHandArithmetic) {
  Mat x(4, 1), xh(4, 1);
  x << 1, 2, 3, 4;
  xh << 1, 2, 3, 5;
  // SSE 1, SST 5.
  EXPECT_DOUBLE_EQ(r_squared(x, xh), 0.8);
  EXPECT_DOUBLE_EQ(r_squared(x, x), 1.0);
  EXPECT_THROW(r_squared(Mat::Ones(4, 1), xh), DegenerateInputError);
}

TEST(Stats, RSquaredPoolsColumns) {
  Mat x(3, 2), xh(3, 2);
  x << 0, 0, 1, 10, 2, 20;
  xh << 0, 1, 1, 10, 2, 20;
  // SST = 2 + 200; SSE = 1.
  EXPECT_NEAR(r_squared(x, xh), 1.0 - 1.0 / 202.0, 1e-15);
}

TEST(Stats, SpearmanWithoutTiesMatchesClosedForm) {
  Rng rng(3);
  const Vec a = randn(40, 1, rng), b = randn(40, 1, rng);
  const Vec ra = ranks(a), rb = ranks(b);
  const double n = 40;
  const double d2 = (ra - rb).squaredNorm();
  EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * d2 / (n * (n * n - 1)), 1e-12);
}

TEST(Stats, RanksAverageTies) {
  Vec v(5);
  v << 3, 1, 3, 2, 3;
  Vec expect(5);
  expect << 4, 1, 4, 2, 4;
  EXPECT_TRUE(ranks(v).isApprox(expect));
}

TEST(Stats, SpearmanMonotoneInvariance) {
  Rng rng(4);
  const Vec a = randn(30, 1, rng);
  const Vec b = a.array().exp() * 3.0 + 1.0;
  EXPECT_NEAR(spearman(a, b), 1.0, 1e-12);
  EXPECT_NEAR(spearman(a, -b), -1.0, 1e-12);
}

TEST(Stats, FitLinearRecoversExactRelation) {
  Rng rng(5);
  const Mat x = randn(50, 3, rng);
  Mat w(3, 2);
  w << 1, -2, 0.5, 0, 3, 1;
  const Mat y = (x * w).rowwise() + RowVec::Constant(2, 7.0);
  const LinearFit f = fit_linear(x, y);
  EXPECT_TRUE(f.coef.isApprox(w, 1e-10));
  EXPECT_TRUE(f.predict(x).isApprox(y, 1e-10));
  EXPECT_EQ(f.ridge, 0.0);
}

TEST(Stats, FitLinearRankDeficientUsesRidge) {
  Rng rng(6);
  Mat x = randn(30, 2, rng);
  x.col(1) = x.col(0);
  const Mat y = x.col(0) * 2.0;
  const LinearFit f = fit_linear(x, y);
  EXPECT_GT(f.ridge, 0.0);
  EXPECT_NEAR(r_squared(y, f.predict(x)), 1.0, 1e-6);
}

TEST(Rrr, FullRankEqualsOls) {
  Rng rng(1);
  const Mat x = randn(80, 5, rng), y = x * randn(5, 4, rng) + 0.1 * randn(80, 4, rng);
  const RrrPath path(x, y);
  EXPECT_TRUE(path.model(4).predict(x).isApprox(path.ols().predict(x), 1e-10));
}

TEST(Rrr, CoefficientRankIsBounded) {
  Rng rng(2);
  const Mat x = randn(60, 6, rng), y = randn(60, 5, rng);
  for (std::size_t r = 1; r <= 5; ++r) {
    const RrrModel m = fit_rrr(x, y, r);
    Eigen::JacobiSVD<Mat> svd(m.coef);
    const Vec s = svd.singularValues();
    for (Index k = static_cast<Index>(r); k < s.size(); ++k) EXPECT_LT(s(k), 1e-10 * s(0));
  }
}

TEST(Rrr, RankOneIsOptimalAmongRankOneCandidates) {
  // Oracle: the optimal rank-1 fit projects OLS fitted values onto the top
  // eigenvector of their Gram matrix (eigen-decomposition, not SVD).
  Rng rng(3);
  const Mat x = randn(100, 4, rng), y = x * randn(4, 3, rng) + 0.5 * randn(100, 3, rng);
  const RrrModel m = fit_rrr(x, y, 1);
  const LinearFit ols = fit_linear(x, y);
  const Mat fitted = (x.rowwise() - ols.x_mean) * ols.coef;
  Eigen::SelfAdjointEigenSolver<Mat> eig(fitted.transpose() * fitted);
  const Vec v = eig.eigenvectors().col(2);
  const Mat oracle = ols.coef * v * v.transpose();
  EXPECT_TRUE(m.coef.isApprox(oracle, 1e-8));
  const double best = sse(y, m.predict(x));
  const Vec u = ols.coef * v;
  for (int trial = 0; trial < 200; ++trial) {
    const Mat coef = (u + 0.05 * randn(4, 1, rng)) * (v + 0.05 * randn(3, 1, rng)).transpose();
    const Mat cand = ((x.rowwise() - m.x_mean) * coef).rowwise() + m.y_mean;
    EXPECT_GE(sse(y, cand), best - 1e-9);
  }
}

TEST(Rrr, InterceptHandled) {
  Rng rng(4);
  const Mat x = randn(50, 3, rng);
  const Mat y = (x * randn(3, 2, rng)).rowwise() + RowVec::Constant(2, 100.0);
  EXPECT_NEAR(r_squared(y, fit_rrr(x, y, 2).predict(x)), 1.0, 1e-10);
}

TEST(Rrr, NoiselessRankOneMapIsRecovered) {
  Rng rng(8);
  const Mat x = randn(400, 6, rng);
  const Mat y = x * randn(6, 1, rng) * randn(1, 5, rng);
  const RrrModel m = fit_rrr(x.topRows(300), y.topRows(300), 1);
  EXPECT_GT(r_squared(y.bottomRows(100), m.predict(x.bottomRows(100))), 0.999);
}

TEST(Rrr, ConstantShiftOfYOnlyMovesIntercept) {
  Rng rng(9);
  const Mat x = randn(60, 4, rng), y = randn(60, 3, rng);
  const Mat shifted = y.array() + 5.0;
  const RrrModel a = fit_rrr(x, y, 2), b = fit_rrr(x, shifted, 2);
  EXPECT_TRUE((b.predict(x).array() - 5.0).matrix().isApprox(a.predict(x), 1e-10));
}

TEST(Rrr, TrainingR2MonotoneInRank) {
  Rng rng(5);
  const Mat x = randn(120, 8, rng), y = x * randn(8, 6, rng) + randn(120, 6, rng);
  const RrrPath path(x, y);
  double prev = -1e9;
  for (std::size_t r = 1; r <= 6; ++r) {
    const double s = r_squared(y, path.model(r).predict(x));
    EXPECT_GE(s, prev - 1e-12);
    prev = s;
  }
}

TEST(Rrr, RankZeroIsConfigError) {
  Rng rng(6);
  EXPECT_THROW(fit_rrr(randn(10, 2, rng), randn(10, 2, rng), 0), ConfigError);
}

TEST(Saturation, Rules) {
  EXPECT_EQ(saturation_dim({1, 2, 3, 4}, {0.1, 0.5, 0.96, 1.0}), 3u);
  EXPECT_EQ(saturation_dim({1, 2, 3, 4}, {0.1, 0.5, 0.949, 1.0}), 4u);
  EXPECT_EQ(saturation_dim({2, 5}, {1.0, 0.2}), 2u);
  EXPECT_EQ(saturation_dim({1, 2, 3}, {0.5, 0.8, 1.0}, 0.5), 1u);
  EXPECT_THROW(saturation_dim({}, {}), ConfigError);
  EXPECT_THROW(saturation_dim({2, 1}, {0.0, 1.0}), ConfigError);
}

TEST(Saturation, RrrFindsTrueRank) {
  Rng rng(7);
  const Mat x = randn(2000, 10, rng);
  const Mat w = randn(10, 3, rng) * randn(3, 10, rng);
  const Mat y = x * w + 0.05 * randn(2000, 10, rng);
  const SaturationCurve c = rrr_saturation(x.topRows(1500), y.topRows(1500), x.bottomRows(500), y.bottomRows(500),
                                           {1, 2, 3, 4, 5, 6, 8, 10});
  EXPECT_EQ(c.saturation_dim, 3u);
}

TEST(Cca, DuplicateViewsGiveUnitCorrelation) {
  Rng rng(1);
  const Mat a = randn(200, 3, rng);
  const Mat b = a * randn(3, 3, rng);
  const CcaResult r = fit_linear_cca(a, b, 3);
  for (double c : r.correlations) EXPECT_NEAR(c, 1.0, 1e-6);
}

TEST(Cca, IndependentViewsGiveSmallCorrelation) {
  Rng rng(2);
  const CcaResult r = fit_linear_cca(randn(20000, 2, rng), randn(20000, 2, rng), 2);
  EXPECT_LT(r.correlations[0], 0.05);
}

TEST(Cca, MatchesGeneralisedEigenproblem) {
  Rng rng(3);
  const Mat s = randn(500, 2, rng);
  const Mat a = hstack(s, randn(500, 2, rng)) * randn(4, 4, rng);
  const Mat b = hstack(s + 0.7 * randn(500, 2, rng), randn(500, 1, rng)) * randn(3, 3, rng);
  const CcaResult r = fit_linear_cca(a, b, 3);
  const Mat ac = a.rowwise() - a.colwise().mean(), bc = b.rowwise() - b.colwise().mean();
  const Mat caa = ac.transpose() * ac, cbb = bc.transpose() * bc, cab = ac.transpose() * bc;
  const Mat k = caa.inverse() * cab * cbb.inverse() * cab.transpose();
  Eigen::EigenSolver<Mat> es(k);
  std::vector<double> ev;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) ev.push_back(std::sqrt(std::max(0.0, es.eigenvalues()(i).real())));
  std::sort(ev.rbegin(), ev.rend());
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(r.correlations[i], ev[i], 1e-8);
  // Projections have the reported correlations.
  const Mat pa = r.project_A(a), pb = r.project_B(b);
  for (Index i = 0; i < 3; ++i) {
    const Vec u = pa.col(i).array() - pa.col(i).mean(), v = pb.col(i).array() - pb.col(i).mean();
    EXPECT_NEAR(u.dot(v) / std::sqrt(u.squaredNorm() * v.squaredNorm()), r.correlations[static_cast<std::size_t>(i)],
                1e-6);
  }
}

TEST(Classifier, SeparableBlobsReachFullTrainingAccuracy) {
  Rng rng(1);
  Mat x(300, 2);
  std::vector<int> y;
  for (Index i = 0; i < 300; ++i) {
    const int k = static_cast<int>(i % 3);
    x.row(i) = 0.3 * randn(1, 2, rng);
    x(i, k == 2 ? 1 : 0) += k == 1 ? -5.0 : 5.0;
    y.push_back(k);
  }
  EXPECT_EQ(fit_linear_classifier(x, y, 3, {0.01, 30, 1e-4, 1}).train_accuracy, 1.0);
}

TEST(Classifier, ShuffledLabelsGiveChanceOnHeldOut) {
  Rng rng(2);
  const Mat x = randn(2000, 5, rng);
  std::vector<int> y;
  std::uniform_int_distribution<int> u(0, 4);
  for (int i = 0; i < 2000; ++i) y.push_back(u(rng));
  const std::vector<int> ytr(y.begin(), y.begin() + 1000), yte(y.begin() + 1000, y.end());
  const auto fit = fit_linear_classifier(x.topRows(1000), ytr, 5, {0.01, 20, 1e-4, 2});
  EXPECT_NEAR(accuracy(fit.model.predict(x.bottomRows(1000)), yte), 0.2, 0.05);
}

TEST(Classifier, XorBoundedByBestLinearSeparator) {
  Rng rng(3);
  Mat x(400, 2);
  std::vector<int> y;
  for (Index i = 0; i < 400; ++i) {
    const double sx = (i & 1) ? 1.0 : -1.0, sy = (i & 2) ? 1.0 : -1.0;
    x(i, 0) = sx + 0.2 * standard_normal(rng);
    x(i, 1) = sy + 0.2 * standard_normal(rng);
    y.push_back(sx * sy > 0 ? 1 : 0);
  }
  // Brute force over directions and thresholds.
  double best = 0.0;
  for (int a = 0; a < 360; ++a) {
    const double th = a * M_PI / 180.0;
    const Vec proj = x * Vec((Vec(2) << std::cos(th), std::sin(th)).finished());
    for (Index t = 0; t < proj.size(); ++t) {
      std::size_t hit = 0;
      for (Index i = 0; i < proj.size(); ++i) hit += (proj(i) > proj(t)) == (y[static_cast<std::size_t>(i)] == 1);
      best = std::max(best, static_cast<double>(hit) / 400.0);
    }
  }
  const double acc = fit_linear_classifier(x, y, 2, {0.01, 50, 1e-4, 3}).train_accuracy;
  EXPECT_LE(acc, best + 1.0 / 400.0);
  EXPECT_LT(best, 0.8);
  EXPECT_LE(acc, 0.6);
}

TEST(Classifier, InvariantToFeatureScaling) {
  Rng rng(4);
  const Mat x = randn(200, 3, rng);
  std::vector<int> y;
  for (Index i = 0; i < 200; ++i) y.push_back(x(i, 0) + 0.5 * x(i, 2) > 0 ? 1 : 0);
  Mat scaled = x;
  scaled.col(0) *= 1024.0;
  scaled.col(1) *= 0.25;
  const ClassifierRecipe r{0.01, 20, 1e-4, 5};
  EXPECT_EQ(fit_linear_classifier(x, y, 2, r).model.predict(x), fit_linear_classifier(scaled, y, 2, r).model.predict(scaled));
}

TEST(Classifier, InputValidation) {
  const Mat x = Mat::Zero(3, 2);
  EXPECT_THROW(fit_linear_classifier(x, {0, 1}, 2), ConfigError);
  EXPECT_THROW(fit_linear_classifier(x, {0, 0, 0}, 2), DegenerateInputError);
  EXPECT_THROW(fit_linear_classifier(x, {0, 1, 5}, 2), ConfigError);
}
