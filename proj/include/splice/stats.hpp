#pragma once

// Small statistics helpers shared by baselines and metrics.

#include "splice/core.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>

namespace splice {

/// 1 - SSE/SST with SST taken about the per-dimension mean and summed over dims.
inline double r_squared(const Mat& x, const Mat& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw ConfigError("r_squared: shape mismatch");
  const RowVec mu = x.colwise().mean();
  const double sst = (x.rowwise() - mu).squaredNorm();
  if (!(sst > 0.0)) throw DegenerateInputError("r_squared: data has zero variance");
  return 1.0 - (x - x_hat).squaredNorm() / sst;
}

inline double pearson(const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.size() < 2) throw ConfigError("pearson: need equal lengths >= 2");
  const Vec da = a.array() - a.mean(), db = b.array() - b.mean();
  const double den = std::sqrt(da.squaredNorm() * db.squaredNorm());
  if (!(den > 0.0)) return 0.0;
  return da.dot(db) / den;
}

/// Ranks starting at 1; tied values share their average rank.
inline Vec ranks(const Vec& v) {
  std::vector<Index> order(static_cast<std::size_t>(v.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return v(a) < v(b); });
  Vec r(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v(order[j + 1]) == v(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r(order[k]) = avg;
    i = j + 1;
  }
  return r;
}

inline double spearman(const Vec& a, const Vec& b) { return pearson(ranks(a), ranks(b)); }

/// Per-column mean and standard deviation; zero-variance columns get sd 1.
struct ColumnScaler {
  RowVec mean, sd;

  static ColumnScaler fit(const Mat& x) {
    ColumnScaler s;
    s.mean = x.colwise().mean();
    s.sd = ((x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
    for (Index j = 0; j < s.sd.size(); ++j)
      if (!(s.sd(j) > 1e-12)) s.sd(j) = 1.0;
    return s;
  }
  Mat apply(const Mat& x) const { return (x.rowwise() - mean).array().rowwise() / sd.array(); }
};

/// Least squares with intercept: y = (x - x_mean) * coef + y_mean.
struct LinearFit {
  Mat coef;
  RowVec x_mean, y_mean;
  double ridge = 0.0;

  Mat predict(const Mat& x) const {
    return ((x.rowwise() - x_mean) * coef).rowwise() + y_mean;
  }
};

/// Ridge epsilon applied when the centred design is rank deficient, relative
/// to the mean diagonal of X^T X.
inline constexpr double kRidgeEpsilon = 1e-8;

inline LinearFit fit_linear(const Mat& x, const Mat& y) {
  if (x.rows() != y.rows()) throw ConfigError("fit_linear: row counts differ");
  if (x.rows() < 2) throw DegenerateInputError("fit_linear: need at least 2 rows");
  LinearFit f;
  f.x_mean = x.colwise().mean();
  f.y_mean = y.colwise().mean();
  if (x.cols() == 0) {
    f.coef = Mat::Zero(0, y.cols());
    return f;
  }
  const Mat xc = x.rowwise() - f.x_mean;
  const Mat yc = y.rowwise() - f.y_mean;
  Mat xtx = xc.transpose() * xc;
  const Mat xty = xc.transpose() * yc;
  Eigen::SelfAdjointEigenSolver<Mat> eig(xtx);
  const double top = eig.eigenvalues().maxCoeff();
  const double low = eig.eigenvalues().minCoeff();
  if (!(top > 0.0) || low <= 1e-10 * top) {
    f.ridge = kRidgeEpsilon * std::max(xtx.trace() / static_cast<double>(x.cols()), 1e-300);
    xtx.diagonal().array() += f.ridge;
  }
  f.coef = xtx.ldlt().solve(xty);
  return f;
}

/// Held-out R^2 of a linear regression from x to y.
inline double regression_r2(const Mat& x_train, const Mat& y_train, const Mat& x_test, const Mat& y_test) {
  return r_squared(y_test, fit_linear(x_train, y_train).predict(x_test));
}

/// Principal axes (columns, descending variance) of the rows of x.
inline Mat principal_axes(const Mat& x) {
  const Mat xc = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Mat> eig(xc.transpose() * xc);
  return eig.eigenvectors().rowwise().reverse();
}

}  // namespace splice
