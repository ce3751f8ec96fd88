#pragma once

// Linear comparison methods: reduced rank regression, CCA, and a one-vs-rest
// linear SVM trained by hinge-loss SGD.

#include "splice/stats.hpp"

#include <Eigen/SVD>

namespace splice {

struct RrrModel {
  std::size_t rank = 0;
  Mat coef;  // n_X x n_Y, rank <= `rank`
  RowVec x_mean, y_mean;
  double ridge = 0.0;
  std::vector<double> train_r2;  // by rank 1..max_rank of the path that produced it

  Mat predict(const Mat& x) const { return ((x.rowwise() - x_mean) * coef).rowwise() + y_mean; }
};

/// OLS fit plus the SVD of the fitted values; every rank is a projection of
/// the OLS coefficients onto the leading right singular vectors.
class RrrPath {
 public:
  RrrPath(const Mat& x, const Mat& y) {
    if (x.rows() != y.rows()) throw ConfigError("rrr: row counts differ");
    ols_ = fit_linear(x, y);
    const Mat fitted = (x.rowwise() - ols_.x_mean) * ols_.coef;
    Eigen::JacobiSVD<Mat> svd(fitted, Eigen::ComputeThinV);
    v_ = svd.matrixV();
    max_rank_ = static_cast<std::size_t>(std::min(x.cols(), y.cols()));
    x_ = &x;
    y_ = &y;
  }

  std::size_t max_rank() const { return max_rank_; }
  const LinearFit& ols() const { return ols_; }

  RrrModel model(std::size_t rank) const {
    if (rank < 1 || rank > max_rank_) throw ConfigError("rrr: rank must be in [1, min(n_X, n_Y)]");
    if (x_->rows() < static_cast<Index>(rank) + 1) throw DegenerateInputError("rrr: need at least rank+1 samples");
    RrrModel m;
    m.rank = rank;
    m.x_mean = ols_.x_mean;
    m.y_mean = ols_.y_mean;
    m.ridge = ols_.ridge;
    const Index r = std::min<Index>(static_cast<Index>(rank), v_.cols());
    const Mat vr = v_.leftCols(r);
    m.coef = ols_.coef * vr * vr.transpose();
    return m;
  }

 private:
  LinearFit ols_;
  Mat v_;
  std::size_t max_rank_ = 0;
  const Mat* x_ = nullptr;
  const Mat* y_ = nullptr;
};

inline RrrModel fit_rrr(const Mat& x, const Mat& y, std::size_t rank) {
  RrrPath path(x, y);
  RrrModel m = path.model(rank);
  m.train_r2.push_back(r_squared(y, m.predict(x)));
  return m;
}

struct SaturationCurve {
  std::vector<std::size_t> dims;
  std::vector<double> scores;
  double fraction = 0.95;
  std::size_t saturation_dim = 0;
};

/// Smallest dim whose score reaches `f` times the best score on the curve.
inline std::size_t saturation_dim(const std::vector<std::size_t>& dims, const std::vector<double>& scores,
                                  double f = 0.95) {
  if (dims.empty() || dims.size() != scores.size()) throw ConfigError("saturation_dim: empty or mismatched curve");
  for (std::size_t i = 1; i < dims.size(); ++i)
    if (dims[i] <= dims[i - 1]) throw ConfigError("saturation_dim: dims must be strictly increasing");
  const double best = *std::max_element(scores.begin(), scores.end());
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (scores[i] >= f * best) return dims[i];
  return dims.back();
}

inline SaturationCurve make_curve(std::vector<std::size_t> dims, std::vector<double> scores, double f) {
  SaturationCurve c;
  c.dims = std::move(dims);
  c.scores = std::move(scores);
  c.fraction = f;
  c.saturation_dim = saturation_dim(c.dims, c.scores, f);
  return c;
}

/// Held-out R^2 of RRR predicting y from x at every requested rank.
inline SaturationCurve rrr_saturation(const Mat& x_train, const Mat& y_train, const Mat& x_test, const Mat& y_test,
                                      std::vector<std::size_t> dims, double f = 0.95) {
  RrrPath path(x_train, y_train);
  std::vector<double> scores;
  for (std::size_t d : dims) scores.push_back(r_squared(y_test, path.model(d).predict(x_test)));
  return make_curve(std::move(dims), std::move(scores), f);
}

struct CcaResult {
  Mat W_A, W_B;  // projections (n_A x k, n_B x k)
  RowVec mean_A, mean_B;
  std::vector<double> correlations;  // non-increasing, in [0, 1]
  double ridge_A = 0.0, ridge_B = 0.0;

  Mat project_A(const Mat& x) const { return (x.rowwise() - mean_A) * W_A; }
  Mat project_B(const Mat& x) const { return (x.rowwise() - mean_B) * W_B; }
};

namespace detail {

/// C^{-1/2} for a covariance matrix; a ridge of eps * mean eigenvalue is
/// added when the matrix is (numerically) singular.
inline Mat inverse_sqrt(Mat c, double& ridge) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(c);
  const double top = eig.eigenvalues().maxCoeff();
  const double low = eig.eigenvalues().minCoeff();
  ridge = 0.0;
  if (!(top > 0.0) || low <= 1e-10 * top) {
    ridge = kRidgeEpsilon * std::max(c.trace() / static_cast<double>(c.rows()), 1e-300);
    c.diagonal().array() += ridge;
    eig.compute(c);
  }
  const Vec inv = eig.eigenvalues().array().rsqrt();
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace detail

/// Classical CCA by whitening and SVD. On the training data the projections
/// have identity covariance and diagonal cross-covariance.
inline CcaResult fit_linear_cca(const Mat& x_A, const Mat& x_B, std::size_t k) {
  if (x_A.rows() != x_B.rows()) throw ConfigError("cca: row counts differ");
  if (k < 1 || static_cast<Index>(k) > std::min(x_A.cols(), x_B.cols()))
    throw ConfigError("cca: n_components must be in [1, min dims]");
  if (x_A.rows() < 2) throw DegenerateInputError("cca: need at least 2 samples");
  CcaResult r;
  r.mean_A = x_A.colwise().mean();
  r.mean_B = x_B.colwise().mean();
  const Mat a = x_A.rowwise() - r.mean_A, b = x_B.rowwise() - r.mean_B;
  const double n1 = static_cast<double>(x_A.rows() - 1);
  const Mat wa = detail::inverse_sqrt(a.transpose() * a / n1, r.ridge_A);
  const Mat wb = detail::inverse_sqrt(b.transpose() * b / n1, r.ridge_B);
  const Mat t = wa * (a.transpose() * b / n1) * wb;
  Eigen::JacobiSVD<Mat> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Index kk = static_cast<Index>(k);
  r.W_A = wa * svd.matrixU().leftCols(kk);
  r.W_B = wb * svd.matrixV().leftCols(kk);
  for (Index i = 0; i < kk; ++i) r.correlations.push_back(std::clamp(svd.singularValues()(i), 0.0, 1.0));
  return r;
}

struct ClassifierRecipe {
  double lr = 0.01;
  int epochs = 200;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct LinearClassifier {
  Mat W;  // classes x features
  Vec b;
  ColumnScaler scaler;

  std::vector<int> predict(const Mat& x) const {
    const Mat s = (scaler.apply(x) * W.transpose()).rowwise() + b.transpose();
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < s.rows(); ++i) {
      Index best;
      s.row(i).maxCoeff(&best);
      out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
  }
};

inline double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size() || labels.empty()) throw ConfigError("accuracy: size mismatch");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

struct ClassifierFit {
  LinearClassifier model;
  double train_accuracy = 0.0;
};

/// One-vs-rest linear SVM: per-sample SGD on the hinge loss with L2 weight
/// decay, over z-scored features, visiting samples in a seeded random order.
inline ClassifierFit fit_linear_classifier(const Mat& x, const std::vector<int>& labels, int n_classes,
                                           const ClassifierRecipe& recipe = {}) {
  if (static_cast<Index>(labels.size()) != x.rows()) throw ConfigError("classifier: labels/rows mismatch");
  if (n_classes < 2) throw ConfigError("classifier: need at least 2 classes");
  std::vector<int> present(static_cast<std::size_t>(n_classes), 0);
  for (int l : labels) {
    if (l < 0 || l >= n_classes) throw ConfigError("classifier: label out of range");
    present[static_cast<std::size_t>(l)] = 1;
  }
  if (std::accumulate(present.begin(), present.end(), 0) < 2)
    throw DegenerateInputError("classifier: only one class present");

  ClassifierFit fit;
  LinearClassifier& c = fit.model;
  c.scaler = ColumnScaler::fit(x);
  const Mat xs = c.scaler.apply(x);
  c.W = Mat::Zero(n_classes, x.cols());
  c.b = Vec::Zero(n_classes);
  Rng rng(derive_seed(recipe.seed, 31));
  std::vector<Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  const double decay = 1.0 - recipe.lr * recipe.l2;
  for (int epoch = 0; epoch < recipe.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index i : order) {
      const auto xi = xs.row(i);
      const Vec scores = c.W * xi.transpose() + c.b;
      c.W *= decay;
      for (int k = 0; k < n_classes; ++k) {
        const double y = labels[static_cast<std::size_t>(i)] == k ? 1.0 : -1.0;
        if (y * scores(k) < 1.0) {
          c.W.row(k) += recipe.lr * y * xi;
          c.b(k) += recipe.lr * y;
        }
      }
    }
  }
  fit.train_accuracy = accuracy(c.predict(x), labels);
  return fit;
}

}  // namespace splice
