#pragma once

// Evaluation: angle-conditioned private variance, leakage scores, manifold
// membership, and higher-order independence checks.

#include "splice/baselines.hpp"
#include "splice/datagen.hpp"
#include "splice/geometry.hpp"

#include <map>

namespace splice {

inline int wrap_degrees(long v) { return static_cast<int>(((v % 360) + 360) % 360); }

/// For each digit, the circular shift o in {0..359} maximising
/// sum_theta <ref(theta), curve(theta + o)> over mean-centred curves. Each
/// curve is 360 x d, row t holding the latent at t degrees.
inline std::vector<int> angle_offset_correct(const std::vector<Mat>& curves, std::size_t reference) {
  if (curves.empty()) return {};
  if (reference >= curves.size()) throw ConfigError("angle_offset_correct: reference out of range");
  for (const Mat& c : curves)
    if (c.rows() != 360 || c.cols() != curves[reference].cols())
      throw ConfigError("angle_offset_correct: curves must be 360 x d with equal d");
  const Mat ref = curves[reference].rowwise() - curves[reference].colwise().mean();
  std::vector<int> offsets;
  for (const Mat& raw : curves) {
    const Mat c = raw.rowwise() - raw.colwise().mean();
    int best = 0;
    double best_score = 0.0;
    for (int o = 0; o < 360; ++o) {
      double s = 0.0;
      for (int t = 0; t < 360; ++t) s += ref.row(t).dot(c.row((t + o) % 360));
      if (o == 0 || s > best_score + 1e-12 * std::abs(best_score)) {
        best_score = s;
        best = o;
      }
    }
    offsets.push_back(best);
  }
  return offsets;
}

/// Reference digit drawn with the given seed.
inline std::vector<int> angle_offset_correct(const std::vector<Mat>& curves, Rng& rng) {
  if (curves.empty()) return {};
  std::uniform_int_distribution<std::size_t> pick(0, curves.size() - 1);
  return angle_offset_correct(curves, pick(rng));
}

struct AngleVarianceReport {
  std::vector<int> offsets;
  std::vector<double> window_variance;  // one per window centre 0..359
  double total_variance = 0.0;
  double fraction_explained = 0.0;
};

namespace detail {

inline double summed_variance(const Mat& x) {
  if (x.rows() < 2) return 0.0;
  const RowVec mu = x.colwise().mean();
  return (x.rowwise() - mu).squaredNorm() / static_cast<double>(x.rows());
}

}  // namespace detail

/// Variance of the private latent (summed over coordinates) within windows of
/// `width` degrees centred at every whole degree, after aligning each digit
/// by its offset. fraction = 1 - mean window variance / total variance.
inline AngleVarianceReport angle_conditioned_variance(const std::vector<Mat>& curves, const std::vector<int>& offsets,
                                                      double width = 5.0) {
  if (curves.size() != offsets.size()) throw ConfigError("angle_conditioned_variance: offsets/curves mismatch");
  if (curves.empty()) throw DegenerateInputError("angle_conditioned_variance: no curves");
  const Index d = curves.front().cols();
  // Samples bucketed by aligned integer angle.
  std::vector<std::vector<RowVec>> by_angle(360);
  Mat all(static_cast<Index>(curves.size()) * 360, d);
  Index row = 0;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    if (curves[i].rows() != 360 || curves[i].cols() != d) throw ConfigError("angle_conditioned_variance: bad curve");
    for (int t = 0; t < 360; ++t) {
      by_angle[static_cast<std::size_t>(wrap_degrees(t - offsets[i]))].push_back(curves[i].row(t));
      all.row(row++) = curves[i].row(t);
    }
  }
  AngleVarianceReport r;
  r.offsets = offsets;
  r.total_variance = detail::summed_variance(all);
  if (!(r.total_variance > 0.0)) throw DegenerateInputError("angle_conditioned_variance: latent is constant");
  const int half = static_cast<int>(std::floor(width / 2.0));
  double sum = 0.0;
  for (int c = 0; c < 360; ++c) {
    std::vector<RowVec> rows;
    for (int k = -half; k <= half; ++k)
      for (const auto& v : by_angle[static_cast<std::size_t>(wrap_degrees(c + k))]) rows.push_back(v);
    Mat w(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) w.row(static_cast<Index>(i)) = rows[i];
    r.window_variance.push_back(detail::summed_variance(w));
    sum += r.window_variance.back();
  }
  r.fraction_explained = 1.0 - (sum / 360.0) / r.total_variance;
  return r;
}

/// Private-B latent traced over 360 one-degree rotations of each probe digit.
/// `images` are raw flattened square images (rows).
inline std::vector<Mat> private_angle_curves(const SpliceModel& m, const Mat& images) {
  if (m.dims.m_zB == 0) throw ConfigError("private_angle_curves: model has no private B latent");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(images.cols()))));
  if (side * side != images.cols()) throw ConfigError("private_angle_curves: images are not square");
  std::vector<Mat> curves;
  for (Index i = 0; i < images.rows(); ++i) {
    const Mat img = as_image(images.row(i), side, side);
    Mat rotated(360, images.cols());
    for (int t = 0; t < 360; ++t) rotated.row(t) = flatten(rotate_image(img, static_cast<double>(t)));
    curves.push_back(m.F_B.predict(m.standardizer.to_model_B(rotated)));
  }
  return curves;
}

struct PredictorConfig {
  std::vector<std::size_t> hidden{64, 64};
  long steps = 2000;
  std::size_t batch = 256;
  double base_lr = 1e-3;
  double final_lr = 1e-5;
  std::uint64_t seed = 0;
};

/// Freshly initialised network trained by Adam to predict y from z (inputs are
/// z-scored with training statistics). Returns held-out predictions.
inline Mat fit_fresh_predictor(const Mat& z_train, const Mat& y_train, const Mat& z_test, const PredictorConfig& cfg) {
  const ColumnScaler zs = ColumnScaler::fit(z_train);
  const Mat zt = zs.apply(z_train);
  Mlp net = init_net(chain(static_cast<std::size_t>(z_train.cols()), cfg.hidden, static_cast<std::size_t>(y_train.cols())),
                     ActivationSpec{}, derive_seed(cfg.seed, 41));
  AdamConfig ac;
  ac.base_lr = cfg.base_lr;
  ac.final_lr = cfg.final_lr;
  ac.total_epochs = std::max<long>(1, cfg.steps - 1);
  AdamState st(net, ac);
  Rng rng(derive_seed(cfg.seed, 42));
  const Index batch = std::min<Index>(static_cast<Index>(cfg.batch), zt.rows());
  for (long s = 0; s < cfg.steps; ++s) {
    const auto idx = detail::random_batch(zt.rows(), batch, rng);
    const Mat yb = take_rows(y_train, idx);
    const Mat out = net.forward(take_rows(zt, idx));
    adam_step(net, net.backward(recon_loss_grad(yb, out)), st, static_cast<double>(s));
  }
  return net.predict(zs.apply(z_test));
}

/// Var[M(z)] on held-out rows divided by the target's mean per-dimension variance.
inline double fresh_variance_ratio(const Mat& z_train, const Mat& y_train, const Mat& z_test, const Mat& y_test,
                                   const PredictorConfig& cfg) {
  const double target = detail::summed_variance(y_test) / static_cast<double>(y_test.cols());
  if (!(target > 0.0)) throw DegenerateInputError("variance ratio: target has zero variance");
  return output_variance(fit_fresh_predictor(z_train, y_train, z_test, cfg)) / target;
}

/// Elementwise N-th power of the data centred on the training mean.
inline Mat centred_power(const Mat& x, const RowVec& mean, int order) {
  return (x.rowwise() - mean).array().pow(static_cast<double>(order)).matrix();
}

/// Fresh-net variance ratio for predicting the N-th power of the centred
/// other view from a private latent. N = 1 is the plain measurement test.
inline double higher_order_ratio(const Mat& z_train, const Mat& other_train, const Mat& z_test, const Mat& other_test,
                                 int order, const PredictorConfig& cfg = {}) {
  if (order < 1) throw ConfigError("higher_order_check: order must be >= 1");
  const RowVec mu = other_train.colwise().mean();
  return fresh_variance_ratio(z_train, centred_power(other_train, mu, order), z_test,
                              centred_power(other_test, mu, order), cfg);
}

/// Ratios per non-empty private latent: "AtoB" is z_A against x_B, "BtoA" is z_B against x_A.
inline std::map<std::string, double> higher_order_check(const SpliceModel& m, const PairedDataset& data, int order,
                                                        const PredictorConfig& cfg = {}) {
  const auto [xa_tr, xb_tr] = model_space(m, data, Split::Train);
  const auto [xa_te, xb_te] = model_space(m, data, Split::Test);
  std::map<std::string, double> out;
  if (m.dims.m_zA > 0)
    out["AtoB"] = higher_order_ratio(m.F_A.predict(xa_tr), xb_tr, m.F_A.predict(xa_te), xb_te, order, cfg);
  if (m.dims.m_zB > 0)
    out["BtoA"] = higher_order_ratio(m.F_B.predict(xb_tr), xa_tr, m.F_B.predict(xb_te), xa_te, order, cfg);
  return out;
}

struct LeakageConfig {
  PredictorConfig predictor;
  ClassifierRecipe classifier;
  bool pixel_baseline = true;
};

/// Named cross-predictive scores. Keys present depend on the truth available:
///   msr_ratio_{AtoB,BtoA}            fresh-net held-out variance ratio
///   digit_acc_{s_AtoB,s_BtoA,z_A,z_B,pixels_A,pixels_B}
///   angle_r2_{s_AtoB,s_BtoA}         linear decoding of (cos, sin) theta
///   r2_s_from_{z_A,z_B}              true shared latent from a private latent
///   r2_zA_from_s_AtoB, r2_zB_from_s_BtoA  true private latent from the same view's shared latent
using LeakageReport = std::map<std::string, double>;

inline LeakageReport leakage_scores(const SpliceModel& m, const PairedDataset& data, const LeakageConfig& cfg = {}) {
  const auto tr = data.indices(Split::Train), te = data.indices(Split::Test);
  if (tr.size() < 2 || te.size() < 2) throw DegenerateInputError("leakage_scores: need train and test rows");
  const auto [xa_tr, xb_tr] = model_space(m, data, Split::Train);
  const auto [xa_te, xb_te] = model_space(m, data, Split::Test);
  const LatentBundle l_tr = encode(m, xa_tr, xb_tr), l_te = encode(m, xa_te, xb_te);
  LeakageReport r;
  if (m.dims.m_zA > 0)
    r["msr_ratio_AtoB"] = fresh_variance_ratio(l_tr.z_A, xb_tr, l_te.z_A, xb_te, cfg.predictor);
  if (m.dims.m_zB > 0)
    r["msr_ratio_BtoA"] = fresh_variance_ratio(l_tr.z_B, xa_tr, l_te.z_B, xa_te, cfg.predictor);

  const std::vector<std::pair<std::string, std::pair<const Mat*, const Mat*>>> latents{
      {"s_AtoB", {&l_tr.s_AtoB, &l_te.s_AtoB}},
      {"s_BtoA", {&l_tr.s_BtoA, &l_te.s_BtoA}},
      {"z_A", {&l_tr.z_A, &l_te.z_A}},
      {"z_B", {&l_tr.z_B, &l_te.z_B}}};

  if (data.has_labels()) {
    std::vector<int> y_tr, y_te;
    for (Index i : tr) y_tr.push_back(data.truth->label[static_cast<std::size_t>(i)]);
    for (Index i : te) y_te.push_back(data.truth->label[static_cast<std::size_t>(i)]);
    const int n_classes = 1 + std::max(*std::max_element(y_tr.begin(), y_tr.end()),
                                       *std::max_element(y_te.begin(), y_te.end()));
    auto acc = [&](const Mat& a, const Mat& b) {
      return accuracy(fit_linear_classifier(a, y_tr, n_classes, cfg.classifier).model.predict(b), y_te);
    };
    for (const auto& [name, mats] : latents)
      if (mats.first->cols() > 0) r["digit_acc_" + name] = acc(*mats.first, *mats.second);
    if (cfg.pixel_baseline) {
      r["digit_acc_pixels_A"] = acc(take_rows(data.x_A, tr), take_rows(data.x_A, te));
      r["digit_acc_pixels_B"] = acc(take_rows(data.x_B, tr), take_rows(data.x_B, te));
    }
  }
  if (data.has_theta()) {
    auto circ = [&](const std::vector<Index>& rows) {
      Mat t(static_cast<Index>(rows.size()), 2);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double th = data.truth->theta_deg[static_cast<std::size_t>(rows[i])] * M_PI / 180.0;
        t(static_cast<Index>(i), 0) = std::cos(th);
        t(static_cast<Index>(i), 1) = std::sin(th);
      }
      return t;
    };
    const Mat c_tr = circ(tr), c_te = circ(te);
    r["angle_r2_s_AtoB"] = regression_r2(l_tr.s_AtoB, c_tr, l_te.s_AtoB, c_te);
    r["angle_r2_s_BtoA"] = regression_r2(l_tr.s_BtoA, c_tr, l_te.s_BtoA, c_te);
  }
  if (data.truth && data.truth->s.rows() == data.size() && data.truth->s.cols() > 0) {
    const Truth& t = *data.truth;
    const Mat s_tr = take_rows(t.s, tr), s_te = take_rows(t.s, te);
    if (m.dims.m_zA > 0) r["r2_s_from_z_A"] = regression_r2(l_tr.z_A, s_tr, l_te.z_A, s_te);
    if (m.dims.m_zB > 0) r["r2_s_from_z_B"] = regression_r2(l_tr.z_B, s_tr, l_te.z_B, s_te);
    if (t.z_A.cols() > 0)
      r["r2_zA_from_s_AtoB"] = regression_r2(l_tr.s_AtoB, take_rows(t.z_A, tr), l_te.s_AtoB, take_rows(t.z_A, te));
    if (t.z_B.cols() > 0)
      r["r2_zB_from_s_BtoA"] = regression_r2(l_tr.s_BtoA, take_rows(t.z_B, tr), l_te.s_BtoA, take_rows(t.z_B, te));
  }
  return r;
}

struct MembershipReport {
  std::vector<double> projection_nn;  // projection -> nearest observed point
  std::vector<double> data_nn;        // observed point -> nearest other observed point
  double mean_within_class = 0.0;     // NaN without labels
  double fraction_below_within_class = 0.0;
};

namespace detail {

/// Nearest-row distances from each row of q to rows of ref (optionally
/// excluding the same index when q and ref are the same matrix).
inline std::vector<double> nearest_distances(const Mat& q, const Mat& ref, bool exclude_self) {
  std::vector<double> out(static_cast<std::size_t>(q.rows()));
  const Index block = 512;
  for (Index r0 = 0; r0 < q.rows(); r0 += block) {
    const Index rows = std::min(block, q.rows() - r0);
    const Mat d = squared_distances(q.middleRows(r0, rows), ref);
    for (Index i = 0; i < rows; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < ref.rows(); ++j)
        if (!(exclude_self && j == r0 + i)) best = std::min(best, d(i, j));
      out[static_cast<std::size_t>(r0 + i)] = std::sqrt(best);
    }
  }
  return out;
}

}  // namespace detail

/// Mean Euclidean distance over all unordered same-label pairs.
inline double mean_within_class_distance(const Mat& x, const std::vector<int>& labels) {
  std::map<int, std::vector<Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Index>(i));
  double sum = 0.0;
  double pairs = 0.0;
  for (const auto& [label, rows] : groups) {
    if (rows.size() < 2) continue;
    const Mat g = take_rows(x, rows);
    const Mat d = detail::squared_distances(g, g);
    for (Index i = 0; i < d.rows(); ++i)
      for (Index j = i + 1; j < d.cols(); ++j) sum += std::sqrt(d(i, j));
    pairs += 0.5 * static_cast<double>(rows.size()) * static_cast<double>(rows.size() - 1);
  }
  if (pairs == 0.0) throw DegenerateInputError("mean_within_class_distance: no same-class pairs");
  return sum / pairs;
}

inline MembershipReport manifold_membership(const Mat& projections, const Mat& data,
                                            const std::vector<int>* labels = nullptr) {
  if (projections.cols() != data.cols()) throw ConfigError("manifold_membership: widths differ");
  MembershipReport r;
  r.projection_nn = detail::nearest_distances(projections, data, false);
  r.data_nn = detail::nearest_distances(data, data, true);
  r.mean_within_class = std::numeric_limits<double>::quiet_NaN();
  if (labels) {
    r.mean_within_class = mean_within_class_distance(data, *labels);
    std::size_t below = 0;
    for (double v : r.projection_nn) below += v < r.mean_within_class;
    r.fraction_below_within_class = static_cast<double>(below) / static_cast<double>(r.projection_nn.size());
  }
  return r;
}

}  // namespace splice
