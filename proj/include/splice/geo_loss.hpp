#pragma once

#include "splice/model.hpp"

namespace splice {

/// Geodesic lengths from each landmark to every sample of one latent group's
/// submanifold. Sample indices are rows of the training split.
struct GeodesicTable {
  LatentGroup group = LatentGroup::ZA;
  std::vector<Index> landmarks;
  Mat distances;  // landmarks x samples
};

struct GeoLossResult {
  double loss = 0.0;
  Mat grad_landmarks;  // d loss / d landmark latents
  Mat grad_samples;    // d loss / d sample latents
};

/// RMS over (landmark, sample) pairs of Euclidean latent distance minus
/// geodesic distance. `geo` is landmarks x samples.
inline GeoLossResult geo_loss_pairs(const Mat& landmark_latents, const Mat& sample_latents, const Mat& geo,
                                    bool with_grad = true) {
  const Index nl = landmark_latents.rows(), ns = sample_latents.rows();
  if (geo.rows() != nl || geo.cols() != ns) throw ConfigError("geo_loss: table block shape mismatch");
  if (landmark_latents.cols() != sample_latents.cols()) throw ConfigError("geo_loss: latent widths differ");
  GeoLossResult r;
  if (nl == 0 || ns == 0) return r;
  Mat d(nl, ns);
  for (Index l = 0; l < nl; ++l)
    for (Index j = 0; j < ns; ++j) d(l, j) = (landmark_latents.row(l) - sample_latents.row(j)).norm();
  const Mat e = d - geo;
  const double pairs = static_cast<double>(nl * ns);
  r.loss = std::sqrt(e.squaredNorm() / pairs);
  if (!with_grad) return r;
  r.grad_landmarks = Mat::Zero(nl, landmark_latents.cols());
  r.grad_samples = Mat::Zero(ns, sample_latents.cols());
  if (r.loss <= 0.0) return r;
  // c_lj = e_lj / (P * loss * dist_lj); zero where the two latents coincide.
  Mat c = e / (pairs * r.loss);
  for (Index i = 0; i < c.size(); ++i) {
    const double dist = d.data()[i];
    c.data()[i] = dist > 1e-12 ? c.data()[i] / dist : 0.0;
  }
  // grad_l = sum_j c_lj (L_l - S_j); grad_j = -sum_l c_lj (L_l - S_j)
  r.grad_landmarks = c.rowwise().sum().asDiagonal() * landmark_latents - c * sample_latents;
  r.grad_samples = c.colwise().sum().transpose().asDiagonal() * sample_latents - c.transpose() * landmark_latents;
  return r;
}

/// geo_loss over the full table: `latents` holds one row per sample.
inline double geo_loss(const Mat& latents, const GeodesicTable& table) {
  if (latents.rows() != table.distances.cols()) throw ConfigError("geo_loss: latent rows != table samples");
  return geo_loss_pairs(take_rows(latents, table.landmarks), latents, table.distances, false).loss;
}

}  // namespace splice
