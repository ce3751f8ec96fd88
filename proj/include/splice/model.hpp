#pragma once

// The crossed-butterfly autoencoder: four encoders, two decoders and two
// measurement networks, plus the losses used to train them.

#include "splice/nn.hpp"

#include <array>
#include <string>
#include <string_view>

namespace splice {

struct SpliceDims {
  std::size_t n_A = 0;
  std::size_t n_B = 0;
  std::size_t m_zA = 0;
  std::size_t m_zB = 0;
  std::size_t m_s = 1;

  void validate() const {
    if (n_A < 1 || n_B < 1) throw ConfigError("SpliceDims: observed dims must be >= 1");
    if (m_s < 1) throw ConfigError("SpliceDims: shared latent dim must be >= 1");
  }
  bool operator==(const SpliceDims&) const = default;
};

/// Hidden-layer widths per network family. Decoders and measurement networks
/// default to the reversed encoder widths.
struct NetworkLayout {
  std::vector<std::size_t> encoder_hidden{256, 128, 64, 32};
  std::optional<std::vector<std::size_t>> decoder_hidden;
  std::optional<std::vector<std::size_t>> measurement_hidden;
  ActivationSpec activation{};

  std::vector<std::size_t> decoder() const {
    if (decoder_hidden) return *decoder_hidden;
    return {encoder_hidden.rbegin(), encoder_hidden.rend()};
  }
  std::vector<std::size_t> measurement() const {
    if (measurement_hidden) return *measurement_hidden;
    return decoder();
  }
};

/// Per-dimension affine map between raw observations and model space.
struct Standardizer {
  RowVec mean_A, std_A, mean_B, std_B;

  bool empty() const { return mean_A.size() == 0; }
  Mat to_model_A(const Mat& x) const { return apply(x, mean_A, std_A); }
  Mat to_model_B(const Mat& x) const { return apply(x, mean_B, std_B); }
  Mat to_raw_A(const Mat& x) const { return unapply(x, mean_A, std_A); }
  Mat to_raw_B(const Mat& x) const { return unapply(x, mean_B, std_B); }

  static Standardizer identity(std::size_t n_A, std::size_t n_B) {
    Standardizer s;
    s.mean_A = RowVec::Zero(static_cast<Index>(n_A));
    s.std_A = RowVec::Ones(static_cast<Index>(n_A));
    s.mean_B = RowVec::Zero(static_cast<Index>(n_B));
    s.std_B = RowVec::Ones(static_cast<Index>(n_B));
    return s;
  }

 private:
  static Mat apply(const Mat& x, const RowVec& mu, const RowVec& sd) {
    if (mu.size() == 0) return x;
    if (x.cols() != mu.size()) throw ConfigError("standardizer: column count mismatch");
    return ((x.rowwise() - mu).array().rowwise() / sd.array()).matrix();
  }
  static Mat unapply(const Mat& x, const RowVec& mu, const RowVec& sd) {
    if (mu.size() == 0) return x;
    if (x.cols() != mu.size()) throw ConfigError("standardizer: column count mismatch");
    return ((x.array().rowwise() * sd.array()).rowwise() + mu.array()).matrix();
  }
};

enum class StandardizeMode { PerDim, Global, None };

inline StandardizeMode standardize_mode_from(std::string_view s) {
  if (s == "per_dim") return StandardizeMode::PerDim;
  if (s == "global") return StandardizeMode::Global;
  if (s == "none") return StandardizeMode::None;
  throw ConfigError("unknown standardize mode '" + std::string(s) + "'");
}

/// Column statistics of the training rows. PerDim z-scores every column;
/// Global centres every column and divides by one pooled standard deviation.
/// Zero-variance columns keep unit scale.
inline void fit_view_stats(const Mat& x, StandardizeMode mode, RowVec& mean, RowVec& sd) {
  const Index n = x.rows();
  if (mode == StandardizeMode::None || n == 0) {
    mean = RowVec::Zero(x.cols());
    sd = RowVec::Ones(x.cols());
    return;
  }
  mean = x.colwise().mean();
  RowVec var = (x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(n);
  if (mode == StandardizeMode::Global) {
    const double pooled = std::sqrt(var.mean());
    sd = RowVec::Constant(x.cols(), pooled > 0.0 ? pooled : 1.0);
    return;
  }
  sd = var.array().sqrt().matrix();
  for (Index j = 0; j < sd.size(); ++j)
    if (!(sd[j] > 1e-12)) sd[j] = 1.0;
}

struct LatentBundle {
  Mat z_A;        // batch x m_zA
  Mat z_B;        // batch x m_zB
  Mat s_BtoA;     // batch x m_s, computed from x_B, decoded into A
  Mat s_AtoB;     // batch x m_s, computed from x_A, decoded into B
};

/// Which of the four latent groups a quantity refers to.
enum class LatentGroup : std::uint8_t { ZA = 0, ZB = 1, SAtoB = 2, SBtoA = 3 };

inline constexpr std::array<LatentGroup, 4> kAllGroups{LatentGroup::ZA, LatentGroup::ZB, LatentGroup::SAtoB,
                                                       LatentGroup::SBtoA};

inline std::string_view group_name(LatentGroup g) {
  switch (g) {
    case LatentGroup::ZA: return "z_A";
    case LatentGroup::ZB: return "z_B";
    case LatentGroup::SAtoB: return "s_AtoB";
    case LatentGroup::SBtoA: return "s_BtoA";
  }
  return "?";
}

inline LatentGroup group_from_name(std::string_view s) {
  for (auto g : kAllGroups)
    if (group_name(g) == s) return g;
  throw ConfigError("unknown latent group '" + std::string(s) + "'");
}

enum class Direction { AtoB, BtoA };  // AtoB: M_{A->B}(z_A) predicts x_B

struct SpliceModel {
  SpliceDims dims;
  Mlp F_A, F_B;        // private encoders
  Mlp F_AtoB, F_BtoA;  // shared cross-encoders
  Mlp G_A, G_B;        // decoders
  Mlp M_AtoB, M_BtoA;  // measurement networks
  Standardizer standardizer;

  /// Networks in checkpoint order.
  std::array<Mlp*, 8> networks() { return {&F_A, &F_B, &F_AtoB, &F_BtoA, &G_A, &G_B, &M_AtoB, &M_BtoA}; }
  std::array<const Mlp*, 8> networks() const {
    return {&F_A, &F_B, &F_AtoB, &F_BtoA, &G_A, &G_B, &M_AtoB, &M_BtoA};
  }

  std::size_t group_width(LatentGroup g) const {
    switch (g) {
      case LatentGroup::ZA: return dims.m_zA;
      case LatentGroup::ZB: return dims.m_zB;
      default: return dims.m_s;
    }
  }

  Mlp& encoder_for(LatentGroup g) {
    switch (g) {
      case LatentGroup::ZA: return F_A;
      case LatentGroup::ZB: return F_B;
      case LatentGroup::SAtoB: return F_AtoB;
      case LatentGroup::SBtoA: return F_BtoA;
    }
    return F_A;
  }
};

inline std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

/// Freshly initialised measurement network for one direction (empty when the
/// corresponding private latent has zero width).
inline Mlp make_measurement_net(const SpliceDims& d, const NetworkLayout& layout, Direction dir,
                                std::uint64_t seed) {
  const std::size_t in = dir == Direction::AtoB ? d.m_zA : d.m_zB;
  const std::size_t out = dir == Direction::AtoB ? d.n_B : d.n_A;
  if (in == 0) return Mlp{};
  return init_net(chain(in, layout.measurement(), out), layout.activation, seed);
}

inline SpliceModel make_model(const SpliceDims& d, const NetworkLayout& layout, std::uint64_t seed) {
  d.validate();
  SpliceModel m;
  m.dims = d;
  const auto enc = layout.encoder_hidden;
  const auto dec = layout.decoder();
  const auto act = layout.activation;
  if (d.m_zA > 0) m.F_A = init_net(chain(d.n_A, enc, d.m_zA), act, derive_seed(seed, 0));
  if (d.m_zB > 0) m.F_B = init_net(chain(d.n_B, enc, d.m_zB), act, derive_seed(seed, 1));
  m.F_AtoB = init_net(chain(d.n_A, enc, d.m_s), act, derive_seed(seed, 2));
  m.F_BtoA = init_net(chain(d.n_B, enc, d.m_s), act, derive_seed(seed, 3));
  m.G_A = init_net(chain(d.m_s + d.m_zA, dec, d.n_A), act, derive_seed(seed, 4));
  m.G_B = init_net(chain(d.m_s + d.m_zB, dec, d.n_B), act, derive_seed(seed, 5));
  m.M_AtoB = make_measurement_net(d, layout, Direction::AtoB, derive_seed(seed, 6));
  m.M_BtoA = make_measurement_net(d, layout, Direction::BtoA, derive_seed(seed, 7));
  m.standardizer = Standardizer::identity(d.n_A, d.n_B);
  return m;
}

inline Mat encode_private(const Mlp& f, const Mat& x) {
  if (f.empty()) return Mat(x.rows(), 0);
  return f.predict(x);
}

/// Applies the four encoders to model-space (standardised) views.
inline LatentBundle encode(const SpliceModel& m, const Mat& x_A, const Mat& x_B) {
  if (x_A.cols() != static_cast<Index>(m.dims.n_A) || x_B.cols() != static_cast<Index>(m.dims.n_B))
    throw ConfigError("encode: view widths do not match model dims");
  if (x_A.rows() != x_B.rows()) throw ConfigError("encode: views have different row counts");
  LatentBundle b;
  b.z_A = encode_private(m.F_A, x_A);
  b.z_B = encode_private(m.F_B, x_B);
  b.s_BtoA = m.F_BtoA.predict(x_B);
  b.s_AtoB = m.F_AtoB.predict(x_A);
  return b;
}

/// G_A consumes [s_BtoA | z_A]; G_B consumes [s_AtoB | z_B].
inline std::pair<Mat, Mat> decode(const SpliceModel& m, const LatentBundle& b) {
  const Index rows = b.s_BtoA.rows();
  if (b.s_AtoB.rows() != rows || b.z_A.rows() != rows || b.z_B.rows() != rows)
    throw ConfigError("decode: latent row counts differ");
  if (b.s_BtoA.cols() != static_cast<Index>(m.dims.m_s) || b.s_AtoB.cols() != static_cast<Index>(m.dims.m_s) ||
      b.z_A.cols() != static_cast<Index>(m.dims.m_zA) || b.z_B.cols() != static_cast<Index>(m.dims.m_zB))
    throw ConfigError("decode: latent widths do not match model dims");
  return {m.G_A.predict(hstack(b.s_BtoA, b.z_A)), m.G_B.predict(hstack(b.s_AtoB, b.z_B))};
}

/// Mean over samples and dimensions of the squared error.
inline double recon_loss(const Mat& x, const Mat& x_hat) {
  if (x.rows() != x_hat.rows() || x.cols() != x_hat.cols()) throw ConfigError("recon_loss: shape mismatch");
  if (x.size() == 0) return 0.0;
  return (x - x_hat).squaredNorm() / static_cast<double>(x.size());
}

inline Mat recon_loss_grad(const Mat& x, const Mat& x_hat) {
  return (x_hat - x) * (2.0 / static_cast<double>(x.size()));
}

/// Mean over output dimensions of the population variance over the batch.
inline double output_variance(const Mat& y) {
  if (y.rows() < 2) throw DegenerateInputError("variance needs a batch of at least 2 rows");
  if (y.cols() == 0) return 0.0;
  const RowVec mu = y.colwise().mean();
  return (y.rowwise() - mu).squaredNorm() / static_cast<double>(y.rows() * y.cols());
}

inline Mat output_variance_grad(const Mat& y) {
  const RowVec mu = y.colwise().mean();
  return (y.rowwise() - mu) * (2.0 / static_cast<double>(y.rows() * y.cols()));
}

/// Var[M(z_hat)] for the measurement network of `dir`.
inline double msr_variance(const SpliceModel& m, const Mat& z_hat, Direction dir) {
  const Mlp& net = dir == Direction::AtoB ? m.M_AtoB : m.M_BtoA;
  if (z_hat.rows() < 2) throw DegenerateInputError("msr_variance needs a batch of at least 2 rows");
  if (net.empty()) return 0.0;
  return output_variance(net.predict(z_hat));
}

/// MSE of M_{B->A}(z_B) against x_A plus MSE of M_{A->B}(z_A) against x_B.
inline double msr_prediction_loss(const SpliceModel& m, const LatentBundle& b, const Mat& x_A, const Mat& x_B) {
  double loss = 0.0;
  if (!m.M_BtoA.empty()) loss += recon_loss(x_A, m.M_BtoA.predict(b.z_B));
  if (!m.M_AtoB.empty()) loss += recon_loss(x_B, m.M_AtoB.predict(b.z_A));
  return loss;
}

}  // namespace splice
