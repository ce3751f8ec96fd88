#pragma once

// Paired-view generators with ground truth: the LGN/V1 visual-plus-place
// simulator, rotated digits from IDX files, a linear toy, and CSV ingestion.

#include "splice/dataset.hpp"

#include <Eigen/QR>

#include <array>
#include <cstring>
#include <fstream>
#include <numbers>

namespace splice {

// ---------------------------------------------------------------------------
// LGN / V1 simulator

struct LgnV1Config {
  int field_px = 100;   // visual field is field_px x field_px
  int rf_px = 30;       // receptive-field window edge
  int grid = 20;        // LGN grid x grid; V1 two grid x grid Gabor grids
  Index n_trials = 18900;
  double private_ratio = 6.0;  // target Var(private) / Var(shared) per view
  double noise_level = 0.0;    // ||noise|| / ||signal||
  double train_fraction = 0.8;
  std::uint64_t seed = 0;

  double bar_width = 4.0;
  double bar_height = 30.0;
  double place_width = 0.1;  // Gaussian place-field sd, fraction of track length
  // Kernel shapes; non-positive means "derive from rf_px".
  double sigma_center = 0.0;    // rf_px / 8
  double sigma_surround = 0.0;  // rf_px / 4
  double gabor_sigma = 0.0;     // rf_px / 6
  double gabor_wavelength = 0.0;  // rf_px / 3

  double sc() const { return sigma_center > 0 ? sigma_center : rf_px / 8.0; }
  double ss() const { return sigma_surround > 0 ? sigma_surround : rf_px / 4.0; }
  double gs() const { return gabor_sigma > 0 ? gabor_sigma : rf_px / 6.0; }
  double gl() const { return gabor_wavelength > 0 ? gabor_wavelength : rf_px / 3.0; }

  void validate() const {
    if (rf_px < 1 || rf_px > field_px) throw ConfigError("lgnv1: rf_px must be in [1, field_px]");
    if (grid < 2) throw ConfigError("lgnv1: grid must be >= 2");
    if (n_trials < 2) throw ConfigError("lgnv1: n_trials must be >= 2");
    if (bar_width <= 0 || bar_width > field_px || bar_height <= 0 || bar_height > field_px)
      throw ConfigError("lgnv1: bar must fit in the visual field");
    if (private_ratio < 0 || noise_level < 0) throw ConfigError("lgnv1: ratio and noise must be >= 0");
    if (place_width <= 0) throw ConfigError("lgnv1: place_width must be > 0");
  }
};

/// A receptive field: kernel values over a pixel window whose top-left pixel is (row0, col0).
struct ReceptiveField {
  double center_x = 0, center_y = 0;
  int row0 = 0, col0 = 0;
  Mat kernel;  // window rows x cols
};

enum class RfKind { CenterSurround, GaborVertical, GaborHorizontal };

inline double grid_center(int k, int grid, int field) { return (k + 0.5) * field / static_cast<double>(grid); }

/// Kernel sampled at the pixel centres lying within rf_px/2 of (cx, cy) along
/// each axis (a window symmetric about the centre), clipped to the field.
/// Centre-surround kernels are made zero-mean over the unclipped window.
inline ReceptiveField make_rf(const LgnV1Config& cfg, double cx, double cy, RfKind kind) {
  ReceptiveField rf;
  rf.center_x = cx;
  rf.center_y = cy;
  const double half = cfg.rf_px / 2.0;
  const int c_lo = static_cast<int>(std::ceil(cx - half - 0.5));
  const int r_lo = static_cast<int>(std::ceil(cy - half - 0.5));
  const int n_c = static_cast<int>(std::floor(cx + half - 0.5)) - c_lo + 1;
  const int n_r = static_cast<int>(std::floor(cy + half - 0.5)) - r_lo + 1;
  Mat full(n_r, n_c);
  const double pi = std::numbers::pi;
  for (int i = 0; i < n_r; ++i)
    for (int j = 0; j < n_c; ++j) {
      const double dx = (c_lo + j + 0.5) - cx, dy = (r_lo + i + 0.5) - cy;
      const double r2 = dx * dx + dy * dy;
      double v = 0.0;
      if (kind == RfKind::CenterSurround) {
        const double a = cfg.sc(), b = cfg.ss();
        v = std::exp(-r2 / (2 * a * a)) / (2 * pi * a * a) - std::exp(-r2 / (2 * b * b)) / (2 * pi * b * b);
      } else {
        const double s = cfg.gs();
        const double phase = kind == RfKind::GaborVertical ? dx : dy;
        v = std::exp(-r2 / (2 * s * s)) * std::cos(2 * pi * phase / cfg.gl());
      }
      full(i, j) = v;
    }
  if (kind == RfKind::CenterSurround) full.array() -= full.mean();
  const int r0 = std::max(0, r_lo), c0 = std::max(0, c_lo);
  const int r1 = std::min(cfg.field_px, r_lo + n_r), c1 = std::min(cfg.field_px, c_lo + n_c);
  rf.row0 = r0;
  rf.col0 = c0;
  rf.kernel = full.block(r0 - r_lo, c0 - c_lo, std::max(0, r1 - r0), std::max(0, c1 - c0));
  return rf;
}

/// Overlap of [lo, hi) with each unit pixel interval [k, k+1) for k in [first, first+count).
inline Vec interval_coverage(double lo, double hi, int first, Index count) {
  Vec v(count);
  for (Index k = 0; k < count; ++k) {
    const double a = first + static_cast<double>(k);
    v[k] = std::max(0.0, std::min(hi, a + 1.0) - std::max(lo, a));
  }
  return v;
}

/// Inner product of the kernel with an anti-aliased vertical bar centred at (x, y).
inline double bar_response(const ReceptiveField& rf, const LgnV1Config& cfg, double x, double y) {
  if (rf.kernel.size() == 0) return 0.0;
  const Vec cov_x = interval_coverage(x - cfg.bar_width / 2, x + cfg.bar_width / 2, rf.col0, rf.kernel.cols());
  const Vec cov_y = interval_coverage(y - cfg.bar_height / 2, y + cfg.bar_height / 2, rf.row0, rf.kernel.rows());
  return cov_y.dot(rf.kernel * cov_x);
}

struct LgnV1Population {
  std::vector<ReceptiveField> lgn;  // grid^2 centre-surround
  std::vector<ReceptiveField> v1;   // grid^2 vertical then grid^2 horizontal Gabor
  Vec place_A;  // place-field centres on the track, one per LGN neuron
  Vec place_B;  // one per V1 neuron
};

inline LgnV1Population make_lgnv1_population(const LgnV1Config& cfg) {
  cfg.validate();
  LgnV1Population p;
  for (int gy = 0; gy < cfg.grid; ++gy)
    for (int gx = 0; gx < cfg.grid; ++gx)
      p.lgn.push_back(make_rf(cfg, grid_center(gx, cfg.grid, cfg.field_px), grid_center(gy, cfg.grid, cfg.field_px),
                              RfKind::CenterSurround));
  for (RfKind k : {RfKind::GaborVertical, RfKind::GaborHorizontal})
    for (int gy = 0; gy < cfg.grid; ++gy)
      for (int gx = 0; gx < cfg.grid; ++gx)
        p.v1.push_back(
            make_rf(cfg, grid_center(gx, cfg.grid, cfg.field_px), grid_center(gy, cfg.grid, cfg.field_px), k));
  Rng rng(derive_seed(cfg.seed, 0x9ACE));
  p.place_A.resize(static_cast<Index>(p.lgn.size()));
  p.place_B.resize(static_cast<Index>(p.v1.size()));
  for (Index i = 0; i < p.place_A.size(); ++i) p.place_A[i] = uniform(rng, 0.0, 1.0);
  for (Index i = 0; i < p.place_B.size(); ++i) p.place_B[i] = uniform(rng, 0.0, 1.0);
  return p;
}

/// Every additive component of the simulation, kept separately for inspection.
struct LgnV1Components {
  PairedDataset data;
  Mat shared_A, private_A, shared_B, private_B;  // private parts already scaled by the gains
  Mat noiseless_A, noiseless_B;
  double gain_A = 1.0, gain_B = 1.0;
};

inline double total_variance(const Mat& m) {
  if (m.rows() < 1) return 0.0;
  const RowVec mu = m.colwise().mean();
  return (m.rowwise() - mu).squaredNorm() / static_cast<double>(m.rows());
}

inline LgnV1Components gen_lgnv1_components(const LgnV1Config& cfg) {
  const LgnV1Population pop = make_lgnv1_population(cfg);
  const Index n = cfg.n_trials;
  const auto nA = static_cast<Index>(pop.lgn.size()), nB = static_cast<Index>(pop.v1.size());
  LgnV1Components c;
  c.shared_A.resize(n, nA);
  c.shared_B.resize(n, nB);
  c.private_A.resize(n, nA);
  c.private_B.resize(n, nB);
  Truth truth;
  truth.s.resize(n, 2);
  truth.z_A.resize(n, 1);
  truth.z_B.resize(n, 1);
  const double w2 = 2 * cfg.place_width * cfg.place_width;
  for (Index t = 0; t < n; ++t) {
    Rng rng(derive_seed(cfg.seed, 0x7100000 + static_cast<std::uint64_t>(t)));
    const double x = uniform(rng, cfg.bar_width / 2, cfg.field_px - cfg.bar_width / 2);
    const double y = uniform(rng, cfg.bar_height / 2, cfg.field_px - cfg.bar_height / 2);
    const double pa = uniform(rng, 0.0, 1.0), pb = uniform(rng, 0.0, 1.0);
    truth.s(t, 0) = x;
    truth.s(t, 1) = y;
    truth.z_A(t, 0) = pa;
    truth.z_B(t, 0) = pb;
    for (Index i = 0; i < nA; ++i) {
      c.shared_A(t, i) = bar_response(pop.lgn[static_cast<std::size_t>(i)], cfg, x, y);
      const double d = pa - pop.place_A[i];
      c.private_A(t, i) = std::exp(-d * d / w2);
    }
    for (Index i = 0; i < nB; ++i) {
      c.shared_B(t, i) = bar_response(pop.v1[static_cast<std::size_t>(i)], cfg, x, y);
      const double d = pb - pop.place_B[i];
      c.private_B(t, i) = std::exp(-d * d / w2);
    }
  }
  // Responses enter linearly, so the variance ratio is quadratic in the gain.
  auto gain = [&](const Mat& shared, const Mat& priv) {
    const double vp = total_variance(priv);
    return vp > 0 ? std::sqrt(cfg.private_ratio * total_variance(shared) / vp) : 0.0;
  };
  c.gain_A = gain(c.shared_A, c.private_A);
  c.gain_B = gain(c.shared_B, c.private_B);
  c.private_A *= c.gain_A;
  c.private_B *= c.gain_B;
  c.noiseless_A = c.shared_A + c.private_A;
  c.noiseless_B = c.shared_B + c.private_B;
  c.data.x_A = c.noiseless_A;
  c.data.x_B = c.noiseless_B;
  if (cfg.noise_level > 0) {
    Rng rng(derive_seed(cfg.seed, 0x4015E));
    auto add_noise = [&](Mat& x) {
      const double sd = cfg.noise_level * x.norm() / std::sqrt(static_cast<double>(x.size()));
      x += sd * randn(x.rows(), x.cols(), rng);
    };
    add_noise(c.data.x_A);
    add_noise(c.data.x_B);
  }
  c.data.truth = std::move(truth);
  c.data.split = make_split_fractions(n, cfg.train_fraction, 0.0, derive_seed(cfg.seed, 0x5917));
  return c;
}

inline PairedDataset gen_lgnv1(const LgnV1Config& cfg) { return gen_lgnv1_components(cfg).data; }

// ---------------------------------------------------------------------------
// IDX container (big-endian header, u8 payload)

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  Index count = 0;
  Index rows = 0;
  Index cols = 0;
  Mat pixels;  // count x rows*cols, scaled to [0, 1]
};

namespace detail {

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size()) throw FormatError(path + ": truncated header", b.size());
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

inline IdxImages load_idx_images(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::uint32_t magic = detail::read_be32(bytes, 0, path);
  if (magic != kIdxImagesMagic) throw FormatError(path + ": bad image magic", 0);
  IdxImages out;
  out.count = detail::read_be32(bytes, 4, path);
  out.rows = detail::read_be32(bytes, 8, path);
  out.cols = detail::read_be32(bytes, 12, path);
  const std::size_t px = static_cast<std::size_t>(out.rows * out.cols);
  const std::size_t need = 16 + static_cast<std::size_t>(out.count) * px;
  if (bytes.size() < need) throw FormatError(path + ": short read of pixel payload", bytes.size());
  if (bytes.size() > need) throw FormatError(path + ": trailing bytes after payload", need);
  out.pixels.resize(out.count, static_cast<Index>(px));
  for (std::size_t i = 0; i < static_cast<std::size_t>(out.count) * px; ++i)
    out.pixels.data()[i] = bytes[16 + i] / 255.0;
  return out;
}

inline std::vector<int> load_idx_labels(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  const std::uint32_t magic = detail::read_be32(bytes, 0, path);
  if (magic != kIdxLabelsMagic) throw FormatError(path + ": bad label magic", 0);
  const std::size_t n = detail::read_be32(bytes, 4, path);
  if (bytes.size() < 8 + n) throw FormatError(path + ": short read of label payload", bytes.size());
  if (bytes.size() > 8 + n) throw FormatError(path + ": trailing bytes after payload", 8 + n);
  return {bytes.begin() + 8, bytes.end()};
}

// ---------------------------------------------------------------------------
// Rotation

/// Counter-clockwise rotation (as displayed) about the image centre with
/// bilinear interpolation; samples falling outside the image read as 0.
inline Mat rotate_image(const Mat& img, double theta_deg) {
  const Index h = img.rows(), w = img.cols();
  double c = 0, s = 0;
  const double wrapped = std::fmod(std::fmod(theta_deg, 360.0) + 360.0, 360.0);
  if (wrapped == 0.0) return img;
  if (wrapped == 90.0) {
    c = 0, s = 1;
  } else if (wrapped == 180.0) {
    c = -1, s = 0;
  } else if (wrapped == 270.0) {
    c = 0, s = -1;
  } else {
    const double rad = theta_deg * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  auto at = [&](Index r, Index col) -> double {
    return (r >= 0 && r < h && col >= 0 && col < w) ? img(r, col) : 0.0;
  };
  Mat out(h, w);
  for (Index r = 0; r < h; ++r)
    for (Index col = 0; col < w; ++col) {
      const double x = col - cx, y = cy - r;      // y up
      const double xs = x * c + y * s, ys = -x * s + y * c;  // inverse rotation
      const double sc = cx + xs, sr = cy - ys;
      const double fr = std::floor(sr), fc = std::floor(sc);
      const double ar = sr - fr, ac = sc - fc;
      const auto r0 = static_cast<Index>(fr), c0 = static_cast<Index>(fc);
      out(r, col) = (1 - ar) * ((1 - ac) * at(r0, c0) + ac * at(r0, c0 + 1)) +
                    ar * ((1 - ac) * at(r0 + 1, c0) + ac * at(r0 + 1, c0 + 1));
    }
  return out;
}

inline Mat as_image(const Mat& flat_row, Index rows, Index cols) {
  return Eigen::Map<const Mat>(flat_row.data(), rows, cols);
}

inline RowVec flatten(const Mat& img) { return Eigen::Map<const RowVec>(img.data(), img.size()); }

struct RotatedDigitsConfig {
  std::string images_path;
  std::string labels_path;
  Index n_train = 50000;
  Index n_val = 10000;
  Index n_test = 10000;
  std::uint64_t seed = 0;
};

/// x_A: originals; x_B: one random rotation of each, theta ~ U[0, 360).
inline PairedDataset gen_rotated_digits(const RotatedDigitsConfig& cfg) {
  const IdxImages imgs = load_idx_images(cfg.images_path);
  const std::vector<int> labels = load_idx_labels(cfg.labels_path);
  if (static_cast<Index>(labels.size()) != imgs.count) throw ConfigError("image and label counts differ");
  if (imgs.rows != imgs.cols) throw ConfigError("rotation needs square images");
  const Index total = cfg.n_train + cfg.n_val + cfg.n_test;
  if (cfg.n_train < 0 || cfg.n_val < 0 || cfg.n_test < 0 || total > imgs.count)
    throw ConfigError("requested " + std::to_string(total) + " digits but only " + std::to_string(imgs.count) +
                      " are available");
  std::vector<Index> perm(static_cast<std::size_t>(imgs.count));
  for (Index i = 0; i < imgs.count; ++i) perm[static_cast<std::size_t>(i)] = i;
  Rng pick(derive_seed(cfg.seed, 0xD161));
  std::shuffle(perm.begin(), perm.end(), pick);
  perm.resize(static_cast<std::size_t>(total));

  Rng angle_rng(derive_seed(cfg.seed, 0xA461));
  PairedDataset d;
  d.x_A.resize(total, imgs.pixels.cols());
  d.x_B.resize(total, imgs.pixels.cols());
  Truth t;
  for (Index k = 0; k < total; ++k) {
    const Index src = perm[static_cast<std::size_t>(k)];
    const double theta = uniform(angle_rng, 0.0, 360.0);
    d.x_A.row(k) = imgs.pixels.row(src);
    d.x_B.row(k) = flatten(rotate_image(as_image(imgs.pixels.row(src), imgs.rows, imgs.cols), theta));
    t.theta_deg.push_back(theta);
    t.label.push_back(labels[static_cast<std::size_t>(src)]);
    d.split.push_back(k < cfg.n_train ? Split::Train : (k < cfg.n_train + cfg.n_val ? Split::Val : Split::Test));
  }
  d.truth = std::move(t);
  return d;
}

// ---------------------------------------------------------------------------
// Linear toy: x = W [s; z] + noise with orthonormal-column W.

struct LinearToyConfig {
  std::size_t n_A = 10, n_B = 10;
  std::size_t m_zA = 2, m_s = 2, m_zB = 2;
  double noise = 0.0;
  Index n = 10000;
  double train_fraction = 0.8;
  double val_fraction = 0.0;
  std::uint64_t seed = 0;
};

inline Mat random_orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng) {
  if (cols > rows) throw ConfigError("linear toy: latent width exceeds observed width");
  const Mat g = randn(static_cast<Index>(rows), static_cast<Index>(cols), rng);
  Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  return q.leftCols(static_cast<Index>(cols));
}

struct LinearToyGenerators {
  Mat W_A;  // n_A x (m_s + m_zA), columns ordered [s | z_A]
  Mat W_B;
};

inline PairedDataset gen_linear_toy(const LinearToyConfig& cfg, LinearToyGenerators* gens = nullptr) {
  Rng rng(derive_seed(cfg.seed, 0x70F));
  LinearToyGenerators g;
  g.W_A = random_orthonormal_columns(cfg.n_A, cfg.m_s + cfg.m_zA, rng);
  g.W_B = random_orthonormal_columns(cfg.n_B, cfg.m_s + cfg.m_zB, rng);
  Truth t;
  t.s = randn(cfg.n, static_cast<Index>(cfg.m_s), rng);
  t.z_A = randn(cfg.n, static_cast<Index>(cfg.m_zA), rng);
  t.z_B = randn(cfg.n, static_cast<Index>(cfg.m_zB), rng);
  PairedDataset d;
  d.x_A = hstack(t.s, t.z_A) * g.W_A.transpose();
  d.x_B = hstack(t.s, t.z_B) * g.W_B.transpose();
  if (cfg.noise > 0) {
    d.x_A += cfg.noise * randn(d.x_A.rows(), d.x_A.cols(), rng);
    d.x_B += cfg.noise * randn(d.x_B.rows(), d.x_B.cols(), rng);
  }
  d.truth = std::move(t);
  d.split = make_split_fractions(cfg.n, cfg.train_fraction, cfg.val_fraction, derive_seed(cfg.seed, 0x5917));
  if (gens) *gens = std::move(g);
  return d;
}

/// Row-aligned view CSVs (header row, one sample per row) from an external source.
inline PairedDataset read_csv_pair(const std::string& view_a, const std::string& view_b, double train_fraction,
                                   double val_fraction, std::uint64_t seed) {
  PairedDataset d;
  d.x_A = csv_matrix(read_csv(view_a), view_a);
  d.x_B = csv_matrix(read_csv(view_b), view_b);
  if (d.x_A.rows() != d.x_B.rows())
    throw FormatError("paired CSVs have different row counts", static_cast<std::uint64_t>(d.x_B.rows()));
  d.split = make_split_fractions(d.x_A.rows(), train_fraction, val_fraction, seed);
  return d;
}

}  // namespace splice
