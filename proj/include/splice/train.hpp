#pragma once

// Alternating optimisation of the autoencoder, the private encoders'
// predictability penalty, and the measurement networks.

#include "splice/dataset.hpp"
#include "splice/geo_loss.hpp"

#include <functional>
#include <map>
#include <sstream>

namespace splice {

struct Step1Config {
  long n_epochs = 20;
  std::size_t minibatch_size = 20;  // 0 = full batch
  int n_msr_inner = 5;
  int n_msr_restart = 1000;
  long T_restart = 1000;  // outer iterations between measurement-net cold restarts
  double disentangle_weight = 1.0;
  double base_lr = 1e-3;
  double final_lr = 1e-5;
  std::uint64_t seed = 0;
  StandardizeMode standardize = StandardizeMode::PerDim;
  long log_every = 0;  // 0 = silent
  std::function<void(const std::string&)> log;

  void validate() const {
    if (n_epochs < 1 || n_msr_inner < 1 || n_msr_restart < 1 || T_restart < 1)
      throw ConfigError("step1: all counts must be >= 1");
    if (disentangle_weight < 0) throw ConfigError("step1: disentangle_weight must be >= 0");
    if (!(base_lr > 0) || !(final_lr > 0)) throw ConfigError("step1: learning rates must be > 0");
  }
};

/// Per-outer-iteration values of every loss term.
struct LossTrace {
  std::vector<double> rec_A, rec_B;
  std::vector<double> var_AtoB;  // Var[M_{A->B}(z_A)]
  std::vector<double> var_BtoA;  // Var[M_{B->A}(z_B)]
  std::vector<double> pred;      // L_pred^A + L_pred^B, last measurement step
  std::map<LatentGroup, std::vector<double>> geo;

  std::size_t iterations() const { return rec_A.size(); }
};

/// A fixed geodesic table and its weight in the encoder/decoder objective.
struct GeoTerm {
  const GeodesicTable* table = nullptr;
  double weight = 1.0;
};

/// Fits the standardiser on the training rows and stores it in the model.
inline void fit_standardizer(SpliceModel& m, const PairedDataset& data, StandardizeMode mode) {
  const auto train = data.indices(Split::Train);
  fit_view_stats(take_rows(data.x_A, train), mode, m.standardizer.mean_A, m.standardizer.std_A);
  fit_view_stats(take_rows(data.x_B, train), mode, m.standardizer.mean_B, m.standardizer.std_B);
}

namespace detail {

inline void check_finite(double v, const char* term, long iter) {
  if (!std::isfinite(v)) throw NumericError(term, iter);
}

inline std::vector<Index> random_batch(Index n, Index size, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(size));
  if (size >= n) {
    for (Index i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    return idx;
  }
  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

/// Forward pass for one encoder whose output may feed a geometry term. When
/// a term is active the landmark rows are appended below the batch.
struct EncoderPass {
  Mlp* net = nullptr;
  const GeoTerm* geo = nullptr;
  Index batch_rows = 0;
  Mat out;  // batch (+ landmarks) x width
  Mat grad;

  void run(Mlp& n, const Mat& x_batch, const Mat& x_all, const GeoTerm* g) {
    net = &n;
    geo = g;
    batch_rows = x_batch.rows();
    if (n.empty()) {
      out = Mat(batch_rows, 0);
      return;
    }
    out = geo ? n.forward(vstack(x_batch, take_rows(x_all, geo->table->landmarks))) : n.forward(x_batch);
    grad = Mat::Zero(out.rows(), out.cols());
  }
  Mat batch_latents() const { return out.topRows(batch_rows); }
};

class AlternatingTrainer {
 public:
  AlternatingTrainer(SpliceModel& m, const Mat& x_A, const Mat& x_B, const Step1Config& cfg,
                     std::map<LatentGroup, GeoTerm> geo, const char* stage)
      : m_(m), xa_(x_A), xb_(x_B), cfg_(cfg), geo_(std::move(geo)), stage_(stage) {
    n_ = xa_.rows();
    batch_ = (cfg_.minibatch_size == 0 || static_cast<Index>(cfg_.minibatch_size) >= n_)
                 ? n_
                 : static_cast<Index>(cfg_.minibatch_size);
    per_epoch_ = (n_ + batch_ - 1) / batch_;
    AdamConfig ac;
    ac.base_lr = cfg_.base_lr;
    ac.final_lr = cfg_.final_lr;
    ac.total_epochs = std::max<long>(1, cfg_.n_epochs - 1);
    for (Mlp* net : ae_nets()) ae_state_.emplace_back(*net, ac);
    priv_A_ = AdamState(m_.F_A, ac);
    priv_B_ = AdamState(m_.F_B, ac);
    msr_AtoB_ = AdamState(m_.M_AtoB, ac);
    msr_BtoA_ = AdamState(m_.M_BtoA, ac);
    for (auto& [g, term] : geo_) {
      if (term.table->distances.cols() != n_) throw ConfigError("geodesic table does not cover the training rows");
      if (m_.group_width(g) == 0) throw ConfigError("geodesic table for a zero-width latent group");
    }
  }

  LossTrace run() {
    if (n_ < 2) throw DegenerateInputError("training needs at least 2 samples");
    Rng shuffle_rng(derive_seed(cfg_.seed, 11));
    Rng msr_rng(derive_seed(cfg_.seed, 12));
    std::vector<Index> perm(static_cast<std::size_t>(n_));
    for (Index i = 0; i < n_; ++i) perm[static_cast<std::size_t>(i)] = i;
    long iter = 0;
    long restarts = 0;
    for (long epoch = 0; epoch < cfg_.n_epochs; ++epoch) {
      if (batch_ < n_) std::shuffle(perm.begin(), perm.end(), shuffle_rng);
      for (Index b = 0; b < per_epoch_; ++b) {
        ++iter;
        const Index start = b * batch_;
        const Index stop = std::min(n_, start + batch_);
        std::vector<Index> idx(perm.begin() + start, perm.begin() + stop);
        if (idx.size() < 2) continue;
        autoencoder_step(idx, static_cast<double>(epoch), iter);
        variance_step(idx, static_cast<double>(epoch), iter);
        int n_msr = cfg_.n_msr_inner;
        if (iter % cfg_.T_restart == 0) {
          restart_measurement_nets(++restarts);
          n_msr = cfg_.n_msr_restart;
        }
        measurement_steps(n_msr, static_cast<double>(epoch), iter, msr_rng);
        if (cfg_.log && cfg_.log_every > 0 && iter % cfg_.log_every == 0) log_line(epoch, iter);
      }
    }
    return std::move(trace_);
  }

  std::array<Mlp*, 6> ae_nets() { return {&m_.F_A, &m_.F_B, &m_.F_AtoB, &m_.F_BtoA, &m_.G_A, &m_.G_B}; }

  const LossTrace& trace() const { return trace_; }

  const GeoTerm* geo_for(LatentGroup g) const {
    auto it = geo_.find(g);
    return (it == geo_.end() || it->second.weight == 0.0) ? nullptr : &it->second;
  }

  void autoencoder_step(const std::vector<Index>& idx, double epoch, long iter) {
    const Mat xa = take_rows(xa_, idx), xb = take_rows(xb_, idx);
    EncoderPass zA, zB, sBA, sAB;
    zA.run(m_.F_A, xa, xa_, geo_for(LatentGroup::ZA));
    zB.run(m_.F_B, xb, xb_, geo_for(LatentGroup::ZB));
    sBA.run(m_.F_BtoA, xb, xb_, geo_for(LatentGroup::SBtoA));
    sAB.run(m_.F_AtoB, xa, xa_, geo_for(LatentGroup::SAtoB));

    const Mat xa_hat = m_.G_A.forward(hstack(sBA.batch_latents(), zA.batch_latents()));
    const Mat xb_hat = m_.G_B.forward(hstack(sAB.batch_latents(), zB.batch_latents()));
    const double rec_A = recon_loss(xa, xa_hat), rec_B = recon_loss(xb, xb_hat);
    check_finite(rec_A, "rec_A", iter);
    check_finite(rec_B, "rec_B", iter);
    trace_.rec_A.push_back(rec_A);
    trace_.rec_B.push_back(rec_B);

    const auto gGA = m_.G_A.backward(recon_loss_grad(xa, xa_hat));
    const auto gGB = m_.G_B.backward(recon_loss_grad(xb, xb_hat));
    const Index ms = static_cast<Index>(m_.dims.m_s);
    const Index B = static_cast<Index>(idx.size());
    sBA.grad.topRows(B) += gGA.input.leftCols(ms);
    if (!m_.F_A.empty()) zA.grad.topRows(B) += gGA.input.rightCols(gGA.input.cols() - ms);
    sAB.grad.topRows(B) += gGB.input.leftCols(ms);
    if (!m_.F_B.empty()) zB.grad.topRows(B) += gGB.input.rightCols(gGB.input.cols() - ms);

    for (auto [pass, group] : {std::pair{&zA, LatentGroup::ZA}, std::pair{&zB, LatentGroup::ZB},
                               std::pair{&sAB, LatentGroup::SAtoB}, std::pair{&sBA, LatentGroup::SBtoA}}) {
      if (!pass->geo) continue;
      const Mat block = take_cols(pass->geo->table->distances, idx);
      const Mat lat_batch = pass->out.topRows(B);
      const Mat lat_land = pass->out.bottomRows(pass->out.rows() - B);
      const GeoLossResult r = geo_loss_pairs(lat_land, lat_batch, block);
      check_finite(r.loss, "geo", iter);
      trace_.geo[group].push_back(r.loss);
      pass->grad.topRows(B) += pass->geo->weight * r.grad_samples;
      pass->grad.bottomRows(lat_land.rows()) += pass->geo->weight * r.grad_landmarks;
    }

    MlpGradients g_zA, g_zB;
    if (!m_.F_A.empty()) g_zA = m_.F_A.backward(zA.grad);
    if (!m_.F_B.empty()) g_zB = m_.F_B.backward(zB.grad);
    const auto g_sBA = m_.F_BtoA.backward(sBA.grad);
    const auto g_sAB = m_.F_AtoB.backward(sAB.grad);
    if (!m_.F_A.empty()) adam_step(m_.F_A, g_zA, ae_state_[0], epoch);
    if (!m_.F_B.empty()) adam_step(m_.F_B, g_zB, ae_state_[1], epoch);
    adam_step(m_.F_AtoB, g_sAB, ae_state_[2], epoch);
    adam_step(m_.F_BtoA, g_sBA, ae_state_[3], epoch);
    adam_step(m_.G_A, gGA, ae_state_[4], epoch);
    adam_step(m_.G_B, gGB, ae_state_[5], epoch);
  }

  static Mat take_cols(const Mat& m, const std::vector<Index>& cols) {
    Mat out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) out.col(static_cast<Index>(k)) = m.col(cols[k]);
    return out;
  }

  // Gradient step on the private encoder only; the measurement net is frozen.
  double private_variance_update(Mlp& encoder, Mlp& msr, AdamState& state, const Mat& x, double epoch) {
    if (encoder.empty() || msr.empty()) return 0.0;
    const Mat z = encoder.forward(x);
    const Mat y = msr.forward(z);
    const double v = output_variance(y);
    if (cfg_.disentangle_weight > 0.0) {
      const Mat gz = msr.backward(cfg_.disentangle_weight * output_variance_grad(y)).input;
      adam_step(encoder, encoder.backward(gz), state, epoch);
    }
    msr.clear_cache();
    return v;
  }

  void variance_step(const std::vector<Index>& idx, double epoch, long iter) {
    const Mat xa = take_rows(xa_, idx), xb = take_rows(xb_, idx);
    const double vA = private_variance_update(m_.F_A, m_.M_AtoB, priv_A_, xa, epoch);
    const double vB = private_variance_update(m_.F_B, m_.M_BtoA, priv_B_, xb, epoch);
    check_finite(vA, "var_AtoB", iter);
    check_finite(vB, "var_BtoA", iter);
    trace_.var_AtoB.push_back(vA);
    trace_.var_BtoA.push_back(vB);
  }

  void restart_measurement_nets(long restart) {
    auto reinit = [&](Mlp& net, AdamState& st, std::uint64_t stream) {
      if (net.empty()) return;
      net = init_net(net.dims(), net.activation(), derive_seed(cfg_.seed, stream));
      st.reset(net);
    };
    reinit(m_.M_AtoB, msr_AtoB_, 1000 + 2 * static_cast<std::uint64_t>(restart));
    reinit(m_.M_BtoA, msr_BtoA_, 1001 + 2 * static_cast<std::uint64_t>(restart));
  }

  static double fit_measurement(Mlp& msr, AdamState& st, const Mlp& encoder, const Mat& x_src, const Mat& target,
                                double epoch) {
    if (msr.empty() || encoder.empty()) return 0.0;
    const Mat y = msr.forward(encoder.predict(x_src));
    const double loss = recon_loss(target, y);
    adam_step(msr, msr.backward(recon_loss_grad(target, y)), st, epoch);
    return loss;
  }

  void measurement_steps(int n_msr, double epoch, long iter, Rng& rng) {
    double pred = 0.0;
    for (int k = 0; k < n_msr; ++k) {
      const auto idx = random_batch(n_, batch_, rng);
      const Mat xa = take_rows(xa_, idx), xb = take_rows(xb_, idx);
      pred = fit_measurement(m_.M_BtoA, msr_BtoA_, m_.F_B, xb, xa, epoch) +
             fit_measurement(m_.M_AtoB, msr_AtoB_, m_.F_A, xa, xb, epoch);
    }
    check_finite(pred, "pred", iter);
    trace_.pred.push_back(pred);
  }

 private:
  void log_line(long epoch, long iter) {
    std::ostringstream os;
    os << "stage=" << stage_ << " epoch=" << epoch << " iter=" << iter << " rec_A=" << trace_.rec_A.back()
       << " rec_B=" << trace_.rec_B.back() << " var_AtoB=" << trace_.var_AtoB.back()
       << " var_BtoA=" << trace_.var_BtoA.back() << " pred=" << trace_.pred.back();
    for (const auto& [g, v] : trace_.geo)
      if (!v.empty()) os << " geo_" << group_name(g) << "=" << v.back();
    cfg_.log(os.str());
  }

  SpliceModel& m_;
  const Mat& xa_;
  const Mat& xb_;
  const Step1Config& cfg_;
  std::map<LatentGroup, GeoTerm> geo_;
  const char* stage_;
  Index n_ = 0, batch_ = 0, per_epoch_ = 0;
  std::vector<AdamState> ae_state_;
  AdamState priv_A_, priv_B_, msr_AtoB_, msr_BtoA_;
  LossTrace trace_;
};

}  // namespace detail

/// Step 1: standardise on the training split, then alternate (a) one Adam
/// step on all encoders and decoders for L_rec^A + L_rec^B, (b) one Adam step
/// on the private encoders for the measurement-output variance, (c) n_msr
/// Adam steps on the measurement networks for their prediction loss.
inline LossTrace step1_train(SpliceModel& model, const PairedDataset& data, const Step1Config& cfg) {
  cfg.validate();
  data.validate();
  if (data.x_A.cols() != static_cast<Index>(model.dims.n_A) || data.x_B.cols() != static_cast<Index>(model.dims.n_B))
    throw ConfigError("step1: data widths do not match model dims");
  fit_standardizer(model, data, cfg.standardize);
  const auto train = data.indices(Split::Train);
  const Mat xa = model.standardizer.to_model_A(take_rows(data.x_A, train));
  const Mat xb = model.standardizer.to_model_B(take_rows(data.x_B, train));
  return detail::AlternatingTrainer(model, xa, xb, cfg, {}, "step1").run();
}

/// Model-space training views (standardised with the model's stored statistics).
inline std::pair<Mat, Mat> model_space(const SpliceModel& m, const PairedDataset& data, Split s) {
  const auto rows = data.indices(s);
  return {m.standardizer.to_model_A(take_rows(data.x_A, rows)), m.standardizer.to_model_B(take_rows(data.x_B, rows))};
}

}  // namespace splice
