#include "splice/nn.hpp"

#include <gtest/gtest.h>

using namespace splice;

namespace {

// Per-sample forward written without Eigen block ops.
std::vector<double> naive_forward(const Mlp& net, const std::vector<double>& x) {
  std::vector<double> a = x;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    const auto& layer = net.layers()[l];
    std::vector<double> z(static_cast<std::size_t>(layer.weight.rows()));
    for (Index o = 0; o < layer.weight.rows(); ++o) {
      double s = layer.bias(o);
      for (Index i = 0; i < layer.weight.cols(); ++i) s += layer.weight(o, i) * a[static_cast<std::size_t>(i)];
      const bool last = l + 1 == net.layers().size();
      if (!last) {
        if (net.activation().kind == Activation::LeakyRelu) s = s > 0 ? s : net.activation().slope * s;
        if (net.activation().kind == Activation::Tanh) s = std::tanh(s);
      }
      z[static_cast<std::size_t>(o)] = s;
    }
    a = z;
  }
  return a;
}

Mlp random_net(Rng& rng, std::uint64_t seed, Activation act) {
  std::uniform_int_distribution<int> depth(1, 4), width(1, 32);
  std::vector<std::size_t> dims{static_cast<std::size_t>(width(rng))};
  const int layers = depth(rng);
  for (int i = 0; i < layers; ++i) dims.push_back(static_cast<std::size_t>(width(rng)));
  Mlp net = init_net(dims, ActivationSpec{act, 0.01}, seed);
  for (auto& l : net.layers()) l.bias = Vec::Random(l.bias.size()) * 0.5;
  return net;
}

double probe_loss(Mlp& net, const Mat& x, const Mat& up) { return (net.predict(x).array() * up.array()).sum(); }

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(Forward, ZeroWeightsGiveBias) {
  Mlp net({3, 2}, ActivationSpec{});
  net.layers()[0].bias << 0.5, -1.5;
  const Mat out = net.predict(Mat::Random(4, 3));
  for (Index r = 0; r < 4; ++r) {
    EXPECT_EQ(out(r, 0), 0.5);
    EXPECT_EQ(out(r, 1), -1.5);
  }
}

TEST(Forward, HandComputedAffine) {
  Mlp net({2, 1}, ActivationSpec{});
  net.layers()[0].weight << 1, 2;
  Mat x(1, 2);
  x << 3, 4;
  EXPECT_DOUBLE_EQ(net.predict(x)(0, 0), 11.0);
}

TEST(Forward, MatchesNaivePerSampleLoop) {
  Mlp net = init_net({5, 3, 2}, ActivationSpec{}, 17);
  for (auto& l : net.layers()) l.bias.setRandom();
  Rng rng(3);
  const Mat x = randn(7, 5, rng);
  const Mat out = net.forward(x);
  for (Index r = 0; r < x.rows(); ++r) {
    std::vector<double> xi(x.row(r).data(), x.row(r).data() + 5);
    const auto ref = naive_forward(net, xi);
    for (Index c = 0; c < 2; ++c) EXPECT_NEAR(out(r, c), ref[static_cast<std::size_t>(c)], 1e-12);
  }
}

TEST(Forward, DimensionMismatchIsConfigError) {
  Mlp net = init_net({4, 2}, ActivationSpec{}, 1);
  EXPECT_THROW(net.forward(Mat::Zero(2, 3)), ConfigError);
}

TEST(Forward, RepeatedCallsAgreeExactly) {
  Mlp net = init_net({6, 8, 3}, ActivationSpec{Activation::Tanh, 0}, 5);
  Rng rng(1);
  const Mat x = randn(5, 6, rng);
  const Mat a = net.forward(x);
  const Mat b = net.predict(x);
  EXPECT_TRUE((a.array() == b.array()).all());
}

TEST(Backward, BeforeForwardIsStateError) {
  Mlp net = init_net({3, 2}, ActivationSpec{}, 1);
  EXPECT_THROW(net.backward(Mat::Zero(1, 2)), StateError);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Mlp net = init_net({4, 5, 2}, ActivationSpec{}, 2);
  Rng rng(2);
  net.forward(randn(3, 4, rng));
  const auto g = net.backward(Mat::Zero(3, 2));
  for (const auto& w : g.weight) EXPECT_EQ(w.norm(), 0.0);
  for (const auto& b : g.bias) EXPECT_EQ(b.norm(), 0.0);
  EXPECT_EQ(g.input.norm(), 0.0);
}

TEST(Backward, ScalarLinearDerivative) {
  Mlp net({1, 1}, ActivationSpec{});
  net.layers()[0].weight(0, 0) = 2.5;
  Mat x(1, 1);
  x << 1.75;
  net.forward(x);
  const auto g = net.backward(Mat::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.weight[0](0, 0), 1.75);
  EXPECT_DOUBLE_EQ(g.bias[0](0), 1.0);
  EXPECT_DOUBLE_EQ(g.input(0, 0), 2.5);
}

TEST(Backward, MatchesCentralFiniteDifferences) {
  Rng rng(2024);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const Activation act = trial % 2 ? Activation::Tanh : Activation::LeakyRelu;
    Mlp net = random_net(rng, 100 + static_cast<std::uint64_t>(trial), act);
    const Mat x = randn(3, static_cast<Index>(net.input_dim()), rng);
    const Mat up = randn(3, static_cast<Index>(net.output_dim()), rng);
    net.forward(x);
    const auto g = net.backward(up);
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
      Mat& w = net.layers()[l].weight;
      for (Index i = 0; i < w.size(); ++i) {
        const double keep = w.data()[i];
        w.data()[i] = keep + h;
        const double fp = probe_loss(net, x, up);
        w.data()[i] = keep - h;
        const double fm = probe_loss(net, x, up);
        w.data()[i] = keep;
        EXPECT_LT(rel_err(g.weight[l].data()[i], (fp - fm) / (2 * h)), 1e-4) << "trial " << trial << " layer " << l;
      }
      Vec& b = net.layers()[l].bias;
      for (Index i = 0; i < b.size(); ++i) {
        const double keep = b(i);
        b(i) = keep + h;
        const double fp = probe_loss(net, x, up);
        b(i) = keep - h;
        const double fm = probe_loss(net, x, up);
        b(i) = keep;
        EXPECT_LT(rel_err(g.bias[l](i), (fp - fm) / (2 * h)), 1e-4);
      }
    }
    Mat xp = x;
    for (Index i = 0; i < x.size(); ++i) {
      xp.data()[i] = x.data()[i] + h;
      const double fp = probe_loss(net, xp, up);
      xp.data()[i] = x.data()[i] - h;
      const double fm = probe_loss(net, xp, up);
      xp.data()[i] = x.data()[i];
      EXPECT_LT(rel_err(g.input.data()[i], (fp - fm) / (2 * h)), 1e-4);
    }
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Mlp net = init_net({3, 4, 2}, ActivationSpec{}, 9);
  const Mlp before = net;
  AdamState st(net, AdamConfig{});
  net.forward(Mat::Ones(2, 3));
  const auto g = net.backward(Mat::Zero(2, 2));
  for (int i = 0; i < 5; ++i) adam_step(net, g, st, 0);
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    EXPECT_TRUE((net.layers()[l].weight.array() == before.layers()[l].weight.array()).all());
    EXPECT_TRUE((net.layers()[l].bias.array() == before.layers()[l].bias.array()).all());
  }
}

TEST(Adam, FirstStepClosedForm) {
  Mlp net({1, 1}, ActivationSpec{});
  net.layers()[0].weight(0, 0) = 0.3;
  AdamConfig cfg;
  AdamState st(net, cfg);
  MlpGradients g;
  g.weight = {Mat::Constant(1, 1, 1.0)};
  g.bias = {Vec::Zero(1)};
  adam_step(net, g, st, 0);
  // m = 0.1, v = 0.001; bias-corrected m_hat = 1, v_hat = 1.
  const double m_hat = (1 - 0.9) * 1.0 / (1 - 0.9);
  const double v_hat = (1 - 0.999) * 1.0 / (1 - 0.999);
  const double expected = 0.3 - 1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8);
  EXPECT_NEAR(net.layers()[0].weight(0, 0), expected, 1e-12);
  EXPECT_NEAR(0.3 - net.layers()[0].weight(0, 0), 0.001, 1e-10);
}

TEST(Adam, LinearScheduleEndpointsAndMonotone) {
  AdamConfig cfg;
  cfg.total_epochs = 19;
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), 1e-3);
  EXPECT_DOUBLE_EQ(cfg.lr_at(19), 1e-5);
  EXPECT_DOUBLE_EQ(cfg.lr_at(50), 1e-5);
  EXPECT_DOUBLE_EQ(cfg.lr_at(-3), 1e-3);
  for (int e = 1; e < 25; ++e) EXPECT_LE(cfg.lr_at(e), cfg.lr_at(e - 1));
}

TEST(Init, SameSeedIsBitwiseIdentical) {
  const Mlp a = init_net({10, 7, 3}, ActivationSpec{}, 77);
  const Mlp b = init_net({10, 7, 3}, ActivationSpec{}, 77);
  const Mlp c = init_net({10, 7, 3}, ActivationSpec{}, 78);
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    EXPECT_TRUE((a.layers()[l].weight.array() == b.layers()[l].weight.array()).all());
    EXPECT_EQ(a.layers()[l].bias.norm(), 0.0);
  }
  EXPECT_FALSE((a.layers()[0].weight.array() == c.layers()[0].weight.array()).all());
}

TEST(Init, ZeroDimIsConfigError) {
  EXPECT_THROW(init_net({4, 0, 2}, ActivationSpec{}, 1), ConfigError);
  EXPECT_THROW(init_net({4}, ActivationSpec{}, 1), ConfigError);
}

TEST(Init, PaperEncoderShapes) {
  const Mlp mnist = init_net({784, 256, 128, 64, 32, 30}, ActivationSpec{}, 1);
  EXPECT_EQ(mnist.layer_count(), 5u);
  EXPECT_EQ(mnist.layers()[0].weight.rows(), 256);
  EXPECT_EQ(mnist.layers()[0].weight.cols(), 784);
  const Mlp lgn = init_net({400, 200, 200, 200, 200, 200, 200, 2}, ActivationSpec{}, 1);
  EXPECT_EQ(lgn.layer_count(), 7u);
  EXPECT_EQ(lgn.output_dim(), 2u);
}

TEST(Init, HeScaledVariance) {
  const Mlp net = init_net({400, 300}, ActivationSpec{}, 4);
  const Mat& w = net.layers()[0].weight;
  const double var = w.squaredNorm() / static_cast<double>(w.size());
  EXPECT_NEAR(var, 2.0 / 400.0, 0.05 * 2.0 / 400.0);
}
