#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "test_util.hpp"
#include "ulre/gradcheck.hpp"
#include "ulre/network.hpp"

using namespace ulre;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.spatial_depth = 3;
  c.spatial_width = 16;
  c.directional_depth = 2;
  c.directional_width = 16;
  c.bottleneck = 4;
  c.rhe_degree = 2;
  c.position_encoding = {2, true};
  c.direction_encoding = {2, true};
  return c;
}

DirectionalInputVars<double> directional_inputs(ad::Tape<double>& tape, const NetworkConfig& c, std::size_t n,
                                                std::mt19937_64& rng) {
  return {tape.constant(ulre::testing::random_matrix(n, c.direction_feature_width(), rng)),
          tape.constant(ulre::testing::random_matrix(n, 1, rng)),
          tape.constant(ulre::testing::random_matrix(n, static_cast<std::size_t>(c.bottleneck), rng))};
}

}  // namespace

TEST(Network, ZeroParametersGiveNeutralOutputs) {
  const auto c = small_config();
  const auto ps = zero_network<double>(c);
  std::mt19937_64 rng(1);
  const auto x = ulre::testing::random_matrix(1, c.spatial_input_width(), rng);
  const MediumProperties m = spatial_forward(ps, c, x.storage());
  EXPECT_DOUBLE_EQ(m.beta, 0.5);
  EXPECT_DOUBLE_EQ(m.rho, 0.5);
  EXPECT_DOUBLE_EQ(m.phi, 0.5);
  EXPECT_DOUBLE_EQ(m.cd, 0.5);
  EXPECT_NEAR(m.alpha, std::log(2.0), 1e-15);
  EXPECT_NEAR(m.delta, std::log(2.0), 1e-15);
  EXPECT_EQ(m.normal, Vec3::UnitZ());
  for (double b : m.bottleneck) EXPECT_EQ(b, 0.0);

  ad::Tape<double> tape;
  const auto bound = bind_params(tape, ps, false);
  const auto cs = directional_forward(bound, c, directional_inputs(tape, c, 5, rng));
  for (double v : cs.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Network, OutputRanges) {
  const auto c = small_config();
  const auto ps = init_network<double>(c, 3);
  ad::Tape<double> tape;
  const auto bound = bind_params(tape, ps, false);
  std::mt19937_64 rng(2);
  const auto m = spatial_forward(bound, c, tape.constant(ulre::testing::random_matrix(200, c.spatial_input_width(), rng)));
  for (std::size_t i = 0; i < 200; ++i) {
    EXPECT_GT(m.alpha.value()[i], 0.0);
    EXPECT_GT(m.delta.value()[i], 0.0);
    for (const auto* v : {&m.beta, &m.rho, &m.phi, &m.cd}) {
      EXPECT_GT(v->value()[i], 0.0);
      EXPECT_LT(v->value()[i], 1.0);
    }
    const double len = std::hypot(m.normal.value()(i, 0), m.normal.value()(i, 1), m.normal.value()(i, 2));
    EXPECT_NEAR(len, 1.0, 1e-12);
  }
  EXPECT_EQ(m.bottleneck.value().cols(), 4u);
}

TEST(Network, InitBoundsAndMoments) {
  MlpConfig m;
  m.widths = {39, 128, 80};
  m.seed = 7;
  const auto layers = siren_init<double>(m);
  const double first = 1.0 / 39, later = std::sqrt(6.0 / 128) / 30.0;
  for (double w : layers[0].weight.storage()) EXPECT_LT(std::abs(w), first);
  double sum = 0, sq = 0;
  for (double w : layers[1].weight.storage()) {
    EXPECT_LT(std::abs(w), later);
    sum += w;
    sq += w * w;
  }
  // U(-b, b): variance b^2/3, so the mean of n draws has σ = b / sqrt(3n).
  const double n = static_cast<double>(layers[1].weight.size());
  ASSERT_GE(n, 1e4);
  EXPECT_LT(std::abs(sum / n), 3.0 * later / std::sqrt(3.0 * n));
  EXPECT_NEAR(sq / n, later * later / 3.0, 0.05 * later * later);
  for (const auto& l : layers)
    for (double b : l.bias.storage()) EXPECT_EQ(b, 0.0);

  MlpConfig r = m;
  r.activations = {Activation::Relu, Activation::Relu};
  const auto relu = siren_init<double>(r);
  for (double w : relu[1].weight.storage()) EXPECT_LT(std::abs(w), std::sqrt(6.0 / 128));
}

TEST(Network, SineLayerLipschitzBound) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = ulre::testing::random_matrix(12, 9, rng), b = ulre::testing::random_matrix(1, 9, rng);
    const auto x = ulre::testing::random_matrix(1, 12, rng), dx = ulre::testing::random_matrix(1, 12, rng, -1e-3, 1e-3);
    Tensor<double> x2 = x;
    for (std::size_t i = 0; i < 12; ++i) x2[i] += dx[i];
    Eigen::MatrixXd W(12, 9);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 9; ++j) W(i, j) = w(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    const double op_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(W).singularValues()(0);
    ad::Tape<double> tape;
    const auto W_ = tape.constant(w), B_ = tape.constant(b);
    const auto y1 = dense(tape.constant(x), W_, B_, Activation::Sine, 30.0);
    const auto y2 = dense(tape.constant(x2), W_, B_, Activation::Sine, 30.0);
    double dy = 0, dxn = 0;
    for (std::size_t j = 0; j < 9; ++j) dy += std::pow(y1.value()[j] - y2.value()[j], 2);
    for (std::size_t i = 0; i < 12; ++i) dxn += dx[i] * dx[i];
    EXPECT_LE(std::sqrt(dy), 1.05 * 30.0 * op_norm * std::sqrt(dxn));
  }
}

TEST(Network, UniformSamplerStaysInsideOpenInterval) {
  UniformSampler s(0);
  for (int i = 0; i < 100000; ++i) {
    const double v = s(1.0);
    ASSERT_GT(v, -1.0);
    ASSERT_LT(v, 1.0);
  }
}

TEST(Network, InitDeterministicPerSeed) {
  const auto c = small_config();
  const auto a = init_network<double>(c, 11), b = init_network<double>(c, 11), d = init_network<double>(c, 12);
  ASSERT_EQ(a.size(), b.size());
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(a[i].value.storage(), b[i].value.storage());
    differs |= a[i].value.storage() != d[i].value.storage();
  }
  EXPECT_TRUE(differs);
}

TEST(Network, ParameterNamesAndShapes) {
  const auto c = small_config();
  const auto ps = init_network<double>(c, 0);
  const auto* w0 = find_param(ps, "spatial.layer0.weight");
  ASSERT_NE(w0, nullptr);
  EXPECT_EQ(w0->rows(), c.spatial_input_width());
  EXPECT_EQ(w0->cols(), 16u);
  const auto* nb = find_param(ps, "spatial.head.normal.bias");
  ASSERT_NE(nb, nullptr);
  EXPECT_EQ(nb->cols(), 3u);
  const auto* d0 = find_param(ps, "directional.layer0.weight");
  ASSERT_NE(d0, nullptr);
  EXPECT_EQ(d0->rows(), c.directional_input_width());
  EXPECT_EQ(c.directional_input_width(), 9u + 1u + 4u);
  EXPECT_NE(find_param(ps, "directional.head.weight"), nullptr);
  EXPECT_EQ(find_param(ps, "nope"), nullptr);
}

TEST(Network, AblationInputWidths) {
  auto c = small_config();
  c.reflection = ReflectionMode::ViewDir;
  EXPECT_EQ(c.direction_feature_width(), 9u + 15u);
  c.encoding = DirectionEncoding::Fourier;
  c.reflection = ReflectionMode::None;
  EXPECT_EQ(c.direction_feature_width(), 15u);
}

TEST(Network, ReflectionIntensity) {
  EXPECT_DOUBLE_EQ(reflection_intensity(0.0, 0.0), 0.5);
  EXPECT_NEAR(reflection_intensity(0.25, -0.25), 0.5, 1e-15);
  EXPECT_NEAR(reflection_intensity(2.0, 0.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
  EXPECT_GT(reflection_intensity(800.0, 0.0), 0.999);
  EXPECT_GE(reflection_intensity(-800.0, 0.0), 0.0);
  EXPECT_LT(reflection_intensity(-12.0, -8.0), 1e-8);
  double prev = 0;
  for (double cs = -10; cs <= 10; cs += 0.5) {
    const double v = reflection_intensity(0.3, cs);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Network, WidthMismatchThrows) {
  const auto c = small_config();
  const auto ps = init_network<double>(c, 0);
  ad::Tape<double> tape;
  const auto bound = bind_params(tape, ps, false);
  EXPECT_THROW(spatial_forward(bound, c, tape.constant(Tensor<double>::matrix(2, 4))), std::invalid_argument);
  EXPECT_THROW(bound["missing"], std::out_of_range);
}

TEST(Network, ParseNames) {
  EXPECT_EQ(parse_activation("relu"), Activation::Relu);
  EXPECT_EQ(parse_encoding("pe"), DirectionEncoding::Fourier);
  EXPECT_EQ(parse_reflection("no_reflection"), ReflectionMode::None);
  EXPECT_THROW(parse_activation("tanh"), std::invalid_argument);
  EXPECT_STREQ(to_string(ReflectionMode::ViewDir), "viewdir");
}

class NetworkGradient : public ::testing::TestWithParam<Activation> {};

TEST_P(NetworkGradient, MatchesFiniteDifferences) {
  auto c = small_config();
  c.activation = GetParam();
  c.w0 = 3.0;  // keeps the finite-difference curvature modest
  const auto ps = init_network<double>(c, 5);
  std::mt19937_64 rng(6);
  const auto x = ulre::testing::random_matrix(3, c.spatial_input_width(), rng);
  const auto feats = ulre::testing::random_matrix(3, c.direction_feature_width(), rng);
  const auto ndotv = ulre::testing::random_matrix(3, 1, rng);
  std::vector<Tensor<double>> params;
  for (const auto& p : ps) params.push_back(p.value);
  ad::LossBuilder<double> f = [&](ad::Tape<double>& tape, std::span<const ad::Var<double>> vars) {
    BoundParams<double> b;
    for (std::size_t i = 0; i < ps.size(); ++i) {
      b.names.push_back(ps[i].name);
      b.vars.push_back(vars[i]);
    }
    const auto m = spatial_forward(b, c, tape.constant(x));
    const auto cs = directional_forward(b, c, {tape.constant(feats), tape.constant(ndotv), m.bottleneck});
    const auto c_ref = reflection_intensity(m.cd, cs);
    return ad::sum(c_ref) + ad::sum(m.alpha * m.beta) + ad::sum(m.rho + m.phi) + ad::sum(m.delta) +
           ad::sum(m.normal * m.normal * m.normal);
  };
  const auto r = ad::check_gradient<double>(f, params, 1e-6);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_rel_error, 1e-5);
  if (GetParam() == Activation::Sine) EXPECT_EQ(r.flagged, 0u);
}

INSTANTIATE_TEST_SUITE_P(Activations, NetworkGradient, ::testing::Values(Activation::Sine, Activation::Relu),
                         [](const auto& info) { return std::string(to_string(info.param)); });
