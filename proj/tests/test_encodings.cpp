#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "test_util.hpp"
#include "ulre/encodings.hpp"
#include "ulre/gradcheck.hpp"

using namespace ulre;
using std::numbers::pi;

namespace {

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0, 1);
  return Vec3(n(rng), n(rng), n(rng)).normalized();
}

const double kS = std::sqrt(0.5);

}  // namespace

TEST(Fourier, ZeroInput) {
  const auto e = fourier_encode(Vec3::Zero(), {2, false});
  ASSERT_EQ(e.size(), 12u);
  for (int k = 0; k < 2; ++k)
    for (int c = 0; c < 3; ++c) {
      EXPECT_EQ(e[static_cast<std::size_t>(6 * k + c)], 0.0);
      EXPECT_EQ(e[static_cast<std::size_t>(6 * k + 3 + c)], 1.0);
    }
}

TEST(Fourier, IdentityOnly) {
  const Vec3 x(0.1, -0.4, 0.9);
  const auto e = fourier_encode(x, {0, true});
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0], x[0]);
  EXPECT_EQ(e[1], x[1]);
  EXPECT_EQ(e[2], x[2]);
}

TEST(Fourier, FirstSineTerm) {
  const auto e = fourier_encode(Vec3(0.25, 0, 0), {1, false});
  EXPECT_NEAR(e[0], std::sqrt(2.0) / 2, 1e-12);
}

TEST(Fourier, EntriesBoundedAndWidthMatches) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  const FourierConfig cfg{6, true};
  for (int i = 0; i < 200; ++i) {
    const auto e = fourier_encode(Vec3(u(rng), u(rng), u(rng)), cfg);
    ASSERT_EQ(e.size(), cfg.width());
    for (double v : e) EXPECT_LE(std::abs(v), 1.0);
  }
  EXPECT_THROW((FourierConfig{17, true}.validate()), std::invalid_argument);
}

TEST(Fourier, RowsMatchScalarVersion) {
  std::mt19937_64 rng(2);
  const auto xyz = ulre::testing::random_matrix(5, 3, rng);
  const FourierConfig cfg{3, true};
  const auto rows = fourier_encode_rows(xyz, cfg);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto e = fourier_encode(Vec3(xyz(i, 0), xyz(i, 1), xyz(i, 2)), cfg);
    for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(rows(i, k), e[k], 1e-15);
  }
}

TEST(Reflect, Examples) {
  EXPECT_TRUE(reflect(Vec3::UnitZ(), Vec3::UnitZ()).isApprox(Vec3::UnitZ()));
  EXPECT_LT((reflect(Vec3(kS, 0, kS), Vec3::UnitZ()) - Vec3(-kS, 0, kS)).norm(), 1e-15);
  EXPECT_LT((reflect(Vec3::UnitX(), Vec3::UnitZ()) - Vec3(-1, 0, 0)).norm(), 1e-15);
}

TEST(Reflect, InvolutionAndAnglePreservation) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const Vec3 v = random_unit(rng), n = random_unit(rng);
    const Vec3 r = reflect(v, n);
    EXPECT_LT((reflect(r, n) - v).norm(), 1e-12);
    EXPECT_NEAR(n.dot(r), n.dot(v), 1e-12);
    EXPECT_NEAR(r.norm(), 1.0, 1e-12);
  }
}

TEST(PerturbNormal, Examples) {
  const Vec3 n(0.3, -0.2, 0.9);
  const Vec3 nu = n.normalized();
  std::mt19937_64 rng(4);
  EXPECT_LT((perturb_normal(nu, random_unit(rng), 0.0) - nu).norm(), 1e-15);
  EXPECT_LT((perturb_normal(Vec3::UnitZ(), Vec3::UnitX(), 1.0) - Vec3(kS, 0, kS)).norm(), 1e-15);
  for (double d : {0.1, 1.0, 7.0}) EXPECT_LT((perturb_normal(nu, nu, d) - nu).norm(), 1e-15);
}

TEST(SpecularDirection, Examples) {
  std::mt19937_64 rng(5);
  const Vec3 v = random_unit(rng), n = random_unit(rng);
  EXPECT_LT((specular_direction({v, n, 0.0}) - reflect(v, n)).norm(), 1e-15);
  EXPECT_LT((specular_direction({Vec3::UnitZ(), Vec3::UnitZ(), 0.7}) - Vec3::UnitZ()).norm(), 1e-15);
  EXPECT_LT((specular_direction({Vec3::UnitX(), Vec3::UnitZ(), 1.0}) - Vec3::UnitZ()).norm(), 1e-12);
}

TEST(SpecularDirection, ContinuousInRoughness) {
  // d/dδ at δ=0: n' = n + δ t, t = v - n(n·v); r = 2(v·n')n' - v.
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec3 v = random_unit(rng), n = random_unit(rng);
    const Vec3 t = v - n * n.dot(v);
    const Vec3 analytic = 2.0 * (v.dot(t) * n + v.dot(n) * t);
    const double h = 1e-6;
    const Vec3 fd = (specular_direction({v, n, h}) - specular_direction({v, n, 0.0})) / h;
    EXPECT_LT((fd - analytic).norm(), 1e-4);
  }
}

TEST(SphericalHarmonics, ClosedForms) {
  std::mt19937_64 rng(7);
  EXPECT_NEAR(real_sph_harm(0, 0, random_unit(rng)), 1.0 / (2.0 * std::sqrt(pi)), 1e-15);
  EXPECT_NEAR(real_sph_harm(1, 0, Vec3::UnitZ()), std::sqrt(3.0 / (4.0 * pi)), 1e-15);
  EXPECT_THROW(real_sph_harm(1, 2, Vec3::UnitZ()), std::invalid_argument);
  EXPECT_THROW(real_sph_harm(-1, 0, Vec3::UnitZ()), std::invalid_argument);
}

TEST(SphericalHarmonics, OrthonormalUnderQuadrature) {
  // Gauss-Legendre would be exact; a 64x128 midpoint grid is the stated oracle.
  const int nt = 64, np = 128;
  const auto basis = RheConfig::full(3).basis;
  std::vector<std::vector<double>> gram(basis.size(), std::vector<double>(basis.size(), 0.0));
  for (int a = 0; a < nt; ++a) {
    const double theta = (a + 0.5) * pi / nt;
    const double w = std::sin(theta) * (pi / nt) * (2 * pi / np);
    for (int b = 0; b < np; ++b) {
      const double ph = (b + 0.5) * 2 * pi / np;
      const Vec3 d(std::sin(theta) * std::cos(ph), std::sin(theta) * std::sin(ph), std::cos(theta));
      std::vector<double> y(basis.size());
      for (std::size_t k = 0; k < basis.size(); ++k) y[k] = real_sph_harm(basis[k].l, basis[k].m, d);
      for (std::size_t i = 0; i < y.size(); ++i)
        for (std::size_t j = 0; j < y.size(); ++j) gram[i][j] += w * y[i] * y[j];
    }
  }
  for (std::size_t i = 0; i < basis.size(); ++i)
    for (std::size_t j = 0; j < basis.size(); ++j) EXPECT_NEAR(gram[i][j], i == j ? 1.0 : 0.0, 1e-3);
  EXPECT_NEAR(gram[7][7], 1.0, 1e-3);  // (2, 1)
  EXPECT_EQ(basis[7].l, 2);
  EXPECT_EQ(basis[7].m, 1);
}

TEST(RheWeights, ClosedForms) {
  const auto cfg = RheConfig::full(2);
  for (double kappa : {1e-3, 1.0, 50.0}) {
    const auto w = rhe_weights(kappa, cfg);
    EXPECT_EQ(w[0], 1.0);
  }
  const auto w1 = rhe_weights(1.0, cfg);
  EXPECT_NEAR(w1[2], std::exp(-1.0), 1e-12);  // (1, 0)
  const auto w2 = rhe_weights(2.0, cfg);
  EXPECT_NEAR(w2[7], std::exp(-1.5), 1e-12);  // (2, 1)
  EXPECT_THROW(rhe_weights(0.0, cfg), std::invalid_argument);
  EXPECT_THROW(rhe_weights(-1.0, cfg), std::invalid_argument);
}

TEST(RheWeights, Monotone) {
  const auto cfg = RheConfig::full(4);
  for (double kappa : {0.1, 1.0, 10.0}) {
    const auto w = rhe_weights(kappa, cfg);
    const auto more = rhe_weights(kappa * 1.5, cfg);
    for (std::size_t k = 1; k < cfg.basis.size(); ++k) {
      if (cfg.basis[k].l > cfg.basis[k - 1].l) EXPECT_LT(w[k], w[k - 1]);
      EXPECT_GT(more[k], w[k]);
    }
  }
}

TEST(RheEncode, Limits) {
  std::mt19937_64 rng(8);
  const auto cfg = RheConfig::full(4);
  const Vec3 r = random_unit(rng);
  const auto sharp = rhe_encode(r, 1e12, cfg);
  for (std::size_t k = 0; k < cfg.basis.size(); ++k)
    EXPECT_NEAR(sharp[k], real_sph_harm(cfg.basis[k].l, cfg.basis[k].m, r), 1e-10);
  const auto blurred = rhe_encode(r, 1e-6, cfg);
  for (std::size_t k = 1; k < cfg.basis.size(); ++k) EXPECT_LT(std::abs(blurred[k]), 1e-8);
  const auto e = rhe_encode(Vec3::UnitZ(), 1.0, RheConfig::full(2));
  EXPECT_NEAR(e[2], std::exp(-1.0) * 0.488603, 1e-6);
}

TEST(RheEncode, DegreeBlockNormsRotationInvariant) {
  std::mt19937_64 rng(9);
  const auto cfg = RheConfig::full(4);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec3 r = random_unit(rng);
    const double kappa = std::exp(n(rng));
    const Mat3 R = Eigen::AngleAxisd(std::abs(n(rng)) * 3, random_unit(rng)).toRotationMatrix();
    const auto a = rhe_encode(r, kappa, cfg), b = rhe_encode(R * r, kappa, cfg);
    for (int l = 0; l <= 4; ++l) {
      double na = 0, nb = 0;
      for (std::size_t k = 0; k < cfg.basis.size(); ++k)
        if (cfg.basis[k].l == l) {
          na += a[k] * a[k];
          nb += b[k] * b[k];
        }
      EXPECT_NEAR(na, nb, 1e-9);
    }
  }
}

TEST(RheConfig, Validation) {
  EXPECT_EQ(RheConfig::full(4).width(), 25u);
  RheConfig dup{2, {{0, 0}, {1, 0}, {1, 0}}};
  EXPECT_THROW(dup.validate(), std::invalid_argument);
  RheConfig bad{1, {{2, 0}}};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(ReflectionFrame, KappaClamped) {
  EXPECT_EQ(kappa_from_roughness(0.0), kKappaMax);
  EXPECT_EQ(kappa_from_roughness(1e20), kKappaMin);
  EXPECT_DOUBLE_EQ(kappa_from_roughness(0.5), 2.0);
  ReflectionFrame f{Vec3(2, 0, 0), Vec3::UnitZ(), 0.1};
  EXPECT_THROW(f.validate(), std::invalid_argument);
}

TEST(TapeEncodings, MatchScalarVersions) {
  std::mt19937_64 rng(10);
  const std::size_t n = 6;
  Tensor<double> v = Tensor<double>::matrix(n, 3), nn = Tensor<double>::matrix(n, 3), d = Tensor<double>::matrix(n, 1);
  std::vector<Vec3> vs, ns;
  for (std::size_t i = 0; i < n; ++i) {
    vs.push_back(random_unit(rng));
    ns.push_back(random_unit(rng));
    d(i, 0) = 0.05 + 0.3 * static_cast<double>(i);
    for (int a = 0; a < 3; ++a) {
      v(i, static_cast<std::size_t>(a)) = vs.back()[a];
      nn(i, static_cast<std::size_t>(a)) = ns.back()[a];
    }
  }
  ad::Tape<double> tape;
  auto V = tape.constant(v), N = tape.constant(nn), D = tape.constant(d);
  const auto cfg = RheConfig::full(3);
  auto micro = perturb_normal_rows(N, V, D);
  auto refl = reflect_rows(V, micro);
  auto enc = rhe_encode_rows(refl, D, cfg);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 r = specular_direction({vs[i], ns[i], d(i, 0)});
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(refl.value()(i, static_cast<std::size_t>(a)), r[a], 1e-12);
    const auto e = rhe_encode(r, kappa_from_roughness(d(i, 0)), cfg);
    for (std::size_t k = 0; k < e.size(); ++k) EXPECT_NEAR(enc.value()(i, k), e[k], 1e-12);
  }
}

TEST(TapeEncodings, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  Tensor<double> v = Tensor<double>::matrix(4, 3), nn = Tensor<double>::matrix(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec3 a = random_unit(rng), b = random_unit(rng);
    for (std::size_t c = 0; c < 3; ++c) {
      v(i, c) = a[static_cast<int>(c)];
      nn(i, c) = b[static_cast<int>(c)] * 1.3;
    }
  }
  Tensor<double> d({4, 1}, std::vector<double>{0.1, 0.4, 0.9, 2.0});
  const auto cfg = RheConfig::full(4);
  std::mt19937_64 wrng(12);
  const auto weights = ulre::testing::random_matrix(4, cfg.width(), wrng);
  ad::LossBuilder<double> f = [&](ad::Tape<double>& tape, std::span<const ad::Var<double>> p) {
    static constexpr double up[3] = {0, 0, 1};
    auto N = ad::normalize_rows<double>(p[1], up);
    auto micro = perturb_normal_rows(N, p[0], p[2]);
    auto enc = rhe_encode_rows(reflect_rows(p[0], micro), p[2], cfg);
    auto w = tape.constant(weights);
    return ad::sum(enc * w) + ad::sum(fourier_encode_rows(p[0], FourierConfig{2, true}));
  };
  const auto r = ad::check_gradient<double>(f, {v, nn, d}, 1e-6);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.flagged, 0u);
}
