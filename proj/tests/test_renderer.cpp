#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"
#include "ulre/gradcheck.hpp"
#include "ulre/renderer.hpp"

using namespace ulre;

namespace {

PsfConfig flat_psf() {
  PsfConfig p;
  p.frequency = 0.0;
  return p;
}

Tensor<double> constant(std::size_t h, std::size_t w, double v) { return Tensor<double>::matrix(h, w, v); }

PropertyGrid empty_grid(std::size_t h, std::size_t w) {
  return {constant(h, w, 0), constant(h, w, 0), constant(h, w, 0), constant(h, w, 0)};
}

// Kernel placed with its centre at (t0, r0) inside an h x w image, clipped.
Tensor<double> shifted_kernel(const Tensor<double>& k, std::size_t h, std::size_t w, std::size_t t0, std::size_t r0,
                              double scale) {
  Tensor<double> out = Tensor<double>::matrix(h, w);
  const auto cr = static_cast<long>(k.rows() / 2), cc = static_cast<long>(k.cols() / 2);
  for (std::size_t i = 0; i < k.rows(); ++i)
    for (std::size_t j = 0; j < k.cols(); ++j) {
      const long t = static_cast<long>(t0) + static_cast<long>(i) - cr;
      const long r = static_cast<long>(r0) + static_cast<long>(j) - cc;
      if (t >= 0 && r >= 0 && t < static_cast<long>(h) && r < static_cast<long>(w))
        out(static_cast<std::size_t>(t), static_cast<std::size_t>(r)) = scale * k(i, j);
    }
  return out;
}

}  // namespace

TEST(ResidualEnergy, LosslessMedium) {
  ad::Tape<double> tape;
  const auto i = residual_energy(tape.constant(constant(8, 3, 0)), tape.constant(constant(8, 3, 0)), 0.15, 0.5, 2.0);
  for (double v : i.value().storage()) EXPECT_EQ(v, 2.0);
}

TEST(ResidualEnergy, ClosedFormAttenuation) {
  const double f = 0.2, dt = 0.5, alpha = 0.1 / (f * dt);
  ad::Tape<double> tape;
  const auto i = residual_energy(tape.constant(constant(16, 2, alpha)), tape.constant(constant(16, 2, 0)), f, dt, 1.0);
  for (std::size_t t = 0; t < 16; ++t)
    for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(i.value()(t, r), std::exp(-0.1 * static_cast<double>(t)), 1e-12);
  EXPECT_NEAR(i.value()(10, 0), std::exp(-1.0), 1e-9);
}

TEST(ResidualEnergy, TotalReflectorBlocks) {
  auto beta = constant(12, 2, 0);
  beta(5, 0) = 1.0;
  ad::Tape<double> tape;
  const auto i = residual_energy(tape.constant(constant(12, 2, 0.3)), tape.constant(beta), 0.15, 0.5, 1.0);
  for (std::size_t t = 6; t < 12; ++t) {
    EXPECT_EQ(i.value()(t, 0), 0.0);
    EXPECT_GT(i.value()(t, 1), 0.0);
  }
  EXPECT_GT(i.value()(5, 0), 0.0);
}

TEST(ResidualEnergy, MonotoneDepletion) {
  std::mt19937_64 rng(1);
  const auto alpha = ulre::testing::random_matrix(20, 4, rng, 0.0, 2.0);
  ad::Tape<double> tape;
  const auto i = residual_energy(tape.constant(alpha), tape.constant(constant(20, 4, 0)), 0.15, 0.5, 1.0);
  for (std::size_t t = 1; t < 20; ++t)
    for (std::size_t r = 0; r < 4; ++r) EXPECT_LT(i.value()(t, r), i.value()(t - 1, r));
  const auto j = residual_energy(tape.constant(constant(5, 1, 0)), tape.constant(constant(5, 1, 0)), 0.15, 0.5, 1.0);
  for (std::size_t t = 1; t < 5; ++t) EXPECT_LE(j.value()(t, 0), j.value()(t - 1, 0));
}

TEST(Psf, CenterSymmetryAndFlatCase) {
  const auto k = psf_kernel<double>(PsfConfig{});
  EXPECT_EQ(k.rows(), 11u);  // ceil(3 * 1.5) = 5 each side
  EXPECT_EQ(k.cols(), 7u);
  EXPECT_EQ(k(5, 3), 1.0);
  for (std::size_t i = 0; i < k.rows(); ++i)
    for (std::size_t j = 0; j < k.cols(); ++j) {
      EXPECT_EQ(k(i, j), k(k.rows() - 1 - i, j));
      EXPECT_EQ(k(i, j), k(i, k.cols() - 1 - j));
      const double x = static_cast<double>(i) - 5, y = static_cast<double>(j) - 3;
      EXPECT_NEAR(k(i, j), std::exp(-(x * x / 2.25 + y * y) / 2) * std::cos(2 * M_PI * 0.15 * x), 1e-15);
    }
  const auto g = psf_kernel<double>(flat_psf());
  for (double v : g.storage()) EXPECT_GT(v, 0.0);
  PsfConfig bad;
  bad.truncation = 0.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Reflected, NoReflectorsGiveZero) {
  ad::Tape<double> tape;
  const auto k = tape.constant(psf_kernel<double>(PsfConfig{}));
  const auto r = reflected_energy(tape.constant(constant(10, 10, 1)), tape.constant(constant(10, 10, 0)), k);
  for (double v : r.value().storage()) EXPECT_EQ(v, 0.0);
}

TEST(Reflected, DeltaReproducesKernel) {
  for (const PsfConfig& psf : {flat_psf(), PsfConfig{}}) {
    const std::size_t h = 24, w = 16, t0 = 9, r0 = 7;
    auto beta = constant(h, w, 0);
    beta(t0, r0) = 1.0;
    ad::Tape<double> tape;
    const auto kernel = psf_kernel<double>(psf);
    const auto energy = residual_energy(tape.constant(constant(h, w, 0)), tape.constant(beta), 0.15, 0.5, 1.5);
    const auto r = reflected_energy(energy, tape.constant(beta), tape.constant(kernel));
    EXPECT_LT(ulre::testing::max_abs_diff(r.value(), shifted_kernel(kernel, h, w, t0, r0, 1.5)), 1e-12);
  }
}

TEST(Reflected, Superposition) {
  const std::size_t h = 24, w = 16;
  const auto kernel = psf_kernel<double>(PsfConfig{});
  auto run = [&](const Tensor<double>& beta) {
    ad::Tape<double> tape;
    const auto energy = tape.constant(constant(h, w, 1.0));
    return reflected_energy(energy, tape.constant(beta), tape.constant(kernel)).value();
  };
  auto a = constant(h, w, 0), b = constant(h, w, 0);
  a(4, 3) = 0.7;
  b(15, 11) = 0.4;
  Tensor<double> both = a;
  both(15, 11) = 0.4;
  const auto ra = run(a), rb = run(b), rab = run(both);
  Tensor<double> sum = ra;
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += rb[i];
  EXPECT_LT(ulre::testing::max_abs_diff(rab, sum), 1e-12);
}

TEST(Kumaraswamy, Examples) {
  EXPECT_NEAR(kumaraswamy_sample(0.5, 0.5, 2.0), 0.5, 1e-15);
  for (double u : {0.01, 0.3, 0.99}) EXPECT_LT(kumaraswamy_sample(0.0, u, 4.0), 1e-8);
  for (double u : {0.01, 0.5, 0.9}) EXPECT_GT(kumaraswamy_sample(1.0 - 1e-9, u, 4.0), 0.999);
  double prev = -1;
  for (double rho = 0.05; rho < 1; rho += 0.1) {
    const double v = kumaraswamy_sample(rho, 0.5, 4.0);
    EXPECT_GT(v, prev);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    prev = v;
  }
}

TEST(Scatter, LimitsAndFrozenNoise) {
  ad::Tape<double> tape;
  const auto phi = tape.constant(constant(8, 8, 0.6));
  const auto zero = scatter_field(tape.constant(constant(8, 8, 0.0)), phi, 3, 4.0);
  const auto u = frozen_uniforms<double>(3, 8, 8);
  for (std::size_t i = 0; i < 64; ++i)
    if (u[i] <= 0.99) EXPECT_LT(zero.value()[i], 1e-8);
  const auto full = scatter_field(tape.constant(constant(8, 8, 1.0 - 1e-12)), phi, 3, 4.0);
  for (double v : full.value().storage()) EXPECT_NEAR(v, 0.6, 1e-3);

  const auto rho = tape.constant(constant(8, 8, 0.4));
  const auto s1 = scatter_field(rho, phi, 77, 4.0), s2 = scatter_field(rho, phi, 77, 4.0);
  EXPECT_EQ(s1.value().storage(), s2.value().storage());
  EXPECT_EQ(frozen_uniform(77, 3, 5), frozen_uniform(77, 3, 5));
  EXPECT_NE(frozen_uniform(77, 3, 5), frozen_uniform(78, 3, 5));
  for (double v : frozen_uniforms<double>(9, 30, 30).storage()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Backscatter, ZeroAndDelta) {
  const std::size_t h = 20, w = 12;
  const auto kernel = psf_kernel<double>(flat_psf());
  ad::Tape<double> tape;
  const auto energy = tape.constant(constant(h, w, 0.8));
  const auto b0 = backscatter(energy, tape.constant(constant(h, w, 0)), tape.constant(kernel));
  for (double v : b0.value().storage()) EXPECT_EQ(v, 0.0);
  auto s = constant(h, w, 0);
  s(10, 6) = 0.5;
  const auto b1 = backscatter(energy, tape.constant(s), tape.constant(kernel));
  EXPECT_LT(ulre::testing::max_abs_diff(b1.value(), shifted_kernel(kernel, h, w, 10, 6, 0.4)), 1e-12);
}

TEST(RenderBmode, EmptyMediumAndPureReflector) {
  RenderSettings st;
  EXPECT_EQ(render_image(empty_grid(16, 8), st).storage(), constant(16, 8, 0).storage());

  PropertyGrid g = empty_grid(16, 8);
  g.alpha = constant(16, 8, 0.2);
  g.beta(7, 3) = 0.6;
  g.beta(11, 5) = 0.3;
  g.phi = constant(16, 8, 0.5);  // ρ = 0 so the scatter field vanishes
  ad::Tape<double> tape;
  const auto vars = bind_grid(tape, g, false);
  const auto terms = render_bmode(vars, st);
  const auto kernel = tape.constant(psf_kernel<double>(st.psf));
  const auto r = reflected_energy(residual_energy(vars.alpha, vars.beta, st.frequency, st.axial_spacing, 1.0),
                                  vars.beta, kernel);
  EXPECT_LT(ulre::testing::max_abs_diff(terms.image.value(), r.value()), 1e-8);
}

TEST(Compose, Examples) {
  auto run = [](double a, double b) {
    ad::Tape<double> tape;
    return compose_final(tape.constant(constant(1, 1, a)), tape.constant(constant(1, 1, b))).value()[0];
  };
  EXPECT_EQ(run(0, 0), 0.0);
  EXPECT_EQ(run(0.8, 0.5), 1.0);
  EXPECT_NEAR(run(0.3, 0.2), 0.5, 1e-15);
  EXPECT_EQ(run(-0.4, 0.1), 0.0);
}

TEST(Compose, OutputAlwaysInUnitInterval) {
  std::mt19937_64 rng(4);
  ad::Tape<double> tape;
  const auto out = compose_final(tape.constant(ulre::testing::random_matrix(30, 30, rng, -2, 2)),
                                 tape.constant(ulre::testing::random_matrix(30, 30, rng, 0, 1)));
  for (double v : out.value().storage()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Interface, Coefficients) {
  const auto m = interface_coefficients(2.0, 2.0);
  EXPECT_EQ(m.reflection, 0.0);
  EXPECT_EQ(m.transmission, 1.0);
  const auto c = interface_coefficients(1.0, 3.0);
  EXPECT_NEAR(c.reflection, 0.25, 1e-12);
  EXPECT_NEAR(c.transmission, 0.75, 1e-12);
  EXPECT_NEAR(interface_coefficients(1.0, 3.0, TransmissionMode::Unnormalized).transmission, 9.0, 1e-12);
  EXPECT_THROW(interface_coefficients(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(interface_coefficients(1.0, -2.0), std::invalid_argument);
}

TEST(Interface, EnergyConservation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> logz(-5, 5);
  for (int i = 0; i < 10000; ++i) {
    const auto c = interface_coefficients(std::exp(logz(rng)), std::exp(logz(rng)));
    EXPECT_NEAR(c.reflection + c.transmission, 1.0, 1e-12);
  }
}

TEST(RenderGradient, AllGridFieldsOnSmallScene) {
  std::mt19937_64 rng(6);
  const std::vector<Tensor<double>> fields = {
      ulre::testing::random_matrix(4, 4, rng, 0.2, 0.5), ulre::testing::random_matrix(4, 4, rng, 0.05, 0.35),
      ulre::testing::random_matrix(4, 4, rng, 0.1, 0.4), ulre::testing::random_matrix(4, 4, rng, 0.1, 0.4)};
  const auto target = ulre::testing::random_matrix(4, 4, rng, 0.0, 0.2);
  const auto cref = ulre::testing::random_matrix(4, 4, rng, 0.0, 0.05);
  RenderSettings st;
  st.seed = 12;
  ad::LossBuilder<double> f = [&](ad::Tape<double>& tape, std::span<const ad::Var<double>> p) {
    const auto terms = render_bmode(PropertyGridVars<double>{p[0], p[1], p[2], p[3]}, st);
    const auto img = compose_final(terms.image, tape.constant(cref));
    const auto d = img - tape.constant(target);
    return ad::mean(d * d);
  };
  const auto r = ad::check_gradient<double>(f, fields, 1e-6);
  EXPECT_EQ(r.checked, 64u);
  EXPECT_LT(r.max_rel_error, 1e-5);
}
