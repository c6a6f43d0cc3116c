#include "ulre/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ulre {

using ad::Tape;
using ad::Var;

void PsfConfig::validate() const {
  if (!(sigma_axial > 0) || !(sigma_lateral > 0)) throw std::invalid_argument("PSF sigmas must be positive");
  if (!(truncation >= 1)) throw std::invalid_argument("PSF truncation must be >= 1");
  if (!(frequency >= 0)) throw std::invalid_argument("PSF frequency must be non-negative");
}

template <typename T>
Tensor<T> psf_kernel(const PsfConfig& cfg) {
  cfg.validate();
  const auto hx = static_cast<long>(std::ceil(cfg.truncation * cfg.sigma_axial));
  const auto hy = static_cast<long>(std::ceil(cfg.truncation * cfg.sigma_lateral));
  Tensor<T> k = Tensor<T>::matrix(static_cast<std::size_t>(2 * hx + 1), static_cast<std::size_t>(2 * hy + 1));
  for (long x = -hx; x <= hx; ++x) {
    for (long y = -hy; y <= hy; ++y) {
      const double gx = static_cast<double>(x) / cfg.sigma_axial;
      const double gy = static_cast<double>(y) / cfg.sigma_lateral;
      const double v = std::exp(-0.5 * (gx * gx + gy * gy)) *
                       std::cos(2.0 * std::numbers::pi * cfg.frequency * static_cast<double>(x));
      k(static_cast<std::size_t>(x + hx), static_cast<std::size_t>(y + hy)) = static_cast<T>(v);
    }
  }
  return k;
}

void PropertyGrid::validate() const {
  if (alpha.rank() != 2 || !alpha.same_shape(beta) || !alpha.same_shape(rho) || !alpha.same_shape(phi))
    throw std::invalid_argument("property grid fields must share one HxW shape");
  for (double a : alpha.values())
    if (!(a >= 0)) throw std::invalid_argument("attenuation must be non-negative");
  for (const Tensor<double>* t : {&beta, &rho, &phi})
    for (double v : t->values())
      if (!(v >= 0 && v <= 1)) throw std::invalid_argument("β, ρ_s, φ must lie in [0, 1]");
}

template <typename T>
PropertyGridVars<T> bind_grid(Tape<T>& tape, const PropertyGrid& g, bool trainable) {
  g.validate();
  auto put = [&](const Tensor<double>& t) {
    return trainable ? tape.parameter(t.cast<T>()) : tape.constant(t.cast<T>());
  };
  return {put(g.alpha), put(g.beta), put(g.rho), put(g.phi)};
}

RenderSettings RenderSettings::from_geometry(const ScanGeometry& geom, const PsfConfig& psf, std::uint64_t seed,
                                             double nu, double intensity) {
  RenderSettings s;
  s.psf = psf;
  s.frequency = geom.frequency;
  s.axial_spacing = geom.axial_spacing;
  s.seed = seed;
  s.nu = nu;
  s.intensity = intensity;
  return s;
}

template <typename T>
Var<T> residual_energy(const Var<T>& alpha, const Var<T>& beta, double frequency, double dt, double intensity) {
  if (!(intensity > 0)) throw std::invalid_argument("source intensity must be positive");
  const Var<T> depth = ad::cumsum(alpha, true);
  const Var<T> attenuation = ad::exp(ad::scale(depth, static_cast<T>(-frequency * dt)));
  const Var<T> transmission = ad::cumprod(T(1) - beta, true);
  return ad::scale(attenuation * transmission, static_cast<T>(intensity));
}

template <typename T>
Var<T> reflected_energy(const Var<T>& energy, const Var<T>& beta, const Var<T>& kernel) {
  return ad::conv2d(energy * beta, kernel);
}

namespace {
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
}  // namespace

double frozen_uniform(std::uint64_t seed, std::size_t t, std::size_t r) {
  const std::uint64_t key = (static_cast<std::uint64_t>(t) << 32) ^ static_cast<std::uint64_t>(r);
  const std::uint64_t h = mix64(mix64(seed) ^ mix64(key + 0x632BE59BD9B4E019ull));
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

template <typename T>
Tensor<T> frozen_uniforms(std::uint64_t seed, std::size_t rows, std::size_t cols) {
  Tensor<T> u = Tensor<T>::matrix(rows, cols);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t r = 0; r < cols; ++r) u(t, r) = static_cast<T>(frozen_uniform(seed, t, r));
  return u;
}

namespace {

constexpr double kShapeFloor = 1e-4;

struct KumaraswamyEval {
  double eta;
  double deta_drho;
};

KumaraswamyEval kumaraswamy_eval(double rho, double u, double nu) {
  const double a_raw = rho * nu, b_raw = (1.0 - rho) * nu;
  const double a = std::max(a_raw, kShapeFloor);
  const double b = std::max(b_raw, kShapeFloor);
  u = std::clamp(u, 0x1.0p-54, 1.0 - 0x1.0p-54);
  const double q = std::log1p(-u);   // log(1 - u) < 0
  const double e = std::exp(q / b);  // (1 - u)^(1/b)
  const double s = -std::expm1(q / b);
  const double log_s = std::log(s);
  const double eta = std::exp(log_s / a);
  const double deta_da = -eta * log_s / (a * a);
  const double deta_ds = eta / (a * s);
  const double ds_db = e * q / (b * b);
  const double da = a_raw > kShapeFloor ? nu : 0.0;
  const double db = b_raw > kShapeFloor ? -nu : 0.0;
  return {eta, deta_da * da + deta_ds * ds_db * db};
}

}  // namespace

double kumaraswamy_sample(double rho, double u, double nu) { return kumaraswamy_eval(rho, u, nu).eta; }

template <typename T>
Var<T> kumaraswamy_sample(const Var<T>& rho, const Tensor<T>& uniforms, double nu) {
  if (!(nu > 0)) throw std::invalid_argument("scatter concentration must be positive");
  const Tensor<T>& r = rho.value();
  if (r.rows() != uniforms.rows() || r.cols() != uniforms.cols())
    throw std::invalid_argument("uniform field shape does not match scatter density");
  Tensor<T> out(r.shape());
  std::vector<T> slope(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const auto k = kumaraswamy_eval(static_cast<double>(r[i]), static_cast<double>(uniforms[i]), nu);
    out[i] = static_cast<T>(k.eta);
    slope[i] = static_cast<T>(k.deta_drho);
  }
  return rho.tape().record(ad::OpKind::Kumaraswamy, {rho.id()}, std::move(out),
                           [slope = std::move(slope)](const Tape<T>&, const typename Tape<T>::Node&,
                                                      const Tensor<T>& g, std::span<Tensor<T>*> ig) {
                             auto& gx = ig[0]->storage();
                             for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * slope[i];
                           });
}

template <typename T>
Var<T> scatter_field(const Var<T>& rho, const Var<T>& phi, std::uint64_t seed, double nu) {
  const Tensor<T> u = frozen_uniforms<T>(seed, rho.value().rows(), rho.value().cols());
  return kumaraswamy_sample(rho, u, nu) * phi;
}

template <typename T>
Var<T> backscatter(const Var<T>& energy, const Var<T>& scatter, const Var<T>& kernel) {
  return ad::conv2d(energy * scatter, kernel);
}

template <typename T>
RenderTerms<T> render_bmode(const PropertyGridVars<T>& grid, const RenderSettings& settings) {
  Tape<T>& tape = grid.alpha.tape();
  const Var<T> kernel = tape.constant(psf_kernel<T>(settings.psf));
  RenderTerms<T> t;
  t.energy = residual_energy(grid.alpha, grid.beta, settings.frequency, settings.axial_spacing, settings.intensity);
  t.reflected = reflected_energy(t.energy, grid.beta, kernel);
  t.scatter = scatter_field(grid.rho, grid.phi, settings.seed, settings.nu);
  t.backscattered = backscatter(t.energy, t.scatter, kernel);
  t.image = t.reflected + t.backscattered;
  return t;
}

template <typename T>
Var<T> compose_final(const Var<T>& render, const Var<T>& reflection) {
  return ad::clamp(render + reflection, T(0), T(1));
}

Tensor<double> render_image(const PropertyGrid& grid, const RenderSettings& settings) {
  Tape<double> tape;
  const auto vars = bind_grid(tape, grid, false);
  const auto terms = render_bmode(vars, settings);
  const auto zero = tape.constant(Tensor<double>(terms.image.shape(), 0.0));
  return compose_final(terms.image, zero).value();
}

InterfaceCoefficients interface_coefficients(double z1, double z2, TransmissionMode mode) {
  if (!(z1 > 0) || !(z2 > 0)) throw std::invalid_argument("acoustic impedances must be positive");
  const double r = (z2 - z1) / (z2 + z1);
  const double sum = z1 + z2;
  const double t = mode == TransmissionMode::EnergyConserving ? 4.0 * z1 * z2 / (sum * sum)
                                                              : std::pow(4.0 * z1 * z2 / sum, 2);
  return {r * r, t};
}

#define ULRE_INSTANTIATE_RENDER(T)                                                                  \
  template Tensor<T> psf_kernel<T>(const PsfConfig&);                                               \
  template PropertyGridVars<T> bind_grid<T>(Tape<T>&, const PropertyGrid&, bool);                   \
  template Var<T> residual_energy<T>(const Var<T>&, const Var<T>&, double, double, double);         \
  template Var<T> reflected_energy<T>(const Var<T>&, const Var<T>&, const Var<T>&);                 \
  template Tensor<T> frozen_uniforms<T>(std::uint64_t, std::size_t, std::size_t);                   \
  template Var<T> kumaraswamy_sample<T>(const Var<T>&, const Tensor<T>&, double);                   \
  template Var<T> scatter_field<T>(const Var<T>&, const Var<T>&, std::uint64_t, double);            \
  template Var<T> backscatter<T>(const Var<T>&, const Var<T>&, const Var<T>&);                      \
  template RenderTerms<T> render_bmode<T>(const PropertyGridVars<T>&, const RenderSettings&);       \
  template Var<T> compose_final<T>(const Var<T>&, const Var<T>&);

ULRE_INSTANTIATE_RENDER(float)
ULRE_INSTANTIATE_RENDER(double)

}  // namespace ulre
