#include "ulre/encodings.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ulre {

using ad::Tape;
using ad::Var;

void FourierConfig::validate() const {
  if (n_freq < 0 || n_freq > 16)
    throw std::invalid_argument("fourier n_freq must be in [0, 16], got " + std::to_string(n_freq));
}

std::vector<double> fourier_encode(const Vec3& x, const FourierConfig& cfg) {
  cfg.validate();
  std::vector<double> out;
  out.reserve(cfg.width());
  if (cfg.include_identity) out.insert(out.end(), {x.x(), x.y(), x.z()});
  for (int k = 0; k < cfg.n_freq; ++k) {
    const double w = std::ldexp(std::numbers::pi, k);
    for (int i = 0; i < 3; ++i) out.push_back(std::sin(w * x[i]));
    for (int i = 0; i < 3; ++i) out.push_back(std::cos(w * x[i]));
  }
  return out;
}

template <typename T>
Tensor<T> fourier_encode_rows(const Tensor<T>& xyz, const FourierConfig& cfg) {
  cfg.validate();
  if (xyz.rank() != 2 || xyz.cols() != 3) throw std::invalid_argument("fourier_encode_rows needs Nx3 input");
  const std::size_t n = xyz.rows(), w = cfg.width();
  Tensor<T> out = Tensor<T>::matrix(n, w);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t c = 0;
    if (cfg.include_identity)
      for (int i = 0; i < 3; ++i) out(r, c++) = xyz(r, i);
    for (int k = 0; k < cfg.n_freq; ++k) {
      const double f = std::ldexp(std::numbers::pi, k);
      for (int i = 0; i < 3; ++i) out(r, c++) = static_cast<T>(std::sin(f * xyz(r, i)));
      for (int i = 0; i < 3; ++i) out(r, c++) = static_cast<T>(std::cos(f * xyz(r, i)));
    }
  }
  return out;
}

template <typename T>
Var<T> fourier_encode_rows(const Var<T>& xyz, const FourierConfig& cfg) {
  cfg.validate();
  std::vector<Var<T>> parts;
  if (cfg.include_identity) parts.push_back(xyz);
  for (int k = 0; k < cfg.n_freq; ++k) {
    const Var<T> scaled = ad::scale(xyz, static_cast<T>(std::ldexp(std::numbers::pi, k)));
    parts.push_back(ad::sin(scaled));
    parts.push_back(ad::cos(scaled));
  }
  if (parts.empty()) return ad::slice(xyz, 0, xyz.value().rows(), 0, 0);
  return ad::concat_cols<T>(parts);
}

// ---------------------------------------------------------------------------
// Reflection

double kappa_from_roughness(double roughness) {
  if (!(roughness > 0)) return kKappaMax;
  return std::clamp(1.0 / roughness, kKappaMin, kKappaMax);
}

double ReflectionFrame::kappa() const { return kappa_from_roughness(roughness); }

void ReflectionFrame::validate() const {
  if (std::abs(view.norm() - 1.0) > 1e-9 || std::abs(normal.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("reflection frame vectors must be unit length");
  if (!(roughness >= 0)) throw std::invalid_argument("roughness must be non-negative");
}

Vec3 reflect(const Vec3& v, const Vec3& n) { return 2.0 * v.dot(n) * n - v; }

Vec3 perturb_normal(const Vec3& n, const Vec3& v, double roughness) {
  const Vec3 p = n + roughness * (v - n * n.dot(v));
  const double len = p.norm();
  // n is unit and the added term is orthogonal to it, so len >= 1.
  assert(len > 0);
  return p / len;
}

Vec3 specular_direction(const ReflectionFrame& frame) {
  frame.validate();
  return reflect(frame.view, perturb_normal(frame.normal, frame.view, frame.roughness));
}

// ---------------------------------------------------------------------------
// Spherical harmonics

namespace {

// Value plus gradient w.r.t. (x, y, z); enough arithmetic for polynomials.
struct Dual3 {
  double v = 0;
  double d[3] = {0, 0, 0};

  Dual3() = default;
  Dual3(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  friend Dual3 operator+(const Dual3& a, const Dual3& b) {
    Dual3 r(a.v + b.v);
    for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] + b.d[i];
    return r;
  }
  friend Dual3 operator-(const Dual3& a, const Dual3& b) {
    Dual3 r(a.v - b.v);
    for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] - b.d[i];
    return r;
  }
  friend Dual3 operator*(const Dual3& a, const Dual3& b) {
    Dual3 r(a.v * b.v);
    for (int i = 0; i < 3; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
    return r;
  }
};

double sh_norm(int l, int am) {
  return std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) *
                   std::exp(std::lgamma(l - am + 1.0) - std::lgamma(l + am + 1.0)));
}

// Y_l^m as a polynomial in (x, y, z): K * Q_l^|m|(z) * {C_m, S_|m|}(x, y),
// where C_m + i S_m = (x + i y)^m and Q_l^m = P_l^m / (1 - z^2)^(m/2).
template <typename S>
S sh_poly(int l, int m, const S& x, const S& y, const S& z) {
  const int am = std::abs(m);
  S c = 1.0, s = 0.0;
  for (int k = 0; k < am; ++k) {
    const S nc = x * c - y * s;
    const S ns = x * s + y * c;
    c = nc;
    s = ns;
  }
  double dfact = 1.0;  // (2am - 1)!!
  for (int k = 1; k <= am; ++k) dfact *= 2.0 * k - 1.0;
  S q_prev = dfact;  // Q_am^am
  S q = q_prev;
  if (l > am) {
    q = S(2.0 * am + 1.0) * z * q_prev;  // Q_{am+1}^am
    for (int k = am + 2; k <= l; ++k) {
      const S next = (S(2.0 * k - 1.0) * z * q - S(k + am - 1.0) * q_prev) * S(1.0 / (k - am));
      q_prev = q;
      q = next;
    }
  }
  const double kn = sh_norm(l, am);
  if (m == 0) return S(kn) * q;
  const double k2 = std::numbers::sqrt2 * kn;
  return S(k2) * q * (m > 0 ? c : s);
}

void check_index(int l, int m) {
  if (l < 0 || std::abs(m) > l)
    throw std::invalid_argument("invalid spherical harmonic index (l=" + std::to_string(l) +
                                ", m=" + std::to_string(m) + ")");
}

}  // namespace

double real_sph_harm(int l, int m, const Vec3& dir) {
  check_index(l, m);
  return sh_poly<double>(l, m, dir.x(), dir.y(), dir.z());
}

RheConfig RheConfig::full(int max_degree) {
  RheConfig cfg;
  cfg.max_degree = max_degree;
  for (int l = 0; l <= max_degree; ++l)
    for (int m = -l; m <= l; ++m) cfg.basis.push_back({l, m});
  cfg.validate();
  return cfg;
}

void RheConfig::validate() const {
  if (max_degree < 1) throw std::invalid_argument("RHE max_degree must be positive");
  for (std::size_t i = 0; i < basis.size(); ++i) {
    check_index(basis[i].l, basis[i].m);
    if (basis[i].l > max_degree) throw std::invalid_argument("RHE basis degree exceeds max_degree");
    for (std::size_t j = 0; j < i; ++j)
      if (basis[j] == basis[i]) throw std::invalid_argument("RHE basis has duplicate entries");
  }
}

std::vector<double> rhe_weights(double kappa, const RheConfig& cfg) {
  if (!(kappa > 0)) throw std::invalid_argument("RHE concentration must be positive");
  std::vector<double> out;
  out.reserve(cfg.basis.size());
  for (const auto& b : cfg.basis) out.push_back(std::exp(-b.l * (b.l + 1.0) / (2.0 * kappa)));
  return out;
}

std::vector<double> rhe_encode(const Vec3& r, double kappa, const RheConfig& cfg) {
  std::vector<double> out = rhe_weights(kappa, cfg);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= real_sph_harm(cfg.basis[i].l, cfg.basis[i].m, r);
  return out;
}

// ---------------------------------------------------------------------------
// Tape versions

template <typename T>
Var<T> reflect_rows(const Var<T>& v, const Var<T>& n) {
  const Var<T> vn = ad::row_sum(v * n);
  return ad::scale(n * vn, T(2)) - v;
}

template <typename T>
Var<T> perturb_normal_rows(const Var<T>& n, const Var<T>& v, const Var<T>& roughness) {
  const Var<T> nv = ad::row_sum(n * v);
  const Var<T> tangential = v - n * nv;
  static constexpr T kUp[3] = {T(0), T(0), T(1)};
  return ad::normalize_rows<T>(n + tangential * roughness, kUp);
}

template <typename T>
Var<T> sph_harm_rows(const Var<T>& dirs, const RheConfig& cfg) {
  cfg.validate();
  const Tensor<T>& d = dirs.value();
  if (d.rank() != 2 || d.cols() != 3) throw std::invalid_argument("sph_harm_rows needs Nx3 input");
  const std::size_t n = d.rows(), k = cfg.basis.size();
  Tensor<T> out = Tensor<T>::matrix(n, k);
  // Per-entry d Y / d (x, y, z), used by the backward pass.
  std::vector<double> jac(n * k * 3);
  for (std::size_t r = 0; r < n; ++r) {
    Dual3 x(d(r, 0)), y(d(r, 1)), z(d(r, 2));
    x.d[0] = 1;
    y.d[1] = 1;
    z.d[2] = 1;
    for (std::size_t c = 0; c < k; ++c) {
      const Dual3 val = sh_poly<Dual3>(cfg.basis[c].l, cfg.basis[c].m, x, y, z);
      out(r, c) = static_cast<T>(val.v);
      for (int i = 0; i < 3; ++i) jac[(r * k + c) * 3 + i] = val.d[i];
    }
  }
  return dirs.tape().record(ad::OpKind::SphHarm, {dirs.id()}, std::move(out),
                            [n, k, jac = std::move(jac)](const Tape<T>&, const typename Tape<T>::Node&,
                                                         const Tensor<T>& g, std::span<Tensor<T>*> ig) {
                              Tensor<T>& gd = *ig[0];
                              for (std::size_t r = 0; r < n; ++r)
                                for (std::size_t c = 0; c < k; ++c)
                                  for (std::size_t i = 0; i < 3; ++i)
                                    gd(r, i) += g(r, c) * static_cast<T>(jac[(r * k + c) * 3 + i]);
                            });
}

template <typename T>
Var<T> rhe_encode_rows(const Var<T>& dirs, const Var<T>& roughness, const RheConfig& cfg) {
  Tape<T>& tape = dirs.tape();
  // 1/κ with κ = clamp(1/ρ, κmin, κmax) equals clamp(ρ, 1/κmax, 1/κmin).
  const Var<T> inv_kappa =
      ad::clamp(roughness, static_cast<T>(1.0 / kKappaMax), static_cast<T>(1.0 / kKappaMin));
  Tensor<T> coeff = Tensor<T>::matrix(1, cfg.basis.size());
  for (std::size_t c = 0; c < cfg.basis.size(); ++c)
    coeff[c] = static_cast<T>(-0.5 * cfg.basis[c].l * (cfg.basis[c].l + 1.0));
  const Var<T> weights = ad::exp(ad::matmul(inv_kappa, tape.constant(std::move(coeff))));
  return weights * sph_harm_rows(dirs, cfg);
}

#define ULRE_INSTANTIATE_ENC(T)                                                        \
  template Tensor<T> fourier_encode_rows<T>(const Tensor<T>&, const FourierConfig&);   \
  template Var<T> fourier_encode_rows<T>(const Var<T>&, const FourierConfig&);         \
  template Var<T> reflect_rows<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> perturb_normal_rows<T>(const Var<T>&, const Var<T>&, const Var<T>&); \
  template Var<T> sph_harm_rows<T>(const Var<T>&, const RheConfig&);                   \
  template Var<T> rhe_encode_rows<T>(const Var<T>&, const Var<T>&, const RheConfig&);

ULRE_INSTANTIATE_ENC(float)
ULRE_INSTANTIATE_ENC(double)

}  // namespace ulre
