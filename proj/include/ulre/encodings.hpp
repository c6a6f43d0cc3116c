#pragma once

// Input encodings for the two networks:
//   - Fourier features of normalized positions,
//   - mirror reflection about a roughness-perturbed normal,
//   - Reflective Harmonic Encoding: real spherical harmonics of the
//     reflection direction, attenuated per degree by a vMF concentration.
//
// Scalar versions operate on Vec3; the *_rows versions build the same
// computation on an autodiff tape for N directions at once.

#include <span>
#include <vector>

#include "ulre/autodiff.hpp"
#include "ulre/geometry.hpp"

namespace ulre {

struct FourierConfig {
  int n_freq = 6;
  bool include_identity = true;

  void validate() const;
  std::size_t width() const { return static_cast<std::size_t>(6 * n_freq + (include_identity ? 3 : 0)); }
};

/// Layout: [x, y, z] if flagged, then per octave k:
/// sin(2^k π x_i) for i = 0..2 followed by cos(2^k π x_i) for i = 0..2.
std::vector<double> fourier_encode(const Vec3& x, const FourierConfig& cfg);

/// Row-wise Fourier encoding of an Nx3 tensor (no gradient).
template <typename T>
Tensor<T> fourier_encode_rows(const Tensor<T>& xyz, const FourierConfig& cfg);

/// Differentiable variant with the same layout.
template <typename T>
ad::Var<T> fourier_encode_rows(const ad::Var<T>& xyz, const FourierConfig& cfg);

struct ShIndex {
  int l = 0;
  int m = 0;
  friend bool operator==(const ShIndex&, const ShIndex&) = default;
};

struct RheConfig {
  int max_degree = 4;
  std::vector<ShIndex> basis;

  /// All (l, m) with l <= max_degree, ordered by l then m; (L+1)^2 entries.
  static RheConfig full(int max_degree);
  void validate() const;
  std::size_t width() const { return basis.size(); }
};

struct ReflectionFrame {
  Vec3 view;          // outgoing direction, -d
  Vec3 normal;
  double roughness = 0.0;

  /// 1/roughness clamped to [kKappaMin, kKappaMax].
  double kappa() const;
  void validate() const;
};

inline constexpr double kKappaMin = 1e-4;
inline constexpr double kKappaMax = 1e12;

double kappa_from_roughness(double roughness);

/// 2 (v·n) n - v.
Vec3 reflect(const Vec3& v, const Vec3& n);

/// n + δ (v - n (n·v)), renormalized.
Vec3 perturb_normal(const Vec3& n, const Vec3& v, double roughness);

Vec3 specular_direction(const ReflectionFrame& frame);

/// Real orthonormal spherical harmonic without the Condon-Shortley phase.
/// Throws std::invalid_argument for l < 0 or |m| > l.
double real_sph_harm(int l, int m, const Vec3& dir);

/// A_l(κ) = exp(-l(l+1) / (2κ)) per basis entry. Throws for κ <= 0.
std::vector<double> rhe_weights(double kappa, const RheConfig& cfg);

std::vector<double> rhe_encode(const Vec3& r, double kappa, const RheConfig& cfg);

// --- tape versions --------------------------------------------------------

/// Row-wise 2 (v·n) n - v for Nx3 inputs.
template <typename T>
ad::Var<T> reflect_rows(const ad::Var<T>& v, const ad::Var<T>& n);

/// Row-wise perturbed unit normal; roughness is Nx1.
template <typename T>
ad::Var<T> perturb_normal_rows(const ad::Var<T>& n, const ad::Var<T>& v, const ad::Var<T>& roughness);

/// Nx3 directions -> NxK spherical-harmonic values for cfg.basis.
template <typename T>
ad::Var<T> sph_harm_rows(const ad::Var<T>& dirs, const RheConfig& cfg);

/// Nx3 directions, Nx1 roughness -> NxK RHE features with κ = 1/roughness
/// clamped like kappa_from_roughness().
template <typename T>
ad::Var<T> rhe_encode_rows(const ad::Var<T>& dirs, const ad::Var<T>& roughness, const RheConfig& cfg);

}  // namespace ulre
