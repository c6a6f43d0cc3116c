#pragma once

// Differentiable ultrasound volume rendering on the (axial sample, scanline)
// plane of one frame. Row index = depth sample t, column index = scanline r.
//
//   I(r,t) = I0 * exp(-sum_{τ<t} α f Δt) * prod_{n<t} (1 - β(r,n))
//   R      = (I ⊙ β) ⊛ PSF
//   S      = η(ρ_s, u) ⊙ φ        (frozen per-pixel uniforms u)
//   B      = (I ⊙ S) ⊛ PSF
//   C_render = R + B,  C_final = clamp(C_render + C_ref, 0, 1)

#include <cstdint>
#include <string>
#include <utility>

#include "ulre/autodiff.hpp"
#include "ulre/geometry.hpp"

namespace ulre {

struct PsfConfig {
  double sigma_axial = 1.5;    // samples
  double sigma_lateral = 1.0;  // scanlines
  double frequency = 0.15;     // cycles per axial sample
  double truncation = 3.0;     // half-width in σ units

  void validate() const;
};

/// Cosine-modulated Gaussian on the integer lattice, rows = axial offset,
/// columns = lateral offset, centre at (rows/2, cols/2). Not normalized.
template <typename T>
Tensor<T> psf_kernel(const PsfConfig& cfg);

/// Plain per-pixel medium maps (HxW each).
struct PropertyGrid {
  Tensor<double> alpha, beta, rho, phi;

  void validate() const;
  std::size_t rows() const { return alpha.rows(); }
  std::size_t cols() const { return alpha.cols(); }
};

template <typename T>
struct PropertyGridVars {
  ad::Var<T> alpha, beta, rho, phi;
};

template <typename T>
PropertyGridVars<T> bind_grid(ad::Tape<T>& tape, const PropertyGrid& g, bool trainable);

struct RenderSettings {
  PsfConfig psf;
  double frequency = 0.15;      // for attenuation, cycles per sample
  double axial_spacing = 0.5;   // Δt
  std::uint64_t seed = 0;       // frozen scatter noise
  double nu = 4.0;              // Kumaraswamy concentration
  double intensity = 1.0;       // I0

  /// Settings consistent with a scan geometry (frequency and Δt).
  static RenderSettings from_geometry(const ScanGeometry& geom, const PsfConfig& psf, std::uint64_t seed,
                                      double nu = 4.0, double intensity = 1.0);
};

template <typename T>
ad::Var<T> residual_energy(const ad::Var<T>& alpha, const ad::Var<T>& beta, double frequency, double dt,
                           double intensity);

template <typename T>
ad::Var<T> reflected_energy(const ad::Var<T>& energy, const ad::Var<T>& beta, const ad::Var<T>& kernel);

/// Counter-based uniform in (0, 1) for pixel (t, r); identical across calls.
double frozen_uniform(std::uint64_t seed, std::size_t t, std::size_t r);

template <typename T>
Tensor<T> frozen_uniforms(std::uint64_t seed, std::size_t rows, std::size_t cols);

/// Kumaraswamy inverse CDF η = (1 - (1-u)^(1/b))^(1/a) with
/// a = max(ρ ν, 1e-4), b = max((1-ρ) ν, 1e-4). Differentiable in ρ.
template <typename T>
ad::Var<T> kumaraswamy_sample(const ad::Var<T>& rho, const Tensor<T>& uniforms, double nu);
double kumaraswamy_sample(double rho, double u, double nu);

template <typename T>
ad::Var<T> scatter_field(const ad::Var<T>& rho, const ad::Var<T>& phi, std::uint64_t seed, double nu);

template <typename T>
ad::Var<T> backscatter(const ad::Var<T>& energy, const ad::Var<T>& scatter, const ad::Var<T>& kernel);

template <typename T>
struct RenderTerms {
  ad::Var<T> energy;     // I
  ad::Var<T> reflected;  // R
  ad::Var<T> scatter;    // S
  ad::Var<T> backscattered;  // B
  ad::Var<T> image;      // R + B
};

template <typename T>
RenderTerms<T> render_bmode(const PropertyGridVars<T>& grid, const RenderSettings& settings);

/// clamp(render + ref, 0, 1).
template <typename T>
ad::Var<T> compose_final(const ad::Var<T>& render, const ad::Var<T>& reflection);

/// Convenience: full forward render of a plain grid, C_ref = 0.
Tensor<double> render_image(const PropertyGrid& grid, const RenderSettings& settings);

enum class TransmissionMode { EnergyConserving, Unnormalized };

struct InterfaceCoefficients {
  double reflection;
  double transmission;
};

/// R = ((Z2-Z1)/(Z2+Z1))^2. EnergyConserving: T = 4 Z1 Z2 / (Z1+Z2)^2.
/// Unnormalized: T = (4 Z1 Z2 / (Z1+Z2))^2, which is not bounded by 1.
InterfaceCoefficients interface_coefficients(double z1, double z2,
                                             TransmissionMode mode = TransmissionMode::EnergyConserving);

}  // namespace ulre
