#pragma once

#include <iosfwd>
#include <vector>

#include "ulre/autodiff.hpp"

namespace ulre {

using Image = Tensor<double>;

struct MetricReport {
  double mse = 0;
  double psnr = 0;
  double ssim = 0;
};

inline constexpr double kPsnrCap = 120.0;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

double mse(const Image& a, const Image& b);
/// 10 log10(1 / mse) for unit peak; kPsnrCap when mse < 1e-12.
double psnr(const Image& a, const Image& b);
double psnr_from_mse(double mse);
/// Mean SSIM over all window positions fully inside the image
/// (11x11 Gaussian, σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1).
double ssim(const Image& a, const Image& b);

MetricReport evaluate(const Image& pred, const Image& target);

/// Normalized 11x11 Gaussian window.
template <typename T>
Tensor<T> ssim_window();

/// Tape version of ssim() with identical window placement.
template <typename T>
ad::Var<T> ssim(const ad::Var<T>& a, const ad::Var<T>& b);

/// Writes "frame_index,mse,psnr,ssim" rows followed by a "mean,..." row.
void write_metrics_csv(std::ostream& os, const std::vector<MetricReport>& rows);

}  // namespace ulre
