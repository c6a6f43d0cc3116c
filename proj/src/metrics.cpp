#include "ulre/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace ulre {

namespace {

void check_pair(const Image& a, const Image& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("image shape mismatch: " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  if (a.empty()) throw std::invalid_argument("empty image");
}

constexpr double c1() { return (kSsimK1 * 1.0) * (kSsimK1 * 1.0); }
constexpr double c2() { return (kSsimK2 * 1.0) * (kSsimK2 * 1.0); }

}  // namespace

double mse(const Image& a, const Image& b) {
  check_pair(a, b);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
  if (m < 1e-12) return kPsnrCap;
  return 10.0 * std::log10(1.0 / m);
}

double psnr(const Image& a, const Image& b) { return psnr_from_mse(mse(a, b)); }

template <typename T>
Tensor<T> ssim_window() {
  Tensor<T> w = Tensor<T>::matrix(kSsimWindow, kSsimWindow);
  const int h = kSsimWindow / 2;
  double total = 0;
  for (int i = -h; i <= h; ++i)
    for (int j = -h; j <= h; ++j) total += std::exp(-(i * i + j * j) / (2.0 * kSsimSigma * kSsimSigma));
  for (int i = -h; i <= h; ++i)
    for (int j = -h; j <= h; ++j)
      w(static_cast<std::size_t>(i + h), static_cast<std::size_t>(j + h)) =
          static_cast<T>(std::exp(-(i * i + j * j) / (2.0 * kSsimSigma * kSsimSigma)) / total);
  return w;
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b);
  const std::size_t H = a.rows(), W = a.cols();
  if (a.rank() != 2 || H < static_cast<std::size_t>(kSsimWindow) || W < static_cast<std::size_t>(kSsimWindow))
    throw std::invalid_argument("SSIM needs images of at least 11x11, got " + shape_string(a.shape()));
  const Tensor<double> w = ssim_window<double>();
  const std::size_t K = kSsimWindow;
  double total = 0;
  for (std::size_t i = 0; i + K <= H; ++i) {
    for (std::size_t j = 0; j + K <= W; ++j) {
      double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
      for (std::size_t p = 0; p < K; ++p)
        for (std::size_t q = 0; q < K; ++q) {
          const double wv = w(p, q);
          const double x = a(i + p, j + q), y = b(i + p, j + q);
          ma += wv * x;
          mb += wv * y;
          aa += wv * x * x;
          bb += wv * y * y;
          ab += wv * x * y;
        }
      const double va = aa - ma * ma, vb = bb - mb * mb, cov = ab - ma * mb;
      total += ((2 * ma * mb + c1()) * (2 * cov + c2())) / ((ma * ma + mb * mb + c1()) * (va + vb + c2()));
    }
  }
  return total / static_cast<double>((H - K + 1) * (W - K + 1));
}

template <typename T>
ad::Var<T> ssim(const ad::Var<T>& a, const ad::Var<T>& b) {
  const std::size_t H = a.value().rows(), W = a.value().cols();
  if (H < static_cast<std::size_t>(kSsimWindow) || W < static_cast<std::size_t>(kSsimWindow))
    throw std::invalid_argument("SSIM needs images of at least 11x11");
  auto& tape = a.tape();
  const auto win = tape.constant(ssim_window<T>());
  const std::size_t h = kSsimWindow / 2, vr = H - 2 * h, vc = W - 2 * h;
  // Same-size convolution, cropped to the positions where the window fits.
  auto filt = [&](const ad::Var<T>& x) { return ad::slice(ad::conv2d(x, win), h, vr, h, vc); };
  const auto ma = filt(a), mb = filt(b);
  const auto va = filt(a * a) - ma * ma;
  const auto vb = filt(b * b) - mb * mb;
  const auto cov = filt(a * b) - ma * mb;
  const T k1 = static_cast<T>(c1()), k2 = static_cast<T>(c2());
  const auto num = (ad::scale(ma * mb, T(2)) + k1) * (ad::scale(cov, T(2)) + k2);
  const auto den = (ma * ma + mb * mb + k1) * (va + vb + k2);
  return ad::mean(num / den);
}

MetricReport evaluate(const Image& pred, const Image& target) {
  MetricReport r;
  r.mse = mse(pred, target);
  r.psnr = psnr_from_mse(r.mse);
  r.ssim = ssim(pred, target);
  return r;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricReport>& rows) {
  os << "frame_index,mse,psnr,ssim\n";
  MetricReport mean;
  os << std::fixed;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << i << ',' << std::setprecision(8) << r.mse << ',' << std::setprecision(2) << r.psnr << ','
       << std::setprecision(6) << r.ssim << '\n';
    mean.mse += r.mse;
    mean.psnr += r.psnr;
    mean.ssim += r.ssim;
  }
  if (!rows.empty()) {
    const auto n = static_cast<double>(rows.size());
    os << "mean," << std::setprecision(8) << mean.mse / n << ',' << std::setprecision(2) << mean.psnr / n << ','
       << std::setprecision(6) << mean.ssim / n << '\n';
  }
  os.unsetf(std::ios::fixed);
}

template Tensor<float> ssim_window<float>();
template Tensor<double> ssim_window<double>();
template ad::Var<float> ssim<float>(const ad::Var<float>&, const ad::Var<float>&);
template ad::Var<double> ssim<double>(const ad::Var<double>&, const ad::Var<double>&);

}  // namespace ulre
