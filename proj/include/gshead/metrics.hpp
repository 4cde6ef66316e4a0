#pragma once

#include <string>
#include <vector>

#include "gshead/image.hpp"

namespace gshead {

inline constexpr double kPsnrCap = 99.0;

// -10 log10(MSE) over all channels, capped at 99 dB.
double psnr(const Image& a, const Image& b);

// Structural similarity on luminance, 11x11 Gaussian window (sigma 1.5),
// C1=(0.01)^2, C2=(0.03)^2 on unit range, valid-region pooling.
double ssim(const Image& a, const Image& b);

struct ViewMetrics {
  int id = 0;
  double psnr = 0;
  double ssim = 0;
};

struct MetricReport {
  std::vector<ViewMetrics> views;
  double psnr_mean = 0, psnr_stderr = 0;
  double ssim_mean = 0, ssim_stderr = 0;
};

MetricReport make_report(const std::vector<ViewMetrics>& views);

// Per-view values plus mean and standard error; neural perceptual metrics
// are listed as unavailable.
std::string report_to_json(const MetricReport& report);

}  // namespace gshead
