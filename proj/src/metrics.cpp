#include "gshead/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace gshead {

double psnr(const Image& a, const Image& b) {
  const double mse = image_mse(a, b);  // throws on shape mismatch
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

static std::vector<double> luminance(const Image& img) {
  std::vector<double> y(size_t(img.height) * img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) {
      double v = img.channels >= 3 ? 0.299 * img.at(i, j, 0) + 0.587 * img.at(i, j, 1) +
                                         0.114 * img.at(i, j, 2)
                                   : img.at(i, j, 0);
      y[size_t(i * img.width + j)] = v;
    }
  return y;
}

double ssim(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw std::runtime_error("ssim: shape mismatch");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;
  if (a.height < kWin || a.width < kWin)
    throw std::runtime_error("ssim: image smaller than the 11x11 window");

  double win[kWin][kWin];
  double wsum = 0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - (kWin - 1) / 2.0, dj = j - (kWin - 1) / 2.0;
      win[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
      wsum += win[i][j];
    }
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) win[i][j] /= wsum;

  std::vector<double> ya = luminance(a), yb = luminance(b);
  const int H = a.height, W = a.width;
  double acc = 0;
  int64_t count = 0;
  for (int i = 0; i + kWin <= H; ++i)
    for (int j = 0; j + kWin <= W; ++j) {
      double mu_a = 0, mu_b = 0;
      for (int u = 0; u < kWin; ++u)
        for (int v = 0; v < kWin; ++v) {
          mu_a += win[u][v] * ya[size_t((i + u) * W + j + v)];
          mu_b += win[u][v] * yb[size_t((i + u) * W + j + v)];
        }
      double va = 0, vb = 0, cov = 0;
      for (int u = 0; u < kWin; ++u)
        for (int v = 0; v < kWin; ++v) {
          double da = ya[size_t((i + u) * W + j + v)] - mu_a;
          double db = yb[size_t((i + u) * W + j + v)] - mu_b;
          va += win[u][v] * da * da;
          vb += win[u][v] * db * db;
          cov += win[u][v] * da * db;
        }
      double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
      double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (va + vb + kC2);
      acc += num / den;
      ++count;
    }
  return acc / double(count);
}

MetricReport make_report(const std::vector<ViewMetrics>& views) {
  MetricReport r;
  r.views = views;
  const double n = double(views.size());
  if (views.empty()) return r;
  for (const auto& v : views) {
    r.psnr_mean += v.psnr;
    r.ssim_mean += v.ssim;
  }
  r.psnr_mean /= n;
  r.ssim_mean /= n;
  if (views.size() > 1) {
    double vp = 0, vs = 0;
    for (const auto& v : views) {
      vp += (v.psnr - r.psnr_mean) * (v.psnr - r.psnr_mean);
      vs += (v.ssim - r.ssim_mean) * (v.ssim - r.ssim_mean);
    }
    r.psnr_stderr = std::sqrt(vp / (n - 1.0)) / std::sqrt(n);
    r.ssim_stderr = std::sqrt(vs / (n - 1.0)) / std::sqrt(n);
  }
  return r;
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json views = nlohmann::ordered_json::array();
  for (const auto& v : report.views) {
    nlohmann::ordered_json e;
    e["id"] = v.id;
    e["psnr"] = v.psnr;
    e["ssim"] = v.ssim;
    views.push_back(std::move(e));
  }
  j["views"] = std::move(views);
  j["psnr_mean"] = report.psnr_mean;
  j["psnr_stderr"] = report.psnr_stderr;
  j["ssim_mean"] = report.ssim_mean;
  j["ssim_stderr"] = report.ssim_stderr;
  j["unavailable"] = nlohmann::ordered_json::array({"lpips", "dreamsim", "csim"});
  return j.dump(2) + "\n";
}

}  // namespace gshead
