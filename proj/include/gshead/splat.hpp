#pragma once

#include "gshead/camera.hpp"
#include "gshead/gsdecode.hpp"
#include "gshead/image.hpp"
#include "gshead/tensor.hpp"

namespace gshead {

struct RenderSettings {
  Vec3 background{1, 1, 1};
  int tile = 16;
  double cutoff = 3.0;         // Mahalanobis radius shared by binning and evaluation
  double alpha_min = 1.0 / 255.0;
  double alpha_max = 0.999;
  double eps2d = 0.3;          // screen-space covariance dilation (pixels^2)
  double z_near = 0.01;
  double t_min = 1e-4;         // transmittance early-out
};

// EWA projection of one Gaussian. Covariance is [[cov_a, cov_b], [cov_b, cov_c]].
struct ProjectedGaussian {
  double mean_x = 0, mean_y = 0;  // pixel coordinates
  double cov_a = 0, cov_b = 0, cov_c = 0;
  double depth = 0;               // camera-space z
  double opacity = 0;
  double red = 0, green = 0, blue = 0;
  int32_t index = 0;              // original point index
};

// Points behind the camera are culled.
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const Camera& cam,
                                       const RenderSettings& settings = {});

// Brute force: every pixel tests every Gaussian (with the shared cutoff).
Image render_oracle(const std::vector<ProjectedGaussian>& projected, int height, int width,
                    const RenderSettings& settings = {});

// Tile-binned fast path; pixel-equivalent to the oracle.
Image render_tiled(const std::vector<ProjectedGaussian>& projected, int height, int width,
                   const RenderSettings& settings = {});

// project + tiled compositing in one call.
Image render_image(const GaussianCloud& cloud, const Camera& cam,
                   const RenderSettings& settings = {});

// Differentiable render as a graph op: {H, W, 3} with gradients for all five
// attribute tensors. Sorted order is treated as locally constant.
Tensor render_cloud(const CloudTensors& cloud, const Camera& cam,
                    const RenderSettings& settings = {}, bool tiled = true);

}  // namespace gshead
