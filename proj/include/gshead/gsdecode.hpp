#pragma once

#include <string>

#include "gshead/camera.hpp"
#include "gshead/tensor.hpp"

namespace gshead {

// Renderable point set: 14 channels per point (3 position, 3 scale,
// 4 rotation, 1 opacity, 3 color), all in decoded form.
struct GaussianCloud {
  std::vector<double> position;  // K*3, world units
  std::vector<double> scale;     // K*3, positive
  std::vector<double> rotation;  // K*4, unit quaternions (w,x,y,z)
  std::vector<double> opacity;   // K, in (0,1)
  std::vector<double> color;     // K*3, in [0,1]

  int64_t count() const { return int64_t(opacity.size()); }
  void validate() const;
};

// The same attributes as graph tensors ({K,3}/{K,4}/{K,1}) so losses can
// reach the decoder through the renderer.
struct CloudTensors {
  Tensor position, scale, rotation, opacity, color;
  int64_t count() const { return position.shape()[0]; }
};

GaussianCloud to_cloud(const CloudTensors& t);
CloudTensors cloud_to_tensors(const GaussianCloud& cloud, DType dtype, bool requires_grad = false);

struct GsDecodeConfig {
  int patch = 8;
  int hidden = 64;  // token width
  int feat = 32;    // per-point feature width after the channel-to-space expand
  double scene_radius = 1.0;
  double offset_frac = 0.1;  // tanh offset bound as a fraction of scene_radius
  double min_scale = 1e-4;
  double init_depth = 2.7;   // softplus bias target: camera-to-origin distance
  double init_scale = 0.05;  // exp bias target
};

void init_gs_decoder(ParamStore& store, const std::string& prefix, const GsDecodeConfig& cfg,
                     Rng& rng);

// gaussian_tokens: {4*nh*nw, hidden}; rig: the four denoising views whose
// pixel rays anchor every point (depth along the ray plus a bounded offset).
CloudTensors decode_gaussians(const ParamStore& store, const std::string& prefix,
                              const GsDecodeConfig& cfg, const Tensor& gaussian_tokens,
                              const CameraRig& rig);

// Point index -> generating pixel, matching decode_gaussians' point order.
struct PointPixel {
  int view, y, x;
};
PointPixel point_pixel(int64_t point, int height, int width, int patch);

// Binary little-endian PLY with the community property names
// (x y z nx ny nz f_dc_* opacity scale_* rot_*). Values are the decoded
// attributes, so export -> import is float32-exact.
void write_ply(const std::string& path, const GaussianCloud& cloud);
GaussianCloud read_ply(const std::string& path);

}  // namespace gshead
