#pragma once

#include <string>

#include "gshead/camera.hpp"
#include "gshead/dit.hpp"
#include "gshead/flow.hpp"
#include "gshead/gsdecode.hpp"
#include "gshead/imgdecode.hpp"
#include "gshead/splat.hpp"
#include "gshead/tokenize.hpp"

namespace gshead {

struct ModelConfig {
  int height = 64, width = 64;
  int patch = 8;
  int hidden = 64;
  int depth = 2;
  int heads = 4;
  int mlp_ratio = 4;
  int t_embed_dim = 64;
  int decode_feat = 32;
  double scene_radius = 1.0;
  double offset_frac = 0.1;
  double rig_radius = 2.7;
  double fov_y_deg = 50.0;
  bool image_decoder = true;      // the training-only view-decoding branch
  bool learned_pos_embed = false;
  std::string dtype = "f32";
  uint64_t seed = 0;

  DType dtype_enum() const;
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);

  int tokens_per_view() const { return (height / patch) * (width / patch); }
  int sequence_length() const { return 5 * tokens_per_view(); }
};

// The complete network: tokenizers, DiT backbone, Gaussian decoder, and the
// optional image-decoding branch, over one parameter store.
class HeadModel {
 public:
  explicit HeadModel(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // The four denoising views (front/left/right/back).
  CameraRig canonical_rig() const;
  Camera front_camera() const;

  ConditionedImage condition(const Image& portrait, const Camera& cam) const;

  // g_t + t + conditioning -> denoised Gaussian tokens {4*nh*nw, hidden}.
  Tensor forward_tokens(const GaussianState& g, double t, const ConditionedImage& cond) const;

  CloudTensors decode_cloud_tokens(const Tensor& gaussian_tokens) const;
  Tensor decode_view_images(const Tensor& gaussian_tokens) const;  // {4,H,W,3}

  bool has_image_decoder() const;
  void strip_image_decoder();

  struct Counts {
    int64_t model_forward = 0;
    int64_t image_decode = 0;
  };
  const Counts& counts() const { return counts_; }
  void reset_counts() { counts_ = {}; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  mutable Counts counts_;
};

struct InferenceResult {
  GaussianCloud cloud;
  Tensor gaussian_tokens;
  double model_seconds = 0;
  int64_t model_calls = 0;
};

// One-step reconstruction: a single forward pass from seeded noise, decoded
// straight to the point cloud. The image-decoding branch is never touched.
InferenceResult infer_onestep(const HeadModel& model, const Image& portrait,
                              const Camera& portrait_cam, uint64_t seed);

// Euler sampling with `steps` model evaluations; steps == 1 is exactly the
// one-step path. Intermediate states need the image-decoder branch to map
// tokens back to view signals.
InferenceResult denoise_multistep(const HeadModel& model, const Image& portrait,
                                  const Camera& portrait_cam, int steps, uint64_t seed);

}  // namespace gshead
