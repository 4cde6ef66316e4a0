#pragma once

#include <functional>
#include <span>

#include "gshead/camera.hpp"
#include "gshead/image.hpp"
#include "gshead/rng.hpp"

namespace gshead {

// View-stacked denoising state, {views, H, W, 9} with channels 0-2 holding
// the noise/signal and 3-8 the view's Plucker rays. The ray channels are
// deterministic conditioning: never noised, never interpolated.
struct GaussianState {
  int views = 0, height = 0, width = 0;
  std::vector<double> data;

  static constexpr int kChannels = 9;
  static constexpr int kSignalChannels = 3;

  double at(int v, int y, int x, int c) const {
    return data[size_t((((v * height) + y) * width + x) * kChannels + c)];
  }
  double& at(int v, int y, int x, int c) {
    return data[size_t((((v * height) + y) * width + x) * kChannels + c)];
  }
  size_t size() const { return data.size(); }
};

// Zero signal channels, ray channels from the rig.
GaussianState state_with_rays(const CameraRig& rig);

// g0: standard-normal signal channels under the seed.
GaussianState noise_state(const CameraRig& rig, uint64_t seed);

// g1: clean signal channels taken from per-view images.
GaussianState state_from_images(std::span<const Image> views, const CameraRig& rig);

struct FlowSchedule {
  int steps = 1;  // N >= 1
  double t(int k) const { return double(k) / double(steps); }
  double dt() const { return 1.0 / double(steps); }
};

// g_t = (1-t) g0 + t g1 on signal channels; ray channels must match.
GaussianState interpolate(const GaussianState& g0, const GaussianState& g1, double t);

// v_t = (g1_hat - g_t) / (1 - t) on signal channels; requires t in [0,1).
GaussianState velocity(const GaussianState& g1_hat, const GaussianState& g_t, double t);

// g_t + ratio * (g1_hat - g_t) on signal channels; ratio 1 assigns g1_hat
// exactly (the terminal Euler step).
GaussianState blend_toward(const GaussianState& g_t, const GaussianState& g1_hat, double ratio);

// Clean-state predictor: (g_t, t) -> g1_hat.
using StateModel = std::function<GaussianState(const GaussianState&, double)>;

GaussianState sample_multistep(const GaussianState& g0, int steps, const StateModel& model);
GaussianState sample_onestep(const GaussianState& g0, const StateModel& model);

enum class FlowMode { OneStep, MultiStep };

struct TrainingPair {
  GaussianState g_t;
  GaussianState g_one;
  double t = 0;
};

// One-step mode pins t = 0; multi-step samples t uniformly from [0,1).
TrainingPair make_training_pair(std::span<const Image> clean_views, const CameraRig& rig,
                                uint64_t noise_seed, FlowMode mode, Rng& time_rng);

}  // namespace gshead
