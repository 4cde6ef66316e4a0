#include "gshead/flow.hpp"

#include <cmath>
#include <stdexcept>

namespace gshead {

GaussianState state_with_rays(const CameraRig& rig) {
  if (rig.cameras.empty()) throw std::runtime_error("gaussian state: empty rig");
  GaussianState s;
  s.views = int(rig.cameras.size());
  s.height = rig.cameras[0].height;
  s.width = rig.cameras[0].width;
  s.data.assign(size_t(s.views) * s.height * s.width * GaussianState::kChannels, 0.0);
  for (int v = 0; v < s.views; ++v) {
    const Camera& cam = rig.cameras[size_t(v)];
    if (cam.height != s.height || cam.width != s.width)
      throw std::runtime_error("gaussian state: rig cameras disagree on extents");
    PluckerMap map = plucker_embed(cam);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        for (int c = 0; c < 6; ++c) s.at(v, y, x, 3 + c) = map.at(c, y, x);
  }
  return s;
}

GaussianState noise_state(const CameraRig& rig, uint64_t seed) {
  GaussianState s = state_with_rays(rig);
  Rng rng(seed);
  for (int v = 0; v < s.views; ++v)
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        for (int c = 0; c < GaussianState::kSignalChannels; ++c) s.at(v, y, x, c) = rng.normal();
  return s;
}

GaussianState state_from_images(std::span<const Image> views, const CameraRig& rig) {
  if (views.size() != rig.cameras.size())
    throw std::runtime_error("gaussian state: view image count " + std::to_string(views.size()) +
                             " does not match rig size " + std::to_string(rig.cameras.size()));
  GaussianState s = state_with_rays(rig);
  for (int v = 0; v < s.views; ++v) {
    const Image& img = views[size_t(v)];
    if (img.height != s.height || img.width != s.width || img.channels != 3)
      throw std::runtime_error("gaussian state: view image extents mismatch");
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        for (int c = 0; c < 3; ++c) s.at(v, y, x, c) = img.at(y, x, c);
  }
  return s;
}

static void check_same_rays(const GaussianState& a, const GaussianState& b, const char* who) {
  if (a.views != b.views || a.height != b.height || a.width != b.width)
    throw std::runtime_error(std::string(who) + ": state extents differ");
  for (int v = 0; v < a.views; ++v)
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x)
        for (int c = 3; c < GaussianState::kChannels; ++c)
          if (a.at(v, y, x, c) != b.at(v, y, x, c))
            throw std::runtime_error(std::string(who) + ": Plucker channels differ between states");
}

GaussianState interpolate(const GaussianState& g0, const GaussianState& g1, double t) {
  if (t < 0.0 || t > 1.0)
    throw std::runtime_error("interpolate: t=" + std::to_string(t) + " outside [0,1]");
  check_same_rays(g0, g1, "interpolate");
  GaussianState out = g0;
  for (int v = 0; v < out.views; ++v)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < GaussianState::kSignalChannels; ++c)
          out.at(v, y, x, c) = (1.0 - t) * g0.at(v, y, x, c) + t * g1.at(v, y, x, c);
  return out;
}

GaussianState velocity(const GaussianState& g1_hat, const GaussianState& g_t, double t) {
  if (t < 0.0 || t >= 1.0)
    throw std::runtime_error("velocity: t=" + std::to_string(t) + " outside [0,1)");
  check_same_rays(g1_hat, g_t, "velocity");
  GaussianState out = g_t;
  const double inv = 1.0 / (1.0 - t);
  for (int v = 0; v < out.views; ++v)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < GaussianState::kSignalChannels; ++c)
          out.at(v, y, x, c) = (g1_hat.at(v, y, x, c) - g_t.at(v, y, x, c)) * inv;
  return out;
}

GaussianState blend_toward(const GaussianState& g_t, const GaussianState& g1_hat, double ratio) {
  check_same_rays(g_t, g1_hat, "blend_toward");
  GaussianState out = g_t;
  for (int vi = 0; vi < out.views; ++vi)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x)
        for (int c = 0; c < GaussianState::kSignalChannels; ++c) {
          // ratio 1 replaces the state with the prediction exactly; the
          // incremental form would leave round-off behind
          out.at(vi, y, x, c) = ratio == 1.0
                                    ? g1_hat.at(vi, y, x, c)
                                    : g_t.at(vi, y, x, c) +
                                          ratio * (g1_hat.at(vi, y, x, c) - g_t.at(vi, y, x, c));
        }
  return out;
}

GaussianState sample_multistep(const GaussianState& g0, int steps, const StateModel& model) {
  if (steps < 1) throw std::runtime_error("sample_multistep: steps must be >= 1");
  FlowSchedule sched{steps};
  GaussianState g = g0;
  for (int k = 0; k < steps; ++k) {
    GaussianState g1_hat = model(g, sched.t(k));
    // dt / (1 - t_k) = (1/N) / ((N-k)/N), kept in exact integer form
    g = blend_toward(g, g1_hat, 1.0 / double(steps - k));
  }
  return g;
}

GaussianState sample_onestep(const GaussianState& g0, const StateModel& model) {
  return model(g0, 0.0);
}

TrainingPair make_training_pair(std::span<const Image> clean_views, const CameraRig& rig,
                                uint64_t noise_seed, FlowMode mode, Rng& time_rng) {
  TrainingPair pair;
  pair.g_one = state_from_images(clean_views, rig);
  GaussianState g0 = noise_state(rig, noise_seed);
  pair.t = mode == FlowMode::OneStep ? 0.0 : time_rng.uniform();
  pair.g_t = interpolate(g0, pair.g_one, pair.t);
  return pair;
}

}  // namespace gshead
