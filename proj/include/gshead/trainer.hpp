#pragma once

#include <functional>
#include <optional>

#include "gshead/dataset.hpp"
#include "gshead/loss.hpp"
#include "gshead/metrics.hpp"
#include "gshead/model.hpp"

namespace gshead {

struct TrainConfig {
  ModelConfig model;
  std::string mode = "one-step";  // or "multi-step"
  bool avas = true;
  int render_views = 8;  // rendered supervision views per step (desk runs use 4)
  int avas_views = 4;    // decoded supervision views per step (0..4)
  double lambda2 = 1.0;
  double lambda_p = 0.5;
  double lr = 1e-4;
  double lr_floor_frac = 0.01;  // cosine floor as a fraction of lr
  std::string schedule = "cosine";
  int steps = 1000;
  int batch = 1;
  uint64_t seed = 0;
  bool resample_views_per_step = false;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
  FlowMode flow_mode() const;
};

double lr_at(const TrainConfig& cfg, int step);

// One identity's training data: the conditioning portrait, clean images for
// the four denoising views, and the rendered-supervision views with their rig.
struct TrainSample {
  Image portrait;
  Camera portrait_cam;
  std::vector<Image> canonical_images;  // 4, in canonical-rig order
  std::vector<Image> supervision_images;
  CameraRig supervision_rig;
};

struct StepResult {
  double loss = 0;
  double lr = 0;
  double wall_ms = 0;
};

// Forward, render, loss, backward, optimizer step. Throws on non-finite loss,
// naming the step.
StepResult train_step(HeadModel& model, std::span<const TrainSample> batch,
                      const TrainConfig& cfg, int step);

using StepCallback = std::function<void(int step, const StepResult&)>;

// Round-robin over samples for cfg.steps steps; optionally appends
// line-delimited JSON records to log_path.
void train_loop(HeadModel& model, std::span<const TrainSample> samples, const TrainConfig& cfg,
                const std::string& log_path = "", const StepCallback& callback = {});

// Renders the cloud from every rig view and scores against the truths.
MetricReport evaluate_cloud(const GaussianCloud& cloud, const CameraRig& rig,
                            std::span<const Image> truths);

// Runs one-step inference per valid record and scores all record views.
// The ai-generated layout carries no camera files, so consumers must pass
// the rig its views were rendered with.
MetricReport evaluate_corpus(const HeadModel& model, const CorpusIndex& index, uint64_t seed,
                             const CameraRig* assumed_rig = nullptr);

// Builds training samples from a scanned corpus: the portrait is the view
// closest to the front direction, canonical images are the views nearest the
// four canonical azimuths. assumed_rig substitutes for missing camera files.
std::vector<TrainSample> samples_from_corpus(const CorpusIndex& index, const TrainConfig& cfg,
                                             const CameraRig* assumed_rig = nullptr);

// The canonical four views plus an elevation ring of extra views.
CameraRig default_training_rig(int extra_views, double radius, int height, int width,
                               double fov_y);

// Renders ground truth for one scene: the portrait is the canonical front
// render, canonical images come from the model's denoising rig.
TrainSample sample_from_cloud(const GaussianCloud& cloud, const ModelConfig& cfg,
                              const CameraRig& supervision_rig);

void save_model(const std::string& path, const HeadModel& model, const TrainConfig& cfg);

struct LoadedModel {
  HeadModel model;
  TrainConfig config;
};
LoadedModel load_model(const std::string& path);

}  // namespace gshead
