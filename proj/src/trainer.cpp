#include "gshead/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "gshead/checkpoint.hpp"
#include "json.hpp"

namespace gshead {

using ojson = nlohmann::ordered_json;

void TrainConfig::validate() const {
  model.validate();
  if (mode != "one-step" && mode != "multi-step")
    throw std::runtime_error("train config: mode must be one-step or multi-step");
  if (render_views < 1) throw std::runtime_error("train config: render_views must be >= 1");
  if (avas_views < 0 || avas_views > 4)
    throw std::runtime_error("train config: avas_views must be in [0,4]");
  if (avas && !model.image_decoder)
    throw std::runtime_error("train config: avas requires the image-decoder group");
  if (steps < 1 || batch < 1) throw std::runtime_error("train config: steps and batch must be >= 1");
  if (schedule != "cosine" && schedule != "constant")
    throw std::runtime_error("train config: schedule must be cosine or constant");
}

FlowMode TrainConfig::flow_mode() const {
  return mode == "one-step" ? FlowMode::OneStep : FlowMode::MultiStep;
}

std::string TrainConfig::to_json() const {
  ojson j;
  j["model"] = ojson::parse(model.to_json());
  j["mode"] = mode;
  j["avas"] = avas;
  j["render_views"] = render_views;
  j["avas_views"] = avas_views;
  j["lambda2"] = lambda2;
  j["lambda_p"] = lambda_p;
  j["lr"] = lr;
  j["lr_floor_frac"] = lr_floor_frac;
  j["schedule"] = schedule;
  j["steps"] = steps;
  j["batch"] = batch;
  j["seed"] = seed;
  j["resample_views_per_step"] = resample_views_per_step;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["adam_eps"] = adam_eps;
  j["weight_decay"] = weight_decay;
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  ojson j = ojson::parse(text);
  TrainConfig c;
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model").dump());
  c.mode = j.value("mode", c.mode);
  c.avas = j.value("avas", c.avas);
  c.render_views = j.value("render_views", c.render_views);
  c.avas_views = j.value("avas_views", c.avas_views);
  c.lambda2 = j.value("lambda2", c.lambda2);
  c.lambda_p = j.value("lambda_p", c.lambda_p);
  c.lr = j.value("lr", c.lr);
  c.lr_floor_frac = j.value("lr_floor_frac", c.lr_floor_frac);
  c.schedule = j.value("schedule", c.schedule);
  c.steps = j.value("steps", c.steps);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.resample_views_per_step = j.value("resample_views_per_step", c.resample_views_per_step);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.validate();
  return c;
}

double lr_at(const TrainConfig& cfg, int step) {
  if (cfg.schedule == "constant" || cfg.steps <= 1) return cfg.lr;
  const double floor = cfg.lr * cfg.lr_floor_frac;
  const double progress = double(step) / double(cfg.steps - 1);
  return floor + (cfg.lr - floor) * 0.5 * (1.0 + std::cos(kPi * std::min(1.0, progress)));
}

static Tensor image_to_tensor(const Image& img, DType dtype) {
  return Tensor::from_data({img.height, img.width, img.channels}, img.px, dtype);
}

static Tensor sample_loss(HeadModel& model, const TrainSample& sample, const TrainConfig& cfg,
                          int step, int sample_slot) {
  const CameraRig canonical = model.canonical_rig();
  if (sample.canonical_images.size() != 4)
    throw std::runtime_error("train_step: sample needs 4 canonical view images");
  if (sample.supervision_images.size() != sample.supervision_rig.cameras.size())
    throw std::runtime_error("train_step: supervision images and rig sizes differ");
  if (int(sample.supervision_images.size()) < cfg.render_views)
    throw std::runtime_error("train_step: fewer supervision views than render_views");

  Rng time_rng(mix_seed(cfg.seed, mix_seed(0x11ae, uint64_t(step) * 8 + uint64_t(sample_slot))));
  const uint64_t noise_seed =
      mix_seed(cfg.seed, mix_seed(0x90153, uint64_t(step) * 64 + uint64_t(sample_slot)));
  TrainingPair pair = make_training_pair(sample.canonical_images, canonical, noise_seed,
                                         cfg.flow_mode(), time_rng);

  ConditionedImage cond = model.condition(sample.portrait, sample.portrait_cam);
  Tensor tokens = model.forward_tokens(pair.g_t, pair.t, cond);
  CloudTensors cloud = model.decode_cloud_tokens(tokens);

  const DType dt = model.config().dtype_enum();
  RenderSettings rs;

  // choose which supervision views this step renders
  std::vector<int> view_ids;
  if (cfg.resample_views_per_step && int(sample.supervision_images.size()) > cfg.render_views) {
    Rng pick(mix_seed(cfg.seed, mix_seed(0x7bde, uint64_t(step))));
    std::vector<int> all(sample.supervision_images.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = int(i);
    for (int i = 0; i < cfg.render_views; ++i) {
      int j = int(pick.uniform_int(i, int64_t(all.size()) - 1));
      std::swap(all[size_t(i)], all[size_t(j)]);
      view_ids.push_back(all[size_t(i)]);
    }
  } else {
    for (int i = 0; i < cfg.render_views; ++i) view_ids.push_back(i);
  }

  std::vector<Tensor> render_preds, render_truths;
  for (int vid : view_ids) {
    render_preds.push_back(render_cloud(cloud, sample.supervision_rig.cameras[size_t(vid)], rs));
    render_truths.push_back(image_to_tensor(sample.supervision_images[size_t(vid)], dt));
  }

  std::vector<Tensor> avas_preds, avas_truths;
  if (cfg.avas && cfg.avas_views > 0) {
    Tensor views = model.decode_view_images(tokens);  // {4,H,W,3}
    for (int v = 0; v < cfg.avas_views; ++v) {
      Tensor one = reshape(slice(views, 0, v, 1),
                           {model.config().height, model.config().width, 3});
      avas_preds.push_back(one);
      avas_truths.push_back(image_to_tensor(sample.canonical_images[size_t(v)], dt));
    }
  }

  LossWeights w{cfg.lambda2, cfg.lambda_p};
  return total_loss(render_preds, render_truths, avas_preds, avas_truths, w,
                    default_perceptual_plugin());
}

StepResult train_step(HeadModel& model, std::span<const TrainSample> batch, const TrainConfig& cfg,
                      int step) {
  if (batch.empty()) throw std::runtime_error("train_step: empty batch");
  auto start = std::chrono::steady_clock::now();

  model.params().zero_grad();
  Tensor loss;
  for (size_t i = 0; i < batch.size(); ++i) {
    Tensor term = sample_loss(model, batch[i], cfg, step, int(i));
    loss = i == 0 ? term : add(loss, term);
  }
  if (batch.size() > 1) loss = mul_scalar(loss, 1.0 / double(batch.size()));

  const double value = loss.item();
  if (!std::isfinite(value))
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(step));
  backward(loss);

  AdamWConfig opt;
  opt.lr = lr_at(cfg, step);
  opt.beta1 = cfg.adam_beta1;
  opt.beta2 = cfg.adam_beta2;
  opt.eps = cfg.adam_eps;
  opt.weight_decay = cfg.weight_decay;
  adamw_step(model.params(), opt);

  StepResult r;
  r.loss = value;
  r.lr = opt.lr;
  r.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return r;
}

void train_loop(HeadModel& model, std::span<const TrainSample> samples, const TrainConfig& cfg,
                const std::string& log_path, const StepCallback& callback) {
  cfg.validate();
  if (samples.empty()) throw std::runtime_error("train_loop: no samples");
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("train_loop: cannot open log " + log_path);
  }
  std::vector<TrainSample> batch_storage;
  for (int step = 0; step < cfg.steps; ++step) {
    batch_storage.clear();
    for (int b = 0; b < cfg.batch; ++b)
      batch_storage.push_back(samples[size_t((step * cfg.batch + b) % samples.size())]);
    StepResult r = train_step(model, batch_storage, cfg, step);
    if (log.is_open()) {
      ojson e;
      e["step"] = step;
      e["loss"] = r.loss;
      e["lr"] = r.lr;
      e["wall_ms"] = r.wall_ms;
      log << e.dump() << "\n";
    }
    if (callback) callback(step, r);
  }
}

MetricReport evaluate_cloud(const GaussianCloud& cloud, const CameraRig& rig,
                            std::span<const Image> truths) {
  if (truths.size() != rig.cameras.size())
    throw std::runtime_error("evaluate: truth count does not match rig size");
  std::vector<ViewMetrics> views;
  for (size_t v = 0; v < rig.cameras.size(); ++v) {
    const Camera& cam = rig.cameras[v];
    if (cam.height != truths[v].height || cam.width != truths[v].width)
      throw std::runtime_error("evaluate: resolution mismatch at view " + std::to_string(v));
    Image render = render_image(cloud, cam);
    ViewMetrics m;
    m.id = int(v);
    m.psnr = psnr(render, truths[v]);
    m.ssim = ssim(render, truths[v]);
    views.push_back(m);
  }
  return make_report(views);
}

// picks the rig view whose camera sits closest to the given direction
static int nearest_view(const CameraRig& rig, const Vec3& dir) {
  int best = 0;
  double best_dot = -2;
  for (size_t i = 0; i < rig.cameras.size(); ++i) {
    double d = dot(normalized(rig.cameras[i].position), dir);
    if (d > best_dot) {
      best_dot = d;
      best = int(i);
    }
  }
  return best;
}

static CameraRig record_rig(const CorpusRecord& rec, const CameraRig* assumed_rig,
                            size_t view_count, const char* who) {
  if (!rec.camera_path.empty() && std::filesystem::exists(rec.camera_path))
    return read_rig(rec.camera_path);
  if (!assumed_rig)
    throw std::runtime_error(std::string(who) + ": record '" + rec.head_id +
                             "' has no camera file; pass an assumed rig (--rig) for the "
                             "ai-generated layout");
  if (assumed_rig->cameras.size() != view_count)
    throw std::runtime_error(std::string(who) + ": record '" + rec.head_id + "' has " +
                             std::to_string(view_count) + " views but the assumed rig lists " +
                             std::to_string(assumed_rig->cameras.size()));
  return *assumed_rig;
}

std::vector<TrainSample> samples_from_corpus(const CorpusIndex& index, const TrainConfig& cfg,
                                             const CameraRig* assumed_rig) {
  std::vector<TrainSample> samples;
  const Vec3 canonical_dirs[4] = {{0, 0, 1}, {1, 0, 0}, {-1, 0, 0}, {0, 0, -1}};
  for (const auto& rec : index.records) {
    if (!rec.valid) continue;
    CameraRig rig = record_rig(rec, assumed_rig, rec.view_paths.size(), "samples_from_corpus");
    std::vector<Image> views;
    for (const auto& p : rec.view_paths) views.push_back(read_png(p));

    TrainSample s;
    const int front = nearest_view(rig, {0, 0, 1});
    s.portrait = views[size_t(front)];
    s.portrait_cam = rig.cameras[size_t(front)];
    for (const Vec3& d : canonical_dirs) {
      int v = nearest_view(rig, d);
      s.canonical_images.push_back(views[size_t(v)]);
    }
    s.supervision_images = views;
    s.supervision_rig = rig;
    if (int(views.size()) < cfg.render_views)
      throw std::runtime_error("samples_from_corpus: record '" + rec.head_id +
                               "' has fewer views than render_views");
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw std::runtime_error("samples_from_corpus: no valid records");
  return samples;
}

CameraRig default_training_rig(int extra_views, double radius, int height, int width,
                               double fov_y) {
  CameraRig rig = canonical_four(radius, height, width, fov_y);
  if (extra_views > 0) {
    CameraRig ring = circular_rig(extra_views, radius, {-15.0, 15.0}, height, width, fov_y);
    rig.cameras.insert(rig.cameras.end(), ring.cameras.begin(), ring.cameras.end());
  }
  rig.kind = RigKind::Custom;
  return rig;
}

TrainSample sample_from_cloud(const GaussianCloud& cloud, const ModelConfig& cfg,
                              const CameraRig& supervision_rig) {
  CameraRig canonical =
      canonical_four(cfg.rig_radius, cfg.height, cfg.width, deg_to_rad(cfg.fov_y_deg));
  TrainSample s;
  for (const Camera& cam : canonical.cameras)
    s.canonical_images.push_back(render_image(cloud, cam));
  s.portrait = s.canonical_images[0];
  s.portrait_cam = canonical.cameras[0];
  s.supervision_rig = supervision_rig;
  for (const Camera& cam : supervision_rig.cameras)
    s.supervision_images.push_back(render_image(cloud, cam));
  return s;
}

MetricReport evaluate_corpus(const HeadModel& model, const CorpusIndex& index, uint64_t seed,
                             const CameraRig* assumed_rig) {
  std::vector<ViewMetrics> all;
  int id = 0;
  for (const auto& rec : index.records) {
    if (!rec.valid) continue;
    CameraRig rig = record_rig(rec, assumed_rig, rec.view_paths.size(), "evaluate_corpus");
    std::vector<Image> views;
    for (const auto& p : rec.view_paths) views.push_back(read_png(p));
    const int front = nearest_view(rig, {0, 0, 1});
    InferenceResult res =
        infer_onestep(model, views[size_t(front)], rig.cameras[size_t(front)], seed);
    for (size_t v = 0; v < views.size(); ++v) {
      Image render = render_image(res.cloud, rig.cameras[v]);
      ViewMetrics m;
      m.id = id++;
      m.psnr = psnr(render, views[v]);
      m.ssim = ssim(render, views[v]);
      all.push_back(m);
    }
  }
  if (all.empty()) throw std::runtime_error("evaluate_corpus: no valid records");
  return make_report(all);
}

void save_model(const std::string& path, const HeadModel& model, const TrainConfig& cfg) {
  save_checkpoint(path, model.params(), cfg.to_json());
}

LoadedModel load_model(const std::string& path) {
  LoadedCheckpoint ckpt = read_checkpoint(path);
  TrainConfig cfg = TrainConfig::from_json(ckpt.config_text);
  // the decoder group is optional in checkpoints; mirror what the file has
  bool has_decoder = false;
  for (const auto& [name, t] : ckpt.tensors)
    if (name.rfind("dec_img.", 0) == 0) has_decoder = true;
  cfg.model.image_decoder = has_decoder;
  if (!has_decoder) cfg.avas = false;
  LoadedModel out{HeadModel(cfg.model), cfg};
  load_into_store(out.model.params(), ckpt);
  return out;
}

}  // namespace gshead
