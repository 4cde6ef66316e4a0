#include "gshead/model.hpp"

#include <chrono>
#include <stdexcept>

#include "json.hpp"

namespace gshead {

using ojson = nlohmann::ordered_json;

DType ModelConfig::dtype_enum() const {
  if (dtype == "f32") return DType::F32;
  if (dtype == "f64") return DType::F64;
  throw std::runtime_error("model config: unknown dtype '" + dtype + "'");
}

void ModelConfig::validate() const {
  if (height <= 0 || width <= 0 || patch <= 0 || height % patch != 0 || width % patch != 0)
    throw std::runtime_error("model config: extents " + std::to_string(height) + "x" +
                             std::to_string(width) + " must be positive multiples of patch " +
                             std::to_string(patch));
  DiTConfig dit{depth, hidden, heads, mlp_ratio, t_embed_dim};
  dit.validate();
  dtype_enum();
  if (!(rig_radius > 0) || !(scene_radius > 0))
    throw std::runtime_error("model config: radii must be positive");
}

std::string ModelConfig::to_json() const {
  ojson j;
  j["height"] = height;
  j["width"] = width;
  j["patch"] = patch;
  j["hidden"] = hidden;
  j["depth"] = depth;
  j["heads"] = heads;
  j["mlp_ratio"] = mlp_ratio;
  j["t_embed_dim"] = t_embed_dim;
  j["decode_feat"] = decode_feat;
  j["scene_radius"] = scene_radius;
  j["offset_frac"] = offset_frac;
  j["rig_radius"] = rig_radius;
  j["fov_y_deg"] = fov_y_deg;
  j["image_decoder"] = image_decoder;
  j["learned_pos_embed"] = learned_pos_embed;
  j["dtype"] = dtype;
  j["seed"] = seed;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ojson j = ojson::parse(text);
  ModelConfig c;
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.patch = j.value("patch", c.patch);
  c.hidden = j.value("hidden", c.hidden);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
  c.t_embed_dim = j.value("t_embed_dim", c.t_embed_dim);
  c.decode_feat = j.value("decode_feat", c.decode_feat);
  c.scene_radius = j.value("scene_radius", c.scene_radius);
  c.offset_frac = j.value("offset_frac", c.offset_frac);
  c.rig_radius = j.value("rig_radius", c.rig_radius);
  c.fov_y_deg = j.value("fov_y_deg", c.fov_y_deg);
  c.image_decoder = j.value("image_decoder", c.image_decoder);
  c.learned_pos_embed = j.value("learned_pos_embed", c.learned_pos_embed);
  c.dtype = j.value("dtype", c.dtype);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

static GsDecodeConfig gs_decode_config(const ModelConfig& cfg) {
  GsDecodeConfig d;
  d.patch = cfg.patch;
  d.hidden = cfg.hidden;
  d.feat = cfg.decode_feat;
  d.scene_radius = cfg.scene_radius;
  d.offset_frac = cfg.offset_frac;
  d.init_depth = cfg.rig_radius;
  return d;
}

HeadModel::HeadModel(const ModelConfig& cfg) : cfg_(cfg), store_(cfg.dtype_enum()) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int in_dim = 9 * cfg_.patch * cfg_.patch;
  Rng r_img = rng.fork(1), r_gs = rng.fork(2), r_dit = rng.fork(3), r_dec = rng.fork(4),
      r_vae = rng.fork(5), r_pos = rng.fork(6);
  init_tokenizer(store_, "tok_img", in_dim, cfg_.hidden, r_img);
  init_tokenizer(store_, "tok_gs", in_dim, cfg_.hidden, r_gs);
  DiTConfig dit{cfg_.depth, cfg_.hidden, cfg_.heads, cfg_.mlp_ratio, cfg_.t_embed_dim};
  init_dit(store_, "dit", dit, r_dit);
  init_gs_decoder(store_, "dec_gs", gs_decode_config(cfg_), r_dec);
  if (cfg_.image_decoder)
    init_image_decoder(store_, "dec_img", {cfg_.patch, cfg_.hidden}, r_vae);
  if (cfg_.learned_pos_embed)
    store_.create_randn("tok_pos.embed", {cfg_.sequence_length(), cfg_.hidden}, r_pos, 0.02);
}

CameraRig HeadModel::canonical_rig() const {
  return canonical_four(cfg_.rig_radius, cfg_.height, cfg_.width, deg_to_rad(cfg_.fov_y_deg));
}

Camera HeadModel::front_camera() const { return canonical_rig().cameras[0]; }

ConditionedImage HeadModel::condition(const Image& portrait, const Camera& cam) const {
  if (portrait.height != cfg_.height || portrait.width != cfg_.width)
    throw std::runtime_error("condition: portrait is " + std::to_string(portrait.height) + "x" +
                             std::to_string(portrait.width) + ", model expects " +
                             std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width));
  return make_conditioned_image(portrait, plucker_embed(cam), cfg_.dtype_enum());
}

Tensor HeadModel::forward_tokens(const GaussianState& g, double t,
                                 const ConditionedImage& cond) const {
  if (g.views != 4 || g.height != cfg_.height || g.width != cfg_.width)
    throw std::runtime_error("forward_tokens: state extents do not match the model config");
  ++counts_.model_forward;

  Tensor g_tensor = Tensor::from_data({4, cfg_.height, cfg_.width, GaussianState::kChannels},
                                      g.data, cfg_.dtype_enum());
  TokenizerParams tp_img = tokenizer_params(store_, "tok_img");
  TokenizerParams tp_gs = tokenizer_params(store_, "tok_gs");
  TokenGrid ctx = tokenize_image(tp_img, cond, cfg_.patch, cfg_.hidden);
  TokenGrid z_g = tokenize_gaussian(tp_gs, g_tensor, cfg_.patch, cfg_.hidden);
  TokenSequence seq = assemble_sequence(ctx, z_g);
  Tensor s0 = seq.tokens;
  if (cfg_.learned_pos_embed) s0 = add(s0, store_.get("tok_pos.embed"));

  DiTConfig dit{cfg_.depth, cfg_.hidden, cfg_.heads, cfg_.mlp_ratio, cfg_.t_embed_dim};
  TokenSequence out = seq;
  out.tokens = dit_forward(store_, "dit", dit, s0, t);
  return split_sequence(out).gaussian;
}

CloudTensors HeadModel::decode_cloud_tokens(const Tensor& gaussian_tokens) const {
  return decode_gaussians(store_, "dec_gs", gs_decode_config(cfg_), gaussian_tokens,
                          canonical_rig());
}

Tensor HeadModel::decode_view_images(const Tensor& gaussian_tokens) const {
  if (!has_image_decoder())
    throw std::runtime_error("decode_view_images: model has no image-decoder parameter group");
  ++counts_.image_decode;
  return decode_views(store_, "dec_img", {cfg_.patch, cfg_.hidden}, gaussian_tokens, cfg_.height,
                      cfg_.width);
}

bool HeadModel::has_image_decoder() const { return store_.has("dec_img.w1"); }

void HeadModel::strip_image_decoder() { store_.remove_group("dec_img."); }

// ---- inference ----------------------------------------------------------------

static InferenceResult decode_result(const HeadModel& model, const Tensor& tokens, double seconds,
                                     int64_t calls) {
  InferenceResult res;
  res.gaussian_tokens = tokens;
  res.cloud = to_cloud(model.decode_cloud_tokens(tokens));
  res.model_seconds = seconds;
  res.model_calls = calls;
  return res;
}

InferenceResult infer_onestep(const HeadModel& model, const Image& portrait,
                              const Camera& portrait_cam, uint64_t seed) {
  ConditionedImage cond = model.condition(portrait, portrait_cam);
  GaussianState g0 = noise_state(model.canonical_rig(), seed);
  auto start = std::chrono::steady_clock::now();
  Tensor tokens = model.forward_tokens(g0, 0.0, cond);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return decode_result(model, tokens, secs, 1);
}

InferenceResult denoise_multistep(const HeadModel& model, const Image& portrait,
                                  const Camera& portrait_cam, int steps, uint64_t seed) {
  if (steps < 1) throw std::runtime_error("denoise: steps must be >= 1");
  if (steps == 1) return infer_onestep(model, portrait, portrait_cam, seed);
  if (!model.has_image_decoder())
    throw std::runtime_error(
        "denoise: multi-step sampling needs the image-decoder parameter group to rebuild "
        "intermediate states");

  ConditionedImage cond = model.condition(portrait, portrait_cam);
  CameraRig rig = model.canonical_rig();
  GaussianState g0 = noise_state(rig, seed);

  Tensor last_tokens;
  int64_t calls = 0;
  auto start = std::chrono::steady_clock::now();
  StateModel state_model = [&](const GaussianState& g, double t) {
    Tensor tokens = model.forward_tokens(g, t, cond);
    last_tokens = tokens;
    ++calls;
    Tensor views = model.decode_view_images(tokens);  // {4,H,W,3}
    GaussianState pred = g;
    auto vals = views.to_vector();
    for (int v = 0; v < pred.views; ++v)
      for (int y = 0; y < pred.height; ++y)
        for (int x = 0; x < pred.width; ++x)
          for (int c = 0; c < 3; ++c)
            pred.at(v, y, x, c) =
                vals[size_t(((v * pred.height + y) * pred.width + x) * 3 + c)];
    return pred;
  };
  sample_multistep(g0, steps, state_model);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return decode_result(model, last_tokens, secs, calls);
}

}  // namespace gshead
