// Acceptance suite: one binary, one pass/fail line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <vector>

#include "gshead/checkpoint.hpp"
#include "gshead/dataset.hpp"
#include "gshead/trainer.hpp"
#include "testutil.hpp"

using namespace gshead;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criterion 1: flow-math exactness ------------------------------------------

void criterion_flow_exactness() {
  auto t0 = std::chrono::steady_clock::now();
  CameraRig rig = canonical_four(2.7, 8, 8, deg_to_rad(50));
  GaussianState g0 = noise_state(rig, 17);
  std::vector<Image> clean(4, Image(8, 8, 3, 0.0));
  Rng rng(18);
  for (auto& img : clean)
    for (auto& v : img.px) v = rng.uniform();
  GaussianState g1 = state_from_images(clean, rig);
  StateModel perfect = [&](const GaussianState&, double) { return g1; };

  double worst = 0;
  for (int steps : {1, 4, 5, 10, 20, 30}) {
    GaussianState g = g0;
    FlowSchedule sched{steps};
    for (int k = 0; k < steps; ++k) {
      GaussianState ref = interpolate(g0, g1, sched.t(k));
      for (size_t i = 0; i < g.data.size(); ++i)
        worst = std::max(worst, std::fabs(g.data[i] - ref.data[i]));
      g = blend_toward(g, perfect(g, sched.t(k)), 1.0 / double(steps - k));
    }
    for (size_t i = 0; i < g.data.size(); ++i)
      worst = std::max(worst, std::fabs(g.data[i] - g1.data[i]));
  }

  // one-step vs one-step-multistep, bit exact, with a state-dependent model
  StateModel model = [&](const GaussianState& g, double t) {
    GaussianState out = g;
    for (size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = std::tanh(out.data[i] + t) * 0.5;
    // keep the ray channels untouched
    for (int v = 0; v < out.views; ++v)
      for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x)
          for (int c = 3; c < 9; ++c) out.at(v, y, x, c) = g.at(v, y, x, c);
    return out;
  };
  GaussianState a = sample_onestep(g0, model);
  GaussianState b = sample_multistep(g0, 1, model);
  bool bit_exact = a.data == b.data;

  char detail[160];
  std::snprintf(detail, sizeof(detail), "max path error %.2e, one-step %s multistep(1), %.2f s",
                worst, bit_exact ? "==" : "!=", seconds_since(t0));
  report(1, "flow-math exactness", worst < 1e-12 && bit_exact && seconds_since(t0) < 1.0, detail);
}

// ---- criterion 2: one-step collapse ---------------------------------------------

void criterion_onestep_collapse() {
  auto t0 = std::chrono::steady_clock::now();
  ModelConfig mc;
  mc.height = mc.width = 16;
  mc.hidden = 16;
  mc.depth = 1;
  mc.heads = 2;
  mc.t_embed_dim = 16;
  mc.decode_feat = 8;
  mc.seed = 21;
  HeadModel model(mc);

  SyntheticScene scene = synth_scene(5, 2);
  Camera front = model.front_camera();
  Image portrait = render_image(scene.cloud, front);

  bool ok = true;
  std::string detail;
  for (uint64_t subject = 0; subject < 3; ++subject) {
    model.reset_counts();
    InferenceResult res = infer_onestep(model, portrait, front, subject);
    ok = ok && model.counts().model_forward == 1 && model.counts().image_decode == 0 &&
         res.model_calls == 1;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "3 subjects, 1 forward each, 0 image-decode calls, %.2f s",
                seconds_since(t0));
  report(2, "one-step collapse contract", ok && seconds_since(t0) < 1.0, buf);
}

// ---- criterion 3: gradient integrity ------------------------------------------

void criterion_gradient_integrity() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(33);
  double worst_net = 0;
  std::string worst_name = "-";
  auto probe = [&](const char* name, const std::function<Tensor()>& build,
                   std::vector<Tensor> leaves, int64_t coords) {
    auto r = test::fd_check(build, std::move(leaves), coords);
    if (r.worst_rel > worst_net) {
      worst_net = r.worst_rel;
      worst_name = name;
    }
  };

  {  // elementwise op set
    Tensor x = Tensor::randn({4, 6}, rng, DType::F64, 1.0, true);
    Tensor b = Tensor::randn({6}, rng, DType::F64, 1.0, true);
    probe("elementwise", [&] {
      Tensor h = add(x, b);
      h = add(mul(sigmoid(h), silu(h)), gelu(h));
      h = add(tanh(h), mul_scalar(exp(mul_scalar(h, 0.3)), 0.5));
      h = add(h, softplus(h));
      return mean_all(mul(h, h));
    }, {x, b}, -1);
  }
  {  // matmul / softmax / layer_norm / transpose / reshape
    Tensor a = Tensor::randn({2, 3, 4}, rng, DType::F64, 1.0, true);
    Tensor w = Tensor::randn({4, 4}, rng, DType::F64, 1.0, true);
    probe("attention-style", [&] {
      Tensor h = matmul(a, w);
      h = layer_norm(h);
      Tensor s = softmax(mul_scalar(matmul(h, transpose(h, 1, 2)), 0.5));
      Tensor o = matmul(s, h);
      return mean_all(mul(o, reshape(o, o.shape())));
    }, {a, w}, -1);
  }
  {  // layout + reductions + clamp/abs/sqrt/rsqrt
    Tensor a = Tensor::randn({3, 8}, rng, DType::F64, 1.0, true);
    auto idx = std::make_shared<std::vector<int64_t>>();
    for (int64_t i = 0; i < 24; ++i) idx->push_back((i * 7) % 24);
    probe("layout+reduce", [&] {
      Tensor s = slice(a, 1, 1, 6);
      Tensor parts[] = {s, s};
      Tensor c = concat(parts, 1);
      Tensor g = gather_linear(a, idx, {24});
      Tensor q = add(sqrt(add_scalar(mul(g, g), 1.0)), rsqrt(add_scalar(mul(g, g), 0.7)));
      Tensor t = sum_axis(mul(c, c), 1, true);
      return add(mean_all(t), add(mean_all(q), mean_all(abs(clamp(a, -0.6, 0.6)))));
    }, {a}, -1);
  }
  {  // avg_pool2 (the perceptual pyramid block)
    Tensor img = Tensor::randn({8, 8, 3}, rng, DType::F64, 0.3, true);
    probe("avg_pool2", [&] { return mean_all(mul(avg_pool2(img), avg_pool2(img))); }, {img}, -1);
  }
  {  // DiT forward on the 2-block, d=32, 16x16 config
    DiTConfig cfg{2, 32, 4, 2, 16};
    ParamStore store(DType::F64);
    Rng r2(34);
    init_dit(store, "dit", cfg, r2);
    for (int i = 0; i < 2; ++i) {
      char b[8];
      std::snprintf(b, sizeof(b), "%02d", i);
      for (const char* n : {"ada_w", "ada_b"}) {
        Tensor t = store.get(std::string("dit.blk") + b + "." + n);
        auto v = t.to_vector();
        for (auto& x : v) x = 0.25 * r2.normal();
        t.copy_from(v);
      }
    }
    Tensor seq = Tensor::randn({20, 32}, r2, DType::F64, 0.8, true);  // 5*(16/8)^2 tokens
    probe("dit_forward", [&] {
      Tensor y = dit_forward(store, "dit", cfg, seq, 0.3);
      return mean_all(mul(y, y));
    }, {seq, store.get("dit.blk00.qkv_w"), store.get("dit.blk01.mlp_w1"),
        store.get("dit.blk00.ada_w"), store.get("dit.temb.w1")}, 24);
  }
  {  // Gaussian decoder on a 16x16 config
    GsDecodeConfig cfg;
    cfg.patch = 8;
    cfg.hidden = 16;
    cfg.feat = 8;
    ParamStore store(DType::F64);
    Rng r3(35);
    init_gs_decoder(store, "dec_gs", cfg, r3);
    CameraRig rig = canonical_four(2.7, 16, 16, deg_to_rad(50));
    Tensor tokens = Tensor::randn({16, 16}, r3, DType::F64, 1.0, true);
    probe("gs_decoder", [&] {
      CloudTensors ct = decode_gaussians(store, "dec_gs", cfg, tokens, rig);
      Tensor loss = mean_all(mul(ct.position, ct.position));
      loss = add(loss, mean_all(mul(ct.rotation, ct.rotation)));
      loss = add(loss, add(mean_all(ct.scale), add(mean_all(ct.opacity), mean_all(ct.color))));
      return loss;
    }, {tokens, store.get("dec_gs.h2_w"), store.get("dec_gs.up_w")}, 24);
  }

  // renderer at its looser tolerance; large soft gaussians keep every pixel
  // clear of the cutoff boundary so the differences stay smooth
  double worst_render = 0;
  {
    GaussianCloud c;
    c.position = {0.05, 0.02, 0.0, -0.3, 0.2, 0.3, 0.25, -0.2, -0.2};
    c.scale = {1.6, 1.4, 1.5, 1.3, 1.7, 1.5, 1.5, 1.5, 1.8};
    Quat q1 = Quat::from_axis_angle({0.2, 1.0, 0.1}, 0.7);
    Quat q2 = Quat::from_axis_angle({1.0, -0.3, 0.2}, 1.9);
    Quat q3 = Quat::from_axis_angle({0.1, 0.4, 1.0}, -1.1);
    c.rotation = {q1.w, q1.x, q1.y, q1.z, q2.w, q2.x, q2.y, q2.z, q3.w, q3.x, q3.y, q3.z};
    c.opacity = {0.55, 0.45, 0.6};
    c.color = {0.8, 0.3, 0.2, 0.2, 0.7, 0.4, 0.3, 0.3, 0.9};
    Camera cam = camera_at(0, 0, 2.5, 16, 16, deg_to_rad(50));
    CloudTensors ct = cloud_to_tensors(c, DType::F64, true);
    Image target(16, 16, 3, 0.0);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) target.at(i, j, 0) = (i + j) % 2 ? 0.9 : 0.1;
    Tensor target_t = Tensor::from_data({16, 16, 3}, target.px, DType::F64);
    auto build = [&] {
      Tensor img = render_cloud(ct, cam);
      Tensor d = sub(img, target_t);
      return mean_all(mul(d, d));
    };
    auto r = test::fd_check(build, {ct.position, ct.scale, ct.rotation, ct.opacity, ct.color}, -1,
                            1e-5);
    worst_render = r.worst_rel;
  }

  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "network worst rel %.2e (%s) < 1e-3, renderer worst rel %.2e < 5e-3, %.1f s",
                worst_net, worst_name.c_str(), worst_render, seconds_since(t0));
  report(3, "gradient integrity", worst_net < 1e-3 && worst_render < 5e-3 &&
         seconds_since(t0) < 120.0, detail);
}

// ---- criterion 4: renderer correctness ------------------------------------------

void criterion_renderer_correctness() {
  auto t0 = std::chrono::steady_clock::now();
  RenderSettings s;
  double worst = 0;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed * 131 + 7);
    GaussianCloud c;
    const int n = 100 + int(seed % 5) * 100;  // up to 500
    for (int i = 0; i < n; ++i) {
      c.position.insert(c.position.end(),
                        {0.5 * rng.normal(), 0.5 * rng.normal(), 0.5 * rng.normal()});
      double sc = 0.02 + 0.15 * rng.uniform();
      c.scale.insert(c.scale.end(), {sc, sc * (0.5 + rng.uniform()), sc * (0.5 + rng.uniform())});
      Quat q = Quat::from_axis_angle({rng.normal(), rng.normal(), rng.normal()},
                                     rng.uniform() * 3.0);
      c.rotation.insert(c.rotation.end(), {q.w, q.x, q.y, q.z});
      c.opacity.push_back(0.1 + 0.8 * rng.uniform());
      c.color.insert(c.color.end(), {rng.uniform(), rng.uniform(), rng.uniform()});
    }
    Camera cam =
        camera_at(rng.uniform(0, 360), rng.uniform(-25, 25), 2.5, 64, 64, deg_to_rad(50));
    auto proj = project(c, cam, s);
    Image oracle = render_oracle(proj, 64, 64, s);
    Image tiled = render_tiled(proj, 64, 64, s);
    for (size_t i = 0; i < oracle.px.size(); ++i)
      worst = std::max(worst, std::fabs(oracle.px[i] - tiled.px[i]));

    if (seed % 10 == 0) {  // point-order invariance on a subset
      GaussianCloud rev;
      for (int64_t i = c.count() - 1; i >= 0; --i) {
        rev.position.insert(rev.position.end(), c.position.begin() + i * 3,
                            c.position.begin() + i * 3 + 3);
        rev.scale.insert(rev.scale.end(), c.scale.begin() + i * 3, c.scale.begin() + i * 3 + 3);
        rev.rotation.insert(rev.rotation.end(), c.rotation.begin() + i * 4,
                            c.rotation.begin() + i * 4 + 4);
        rev.opacity.push_back(c.opacity[size_t(i)]);
        rev.color.insert(rev.color.end(), c.color.begin() + i * 3, c.color.begin() + i * 3 + 3);
      }
      Image permuted = render_tiled(project(rev, cam, s), 64, 64, s);
      for (size_t i = 0; i < tiled.px.size(); ++i)
        worst = std::max(worst, std::fabs(tiled.px[i] - permuted.px[i]));
    }
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "50 scenes at 64x64, max |oracle - tiled| = %.2e, order-invariant, %.1f s", worst,
                seconds_since(t0));
  report(4, "renderer correctness", worst < 1e-5 && seconds_since(t0) < 120.0, detail);
}

// ---- criterion 5: shape laws -----------------------------------------------------

void criterion_shape_laws() {
  auto t0 = std::chrono::steady_clock::now();
  struct Case {
    int h, w, p;
  };
  bool ok = true;
  std::string detail;
  for (Case cse : {Case{64, 64, 8}, Case{32, 64, 4}, Case{512, 512, 8}}) {
    const int nh = cse.h / cse.p, nw = cse.w / cse.p;
    const int d = 16;
    Rng rng(uint64_t(cse.h * 31 + cse.p));
    ParamStore store(DType::F32);
    auto tp_img = init_tokenizer(store, "tok_img", 9 * cse.p * cse.p, d, rng);
    auto tp_gs = init_tokenizer(store, "tok_gs", 9 * cse.p * cse.p, d, rng);

    Image portrait(cse.h, cse.w, 3, 0.5);
    Camera cam = camera_at(0, 0, 2.7, cse.h, cse.w, deg_to_rad(50));
    ConditionedImage cond = make_conditioned_image(portrait, plucker_embed(cam), DType::F32);
    CameraRig rig = canonical_four(2.7, cse.h, cse.w, deg_to_rad(50));
    GaussianState g0 = noise_state(rig, 3);
    Tensor g_tensor = Tensor::from_data({4, cse.h, cse.w, 9}, g0.data, DType::F32);

    TokenGrid ctx = tokenize_image(tp_img, cond, cse.p, d);
    TokenGrid z_g = tokenize_gaussian(tp_gs, g_tensor, cse.p, d);
    TokenSequence seq = assemble_sequence(ctx, z_g);
    ok = ok && seq.tokens.shape() == Shape{int64_t(5) * nh * nw, d};
    SplitTokens split = split_sequence(seq);
    ok = ok && split.gaussian.shape() == Shape{int64_t(4) * nh * nw, d};

    GsDecodeConfig dc;
    dc.patch = cse.p;
    dc.hidden = d;
    dc.feat = 8;
    init_gs_decoder(store, "dec_gs", dc, rng);
    CloudTensors ct = decode_gaussians(store, "dec_gs", dc, split.gaussian, rig);
    ok = ok && ct.count() == int64_t(4) * cse.h * cse.w;
    // 14 decoded channels: 3 + 3 + 4 + 1 + 3
    int64_t channels = ct.position.shape()[1] + ct.scale.shape()[1] + ct.rotation.shape()[1] +
                       ct.opacity.shape()[1] + ct.color.shape()[1];
    ok = ok && channels == 14;

    init_image_decoder(store, "dec_img", {cse.p, d}, rng);
    Tensor views = decode_views(store, "dec_img", {cse.p, d}, split.gaussian, cse.h, cse.w);
    ok = ok && views.shape() == Shape{4, cse.h, cse.w, 3};

    store.remove_group("tok_img");
    store.remove_group("tok_gs");
    store.remove_group("dec_gs");
    store.remove_group("dec_img");
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%s(%d,%d,%d) L=%d ", ok ? "" : "FAILED ", cse.h, cse.w,
                  cse.p, 5 * nh * nw);
    detail += buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f s", seconds_since(t0));
  report(5, "shape laws", ok && seconds_since(t0) < 30.0, detail + buf);
}

// ---- criteria 6-8: desk-scale training, step insensitivity, zero-cost branch ----

struct DeskRun {
  bool trained = false;
  double psnr_step0 = 0, psnr_trained = 0;
  double loss_first = 0, loss_last = 0;
  bool losses_finite = true;
  double dec_grad_norm = 0;
  ModelConfig mc;
  TrainConfig cfg;
  Image portrait;
  Camera portrait_cam;
  Camera held_out_cam;
  Image held_out_truth;
  std::unique_ptr<HeadModel> model;
};

DeskRun desk_training_run() {
  DeskRun run;
  run.mc.height = run.mc.width = 64;
  run.mc.patch = 8;
  run.mc.hidden = 64;
  run.mc.depth = 2;
  run.mc.heads = 4;
  run.mc.t_embed_dim = 64;
  run.mc.decode_feat = 32;
  run.mc.image_decoder = true;
  run.mc.seed = 7;

  run.cfg.model = run.mc;
  run.cfg.mode = "one-step";
  run.cfg.avas = true;
  run.cfg.render_views = 4;
  run.cfg.avas_views = 4;
  run.cfg.lambda2 = 1.0;
  run.cfg.lambda_p = 0.5;
  run.cfg.lr = 2.5e-3;
  run.cfg.steps = 1100;  // <= 2000
  run.cfg.seed = 7;

  SyntheticScene scene = synth_scene(41, 3);
  CameraRig supervision = canonical_four(run.mc.rig_radius, run.mc.height, run.mc.width,
                                         deg_to_rad(run.mc.fov_y_deg));
  TrainSample sample = sample_from_cloud(scene.cloud, run.mc, supervision);
  run.portrait = sample.portrait;
  run.portrait_cam = sample.portrait_cam;
  run.held_out_cam = camera_at(33.0, 8.0, run.mc.rig_radius, run.mc.height, run.mc.width,
                               deg_to_rad(run.mc.fov_y_deg));
  run.held_out_truth = render_image(scene.cloud, run.held_out_cam);

  auto held_out_psnr = [&](const HeadModel& m, uint64_t seed) {
    InferenceResult res = infer_onestep(m, run.portrait, run.portrait_cam, seed);
    Image render = render_image(res.cloud, run.held_out_cam);
    return psnr(render, run.held_out_truth);
  };

  {
    HeadModel fresh(run.mc);
    run.psnr_step0 = held_out_psnr(fresh, 123);
  }

  run.model = std::make_unique<HeadModel>(run.mc);
  std::array samples{sample};
  train_loop(*run.model, samples, run.cfg, "", [&](int step, const StepResult& r) {
    if (step == 0) run.loss_first = r.loss;
    run.loss_last = r.loss;
    run.losses_finite = run.losses_finite && std::isfinite(r.loss);
    if (step % 200 == 0) {
      std::printf("    desk training step %4d loss %.5f lr %.2e (%.0f ms/step)\n", step, r.loss,
                  r.lr, r.wall_ms);
      std::fflush(stdout);
    }
  });

  // gradient norm of the decoded branch on one more backward pass
  run.model->params().zero_grad();
  {
    ConditionedImage cond = run.model->condition(run.portrait, run.portrait_cam);
    Rng trng(1);
    TrainingPair pair = make_training_pair(sample.canonical_images, run.model->canonical_rig(),
                                           991, FlowMode::OneStep, trng);
    Tensor tokens = run.model->forward_tokens(pair.g_t, pair.t, cond);
    Tensor views = run.model->decode_view_images(tokens);
    std::vector<double> all;
    for (const auto& img : sample.canonical_images)
      all.insert(all.end(), img.px.begin(), img.px.end());
    Tensor truth =
        Tensor::from_data({4, run.mc.height, run.mc.width, 3}, all, run.mc.dtype_enum());
    Tensor d = sub(views, truth);
    backward(mean_all(mul(d, d)));
    for (const auto& name : run.model->params().names("dec_img.")) {
      Tensor t = run.model->params().get(name);
      if (!t.has_grad()) continue;
      for (double g : t.grad_to_vector()) run.dec_grad_norm += g * g;
    }
    run.dec_grad_norm = std::sqrt(run.dec_grad_norm);
  }

  run.psnr_trained = held_out_psnr(*run.model, 123);
  run.trained = true;
  return run;
}

void criterion_desk_learning(const DeskRun& run, double train_seconds) {
  const double gain = run.psnr_trained - run.psnr_step0;
  const bool pass = run.psnr_trained >= 18.0 &&  // hard floor (target 20)
                    gain >= 6.0 && train_seconds <= 1800.0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "held-out PSNR %.2f dB (target 20, floor 18), step-0 %.2f dB, gain %.2f dB "
                ">= 6, %.0f s <= 1800",
                run.psnr_trained, run.psnr_step0, gain, train_seconds);
  report(6, "desk-scale learning", pass, detail);
  if (run.psnr_trained < 20.0)
    std::printf("    note: PSNR %.2f dB is below the 20 dB target but above the stated 18 dB "
                "floor\n",
                run.psnr_trained);
}

// The step-count ablation runs on a model trained with the multi-step
// (t ~ U(0,1)) objective: that is the protocol the sampling-step comparison
// belongs to, and the objective the mode switch exists for. A model trained
// only at t = 0 is never conditioned on intermediate timesteps, so walking
// it through the Euler path measures nothing about the sampler.
void criterion_step_insensitivity() {
  auto t0 = std::chrono::steady_clock::now();

  ModelConfig mc;
  mc.height = mc.width = 48;
  mc.patch = 8;
  mc.hidden = 48;
  mc.depth = 2;
  mc.heads = 4;
  mc.t_embed_dim = 48;
  mc.decode_feat = 24;
  mc.image_decoder = true;
  mc.seed = 7;

  TrainConfig cfg;
  cfg.model = mc;
  cfg.mode = "multi-step";
  cfg.avas = true;
  cfg.render_views = 4;
  cfg.avas_views = 4;
  cfg.lr = 3e-3;
  cfg.steps = 400;
  cfg.seed = 7;

  SyntheticScene scene = synth_scene(41, 3);  // the same overfit scene
  CameraRig sup = canonical_four(mc.rig_radius, mc.height, mc.width, deg_to_rad(mc.fov_y_deg));
  TrainSample sample = sample_from_cloud(scene.cloud, mc, sup);
  Camera held = camera_at(33.0, 8.0, mc.rig_radius, mc.height, mc.width,
                          deg_to_rad(mc.fov_y_deg));
  Image truth = render_image(scene.cloud, held);

  HeadModel model(mc);
  std::array samples{sample};
  train_loop(model, samples, cfg);

  const uint64_t seed = 555;
  denoise_multistep(model, sample.portrait, sample.portrait_cam, 1, seed);  // warm-up
  auto eval_with_steps = [&](int steps, double* wall) {
    InferenceResult res = denoise_multistep(model, sample.portrait, sample.portrait_cam, steps,
                                            seed);  // paired: same seed and subject
    *wall = res.model_seconds;
    Image render = render_image(res.cloud, held);
    return psnr(render, truth);
  };
  double t1 = 0, t5 = 0;
  double p1 = eval_with_steps(1, &t1);
  double p5 = eval_with_steps(5, &t5);
  const double gap = std::fabs(p1 - p5);
  const double ratio = t5 / t1;
  const bool pass = gap <= 1.0 && ratio >= 3.0 && seconds_since(t0) < 300.0;
  char detail[220];
  std::snprintf(detail, sizeof(detail),
                "multi-step objective: PSNR(1)=%.2f, PSNR(5)=%.2f, gap %.3f dB <= 1.0; "
                "time x%.1f >= 3 (%.2fs vs %.2fs); %.0f s",
                p1, p5, gap, ratio, t5, t1, seconds_since(t0));
  report(7, "step-count insensitivity", pass, detail);
}

void criterion_avas_zero_cost(const DeskRun& run) {
  auto t0 = std::chrono::steady_clock::now();
  test::TempDir dir("acc_avas");
  const std::string full_path = dir.file("full.ckpt");
  save_model(full_path, *run.model, run.cfg);

  LoadedModel full = load_model(full_path);
  LoadedModel stripped = load_model(full_path);
  stripped.model.strip_image_decoder();
  const std::string stripped_path = dir.file("stripped.ckpt");
  save_checkpoint(stripped_path, stripped.model.params(), run.cfg.to_json());
  LoadedModel reloaded = load_model(stripped_path);

  bool identical = true;
  for (uint64_t seed : {1ull, 9ull}) {
    InferenceResult a = infer_onestep(full.model, run.portrait, run.portrait_cam, seed);
    InferenceResult b = infer_onestep(reloaded.model, run.portrait, run.portrait_cam, seed);
    identical = identical && a.cloud.position == b.cloud.position &&
                a.cloud.scale == b.cloud.scale && a.cloud.rotation == b.cloud.rotation &&
                a.cloud.opacity == b.cloud.opacity && a.cloud.color == b.cloud.color;
    Image ra = render_image(a.cloud, run.held_out_cam);
    Image rb = render_image(b.cloud, run.held_out_cam);
    identical = identical && ra.px == rb.px;
  }
  const bool pass = identical && run.losses_finite && run.dec_grad_norm > 0.0 &&
                    seconds_since(t0) < 600.0;
  char detail[200];
  std::snprintf(detail, sizeof(detail),
                "renders bit-identical with/without decoder group, losses finite, decoder "
                "grad norm %.3e > 0, %.1f s",
                run.dec_grad_norm, seconds_since(t0));
  report(8, "zero-cost auxiliary branch", pass, detail);
}

// ---- criterion 9: dataset round trip ---------------------------------------------

std::map<std::string, std::string> tree_bytes(const std::string& root) {
  namespace fs = std::filesystem;
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream is(e.path(), std::ios::binary);
    out[fs::relative(e.path(), root).string()] =
        std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  }
  return out;
}

void criterion_dataset_roundtrip() {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  for (CorpusKind kind :
       {CorpusKind::AiGenerated, CorpusKind::DigitalHuman, CorpusKind::AccessoryRich}) {
    test::TempDir dir(std::string("acc_corpus_") + corpus_kind_name(kind));
    CameraRig rig = circular_rig(5, 2.7, {0.0, 10.0}, 16, 16, deg_to_rad(50));
    std::vector<uint64_t> seeds = {31, 32};
    const std::string r1 = dir.file("one");
    make_dataset(seeds, rig, r1, kind, 2);

    CorpusIndex idx = scan_corpus(r1, kind);
    ok = ok && idx.valid_count() == 2;
    auto scenes = load_scene_views(idx);
    if (kind == CorpusKind::AiGenerated)
      for (auto& sv : scenes) sv.rig = rig;
    const std::string r2 = dir.file("two");
    write_corpus(scenes, r2, kind);
    auto t1 = tree_bytes(r1), t2 = tree_bytes(r2);
    ok = ok && t1 == t2;
  }
  // camera JSON bit-exact round trip
  {
    test::TempDir dir("acc_rig");
    CameraRig rig = random_rig(11, 77, {}, 24, 24, deg_to_rad(48.7));
    write_rig(dir.file("a.json"), rig);
    CameraRig loaded = read_rig(dir.file("a.json"));
    write_rig(dir.file("b.json"), loaded);
    std::ifstream fa(dir.file("a.json")), fb(dir.file("b.json"));
    std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    ok = ok && sa == sb && !sa.empty();
  }
  char detail[120];
  std::snprintf(detail, sizeof(detail),
                "three layouts byte-identical after write->scan->write, %.1f s",
                seconds_since(t0));
  report(9, "dataset round trip", ok && seconds_since(t0) < 30.0, detail);
}

// ---- criterion 10: plucker invariants ---------------------------------------------

void criterion_plucker_invariants() {
  auto t0 = std::chrono::steady_clock::now();
  Rng rng(404);
  double worst_norm = 0, worst_orth = 0;
  const int cameras = 10000;
  for (int k = 0; k < cameras; ++k) {
    Camera cam = camera_at(rng.uniform(0, 360), rng.uniform(-60, 60), rng.uniform(1.5, 4.0), 4, 4,
                           rng.uniform(0.3, 2.4));
    PluckerMap map = plucker_embed(cam);
    for (int i = 0; i < map.height; ++i)
      for (int j = 0; j < map.width; ++j) {
        Vec3 d = map.direction(i, j);
        Vec3 m = map.moment(i, j);
        worst_norm = std::max(worst_norm, std::fabs(norm(d) - 1.0));
        worst_orth = std::max(worst_orth, std::fabs(dot(d, m)));
      }
  }
  char detail[160];
  std::snprintf(detail, sizeof(detail),
                "10^4 cameras: max | ||d||-1 | = %.2e, max |d.m| = %.2e, %.1f s", worst_norm,
                worst_orth, seconds_since(t0));
  report(10, "plucker invariants", worst_norm < 1e-6 && worst_orth < 1e-6 &&
         seconds_since(t0) < 30.0, detail);
}

}  // namespace

int main() {
  std::printf("== acceptance suite ==\n");
  criterion_flow_exactness();
  criterion_onestep_collapse();
  criterion_gradient_integrity();
  criterion_renderer_correctness();
  criterion_shape_laws();

  auto t0 = std::chrono::steady_clock::now();
  std::printf("-- desk-scale training (criteria 6-8 share this run) --\n");
  DeskRun run = desk_training_run();
  double train_seconds = seconds_since(t0);
  criterion_desk_learning(run, train_seconds);
  criterion_step_insensitivity();
  criterion_avas_zero_cost(run);

  criterion_dataset_roundtrip();
  criterion_plucker_invariants();

  std::printf("== %s ==\n", g_failures == 0 ? "all criteria passed" : "FAILURES present");
  return g_failures == 0 ? 0 : 1;
}
