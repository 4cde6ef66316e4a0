#include "gshead/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "gshead/dataset.hpp"
#include "gshead/trainer.hpp"

namespace gshead {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct OutDir {
  fs::path dir;
  std::vector<std::string> files;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  explicit OutDir(const std::string& path) : dir(path) { fs::create_directories(dir); }
  std::string file(const std::string& name) {
    files.push_back(name);
    return (dir / name).string();
  }
  void write_manifest(const std::string& command) {
    ojson j;
    j["command"] = command;
    j["files"] = files;
    j["seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream os(dir / "manifest.json", std::ios::trunc);
    os << j.dump(2) << "\n";
  }
};

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

Camera conditioning_camera(const LoadedModel& lm, const std::string& rig_path, int view) {
  if (rig_path.empty()) return lm.model.front_camera();
  CameraRig rig = read_rig(rig_path);
  if (view < 0 || view >= int(rig.cameras.size()))
    throw std::runtime_error("--view out of range for rig " + rig_path);
  return rig.cameras[size_t(view)];
}

void write_infer_outputs(OutDir& out, const InferenceResult& res, uint64_t seed, int steps,
                         const char* command) {
  write_ply(out.file("cloud.ply"), res.cloud);
  ojson j;
  j["steps"] = steps;
  j["seed"] = seed;
  j["model_calls"] = res.model_calls;
  j["model_seconds"] = res.model_seconds;
  j["points"] = res.cloud.count();
  std::ofstream os(out.file(std::string(command) + ".json"), std::ios::trunc);
  os << j.dump(2) << "\n";
  out.write_manifest(command);
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"single-portrait full-head 3D Gaussian reconstruction"};
  app.require_subcommand(1);

  // rig ------------------------------------------------------------------
  auto* rig_cmd = app.add_subcommand("rig", "generate a camera rig JSON");
  std::string rig_kind = "circular", rig_out;
  int rig_n = 40, rig_res = 64;
  double rig_radius = 2.7, rig_fov = 50.0;
  std::vector<double> rig_elev = {-20.0, 0.0, 20.0};
  uint64_t rig_seed = 0;
  double rig_rmin = 2.2, rig_rmax = 3.2;
  rig_cmd->add_option("--kind", rig_kind, "circular|random|canonical")
      ->check(CLI::IsMember({"circular", "random", "canonical"}));
  rig_cmd->add_option("--n", rig_n, "camera count");
  rig_cmd->add_option("--radius", rig_radius, "orbit radius");
  rig_cmd->add_option("--fov", rig_fov, "vertical fov, degrees");
  rig_cmd->add_option("--res", rig_res, "image resolution (square)");
  rig_cmd->add_option("--elev", rig_elev, "elevation rings, degrees")->delimiter(',');
  rig_cmd->add_option("--seed", rig_seed, "seed (random rigs)");
  rig_cmd->add_option("--rmin", rig_rmin, "min radius (random rigs)");
  rig_cmd->add_option("--rmax", rig_rmax, "max radius (random rigs)");
  rig_cmd->add_option("--out", rig_out, "output JSON path")->required();

  // synth ----------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic corpus");
  std::vector<uint64_t> synth_seeds = {1, 2, 3, 4};
  std::string synth_out, synth_kind = "digital-human", synth_rig_path;
  int synth_complexity = 3, synth_extra = 8, synth_res = 64;
  double synth_radius = 2.7, synth_fov = 50.0;
  bool synth_overwrite = false;
  synth_cmd->add_option("--seeds", synth_seeds, "scene seeds")->delimiter(',');
  synth_cmd->add_option("--kind", synth_kind, "corpus layout")
      ->check(CLI::IsMember({"ai-generated", "digital-human", "accessory-rich"}));
  synth_cmd->add_option("--rig", synth_rig_path, "rig JSON (default: canonical four + ring)");
  synth_cmd->add_option("--complexity", synth_complexity, "scene complexity");
  synth_cmd->add_option("--extra-views", synth_extra, "ring views beyond the canonical four");
  synth_cmd->add_option("--res", synth_res, "image resolution (square)");
  synth_cmd->add_option("--radius", synth_radius, "orbit radius");
  synth_cmd->add_option("--fov", synth_fov, "vertical fov, degrees");
  synth_cmd->add_flag("--overwrite", synth_overwrite, "replace an existing corpus");
  synth_cmd->add_option("--out", synth_out, "corpus root")->required();

  // train ----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train on a corpus");
  std::string train_config, train_corpus, train_kind = "digital-human", train_out,
              train_avas = "", train_rig;
  int64_t train_steps = -1;
  int64_t train_seed = -1;
  train_cmd->add_option("--config", train_config, "TrainConfig JSON file");
  train_cmd->add_option("--corpus", train_corpus, "corpus root")->required();
  train_cmd->add_option("--kind", train_kind, "corpus layout")
      ->check(CLI::IsMember({"ai-generated", "digital-human", "accessory-rich"}));
  train_cmd->add_option("--rig", train_rig, "assumed rig JSON (ai-generated corpora)");
  train_cmd->add_option("--steps", train_steps, "override step count");
  train_cmd->add_option("--seed", train_seed, "override seed");
  train_cmd->add_option("--avas", train_avas, "on|off")->check(CLI::IsMember({"on", "off", ""}));
  train_cmd->add_option("--out", train_out, "output directory")->required();

  // infer ------------------------------------------------------------------
  auto* infer_cmd = app.add_subcommand("infer", "one-step reconstruction from a portrait");
  std::string infer_ckpt, infer_image, infer_out, infer_rig;
  int infer_view = 0;
  uint64_t infer_seed = 0;
  infer_cmd->add_option("--checkpoint", infer_ckpt, "model checkpoint")->required();
  infer_cmd->add_option("--image", infer_image, "portrait PNG")->required();
  infer_cmd->add_option("--rig", infer_rig, "conditioning rig JSON (default: canonical front)");
  infer_cmd->add_option("--view", infer_view, "conditioning view id in --rig");
  infer_cmd->add_option("--seed", infer_seed, "noise seed");
  infer_cmd->add_option("--out", infer_out, "output directory")->required();

  // denoise ----------------------------------------------------------------
  auto* den_cmd = app.add_subcommand("denoise", "multi-step Euler sampling");
  std::string den_ckpt, den_image, den_out, den_rig;
  int den_view = 0, den_steps = 1;
  uint64_t den_seed = 0;
  den_cmd->add_option("--checkpoint", den_ckpt, "model checkpoint")->required();
  den_cmd->add_option("--image", den_image, "portrait PNG")->required();
  den_cmd->add_option("--steps", den_steps, "denoising steps (1 = one-step path)");
  den_cmd->add_option("--rig", den_rig, "conditioning rig JSON");
  den_cmd->add_option("--view", den_view, "conditioning view id in --rig");
  den_cmd->add_option("--seed", den_seed, "noise seed");
  den_cmd->add_option("--out", den_out, "output directory")->required();

  // render -----------------------------------------------------------------
  auto* render_cmd = app.add_subcommand("render", "render a PLY cloud from a rig");
  std::string render_ply, render_rig, render_out;
  render_cmd->add_option("--ply", render_ply, "gaussian point cloud")->required();
  render_cmd->add_option("--rig", render_rig, "camera rig JSON")->required();
  render_cmd->add_option("--out", render_out, "output directory")->required();

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM report over a corpus");
  std::string eval_ckpt, eval_corpus, eval_kind = "digital-human", eval_out, eval_rig;
  uint64_t eval_seed = 0;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--corpus", eval_corpus, "corpus root")->required();
  eval_cmd->add_option("--kind", eval_kind, "corpus layout")
      ->check(CLI::IsMember({"ai-generated", "digital-human", "accessory-rich"}));
  eval_cmd->add_option("--rig", eval_rig, "assumed rig JSON (ai-generated corpora)");
  eval_cmd->add_option("--seed", eval_seed, "noise seed");
  eval_cmd->add_option("--out", eval_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*rig_cmd) {
      const double fov = deg_to_rad(rig_fov);
      CameraRig rig;
      if (rig_kind == "canonical") {
        rig = canonical_four(rig_radius, rig_res, rig_res, fov);
      } else if (rig_kind == "random") {
        RandomRigBounds b;
        b.r_min = rig_rmin;
        b.r_max = rig_rmax;
        rig = random_rig(rig_n, rig_seed, b, rig_res, rig_res, fov);
      } else {
        rig = circular_rig(rig_n, rig_radius, rig_elev, rig_res, rig_res, fov);
      }
      write_rig(rig_out, rig);
      std::cout << "wrote " << rig_out << " (" << rig.cameras.size() << " views)\n";
    } else if (*synth_cmd) {
      CameraRig rig = synth_rig_path.empty()
                          ? default_training_rig(synth_extra, synth_radius, synth_res, synth_res,
                                                 deg_to_rad(synth_fov))
                          : read_rig(synth_rig_path);
      make_dataset(synth_seeds, rig, synth_out, corpus_kind_from_name(synth_kind),
                   synth_complexity, synth_overwrite);
      std::cout << "wrote " << synth_seeds.size() << " identities under " << synth_out << "\n";
    } else if (*train_cmd) {
      TrainConfig cfg;
      if (!train_config.empty()) cfg = TrainConfig::from_json(slurp(train_config));
      if (train_steps > 0) cfg.steps = int(train_steps);
      if (train_seed >= 0) {
        cfg.seed = uint64_t(train_seed);
        cfg.model.seed = uint64_t(train_seed);
      }
      if (train_avas == "on") cfg.avas = cfg.model.image_decoder = true;
      if (train_avas == "off") {
        cfg.avas = false;
        cfg.model.image_decoder = false;
      }
      cfg.validate();
      CorpusIndex index = scan_corpus(train_corpus, corpus_kind_from_name(train_kind));
      CameraRig assumed;
      const bool have_rig = !train_rig.empty();
      if (have_rig) assumed = read_rig(train_rig);
      std::vector<TrainSample> samples =
          samples_from_corpus(index, cfg, have_rig ? &assumed : nullptr);
      OutDir out(train_out);
      {
        std::ofstream os(out.file("config.json"), std::ios::trunc);
        os << cfg.to_json() << "\n";
      }
      HeadModel model(cfg.model);
      train_loop(model, samples, cfg, out.file("log.jsonl"), [](int step, const StepResult& r) {
        if (step % 25 == 0)
          std::cout << "step " << step << " loss " << r.loss << " lr " << r.lr << "\n";
      });
      save_model(out.file("checkpoint.ckpt"), model, cfg);
      out.write_manifest("train");
      std::cout << "checkpoint at " << (fs::path(train_out) / "checkpoint.ckpt").string() << "\n";
    } else if (*infer_cmd) {
      LoadedModel lm = load_model(infer_ckpt);
      Image portrait = read_png(infer_image);
      Camera cam = conditioning_camera(lm, infer_rig, infer_view);
      OutDir out(infer_out);
      InferenceResult res = infer_onestep(lm.model, portrait, cam, infer_seed);
      write_infer_outputs(out, res, infer_seed, 1, "infer");
      std::cout << "one-step reconstruction: " << res.cloud.count() << " gaussians in "
                << res.model_seconds << " s\n";
    } else if (*den_cmd) {
      LoadedModel lm = load_model(den_ckpt);
      Image portrait = read_png(den_image);
      Camera cam = conditioning_camera(lm, den_rig, den_view);
      OutDir out(den_out);
      InferenceResult res = denoise_multistep(lm.model, portrait, cam, den_steps, den_seed);
      write_infer_outputs(out, res, den_seed, den_steps, "denoise");
      std::cout << den_steps << "-step reconstruction: " << res.model_calls << " model calls in "
                << res.model_seconds << " s\n";
    } else if (*render_cmd) {
      GaussianCloud cloud = read_ply(render_ply);
      CameraRig rig = read_rig(render_rig);
      OutDir out(render_out);
      for (size_t v = 0; v < rig.cameras.size(); ++v) {
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03zu.png", v);
        write_png(out.file(name), render_image(cloud, rig.cameras[v]));
      }
      out.write_manifest("render");
      std::cout << "rendered " << rig.cameras.size() << " views to " << render_out << "\n";
    } else if (*eval_cmd) {
      LoadedModel lm = load_model(eval_ckpt);
      CorpusIndex index = scan_corpus(eval_corpus, corpus_kind_from_name(eval_kind));
      CameraRig assumed;
      const bool have_rig = !eval_rig.empty();
      if (have_rig) assumed = read_rig(eval_rig);
      MetricReport report = evaluate_corpus(lm.model, index, eval_seed,
                                            have_rig ? &assumed : nullptr);
      OutDir out(eval_out);
      {
        std::ofstream os(out.file("report.json"), std::ios::trunc);
        os << report_to_json(report);
      }
      out.write_manifest("eval");
      std::cout << "psnr " << report.psnr_mean << " +- " << report.psnr_stderr << ", ssim "
                << report.ssim_mean << " +- " << report.ssim_stderr << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace gshead
