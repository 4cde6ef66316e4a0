#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "gshead/camera.hpp"
#include "gshead/cli.hpp"
#include "gshead/dataset.hpp"
#include "testutil.hpp"

using namespace gshead;
namespace fs = std::filesystem;

namespace {

int run(std::vector<std::string> args) {
  std::vector<const char*> argv = {"gshead"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(int(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("unknown subcommand exits 2") { CHECK(run({"frobnicate"}) == 2); }

TEST_CASE("unknown flag exits 2") {
  test::TempDir dir("cli_badflag");
  CHECK(run({"rig", "--out", dir.file("r.json"), "--frobnicate", "3"}) == 2);
}

TEST_CASE("missing required flag exits 2") { CHECK(run({"rig"}) == 2); }

TEST_CASE("rig subcommand writes the requested views") {
  test::TempDir dir("cli_rig");
  const std::string out = dir.file("rig.json");
  CHECK(run({"rig", "--n", "40", "--elev", "-20,0,20", "--out", out}) == 0);
  CameraRig rig = read_rig(out);
  CHECK(rig.cameras.size() == 40);
}

TEST_CASE("rig generation is deterministic") {
  test::TempDir dir("cli_rig_det");
  const std::string a = dir.file("a.json");
  const std::string b = dir.file("b.json");
  CHECK(run({"rig", "--kind", "random", "--n", "12", "--seed", "9", "--out", a}) == 0);
  CHECK(run({"rig", "--kind", "random", "--n", "12", "--seed", "9", "--out", b}) == 0);
  CHECK(slurp(a) == slurp(b));
}

TEST_CASE("synth writes a scannable corpus") {
  test::TempDir dir("cli_synth");
  const std::string corpus = dir.file("corpus");
  CHECK(run({"synth", "--seeds", "1,2", "--res", "16", "--extra-views", "2", "--complexity", "2",
             "--out", corpus}) == 0);
  CorpusIndex idx = scan_corpus(corpus, CorpusKind::DigitalHuman);
  CHECK(idx.valid_count() == 2);

  // domain error: refusing to overwrite
  CHECK(run({"synth", "--seeds", "1", "--res", "16", "--out", corpus}) == 1);
}

TEST_CASE("train, infer, denoise, render, eval round trip at desk scale") {
  test::TempDir dir("cli_e2e");
  const std::string corpus = dir.file("corpus");
  REQUIRE(run({"synth", "--seeds", "5", "--res", "16", "--extra-views", "2", "--complexity", "2",
               "--out", corpus}) == 0);

  // a tiny training config
  const std::string cfg_path = dir.file("cfg.json");
  {
    std::ofstream os(cfg_path);
    os << R"({"model":{"height":16,"width":16,"patch":8,"hidden":16,"depth":1,"heads":2,)"
       << R"("t_embed_dim":16,"decode_feat":8,"seed":3},)"
       << R"("render_views":2,"avas_views":2,"steps":3,"lr":1e-3,"seed":3})";
  }
  const std::string run_dir = dir.file("run");
  REQUIRE(run({"train", "--config", cfg_path, "--corpus", corpus, "--out", run_dir}) == 0);
  const std::string ckpt = (fs::path(run_dir) / "checkpoint.ckpt").string();
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(fs::path(run_dir) / "log.jsonl"));
  CHECK(fs::exists(fs::path(run_dir) / "manifest.json"));

  const std::string portrait = corpus + "/000/000/000.png";
  const std::string out1 = dir.file("infer1");
  const std::string out2 = dir.file("infer2");
  REQUIRE(run({"infer", "--checkpoint", ckpt, "--image", portrait, "--seed", "7", "--out",
               out1}) == 0);
  REQUIRE(run({"infer", "--checkpoint", ckpt, "--image", portrait, "--seed", "7", "--out",
               out2}) == 0);
  CHECK(slurp(out1 + "/cloud.ply") == slurp(out2 + "/cloud.ply"));
  CHECK(!slurp(out1 + "/cloud.ply").empty());

  // denoise --steps 1 twice with the same seed: identical clouds
  const std::string d1 = dir.file("den1");
  const std::string d2 = dir.file("den2");
  REQUIRE(run({"denoise", "--checkpoint", ckpt, "--image", portrait, "--steps", "1", "--seed",
               "7", "--out", d1}) == 0);
  REQUIRE(run({"denoise", "--checkpoint", ckpt, "--image", portrait, "--steps", "1", "--seed",
               "7", "--out", d2}) == 0);
  CHECK(slurp(d1 + "/cloud.ply") == slurp(d2 + "/cloud.ply"));
  CHECK(slurp(d1 + "/cloud.ply") == slurp(out1 + "/cloud.ply"));  // infer == denoise(1)

  // multi-step path works on an avas-trained checkpoint
  const std::string d5 = dir.file("den5");
  REQUIRE(run({"denoise", "--checkpoint", ckpt, "--image", portrait, "--steps", "3", "--seed",
               "7", "--out", d5}) == 0);
  CHECK(fs::exists(fs::path(d5) / "cloud.ply"));

  // render the cloud from a fresh rig
  const std::string rig_path = dir.file("rig.json");
  REQUIRE(run({"rig", "--n", "4", "--elev", "0", "--res", "16", "--out", rig_path}) == 0);
  const std::string render_dir = dir.file("render");
  REQUIRE(run({"render", "--ply", out1 + "/cloud.ply", "--rig", rig_path, "--out", render_dir}) ==
          0);
  CHECK(fs::exists(fs::path(render_dir) / "view_000.png"));
  CHECK(fs::exists(fs::path(render_dir) / "view_003.png"));

  // evaluation report
  const std::string eval_dir = dir.file("eval");
  REQUIRE(run({"eval", "--checkpoint", ckpt, "--corpus", corpus, "--seed", "7", "--out",
               eval_dir}) == 0);
  std::string report = slurp(eval_dir + "/report.json");
  CHECK(report.find("psnr_mean") != std::string::npos);

  // missing checkpoint is a domain error
  CHECK(run({"infer", "--checkpoint", dir.file("nope.ckpt"), "--image", portrait, "--out",
             dir.file("x")}) == 1);
}
