#include "gshead/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "gshead/rng.hpp"
#include "gshead/splat.hpp"

namespace gshead {

namespace fs = std::filesystem;

const char* corpus_kind_name(CorpusKind kind) {
  switch (kind) {
    case CorpusKind::AiGenerated: return "ai-generated";
    case CorpusKind::DigitalHuman: return "digital-human";
    case CorpusKind::AccessoryRich: return "accessory-rich";
  }
  return "?";
}

CorpusKind corpus_kind_from_name(const std::string& name) {
  if (name == "ai-generated") return CorpusKind::AiGenerated;
  if (name == "digital-human") return CorpusKind::DigitalHuman;
  if (name == "accessory-rich") return CorpusKind::AccessoryRich;
  throw std::runtime_error("unknown corpus kind '" + name + "'");
}

size_t CorpusIndex::valid_count() const {
  size_t n = 0;
  for (const auto& r : records) n += r.valid ? 1 : 0;
  return n;
}

static std::vector<std::string> sorted_entries(const fs::path& dir, bool dirs) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs && e.is_directory()) names.push_back(e.path().filename().string());
    if (!dirs && e.is_regular_file()) names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

static std::vector<std::string> png_views(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& name : sorted_entries(dir, false))
    if (name.size() > 4 && name.substr(name.size() - 4) == ".png") out.push_back(name);
  return out;
}

CorpusIndex scan_corpus(const std::string& root, CorpusKind kind) {
  CorpusIndex index;
  index.kind = kind;
  index.root = root;
  if (!fs::exists(root)) throw std::runtime_error("scan_corpus: root does not exist: " + root);
  for (const auto& head : sorted_entries(root, true)) {
    const fs::path head_dir = fs::path(root) / head;
    if (kind == CorpusKind::AiGenerated) {
      CorpusRecord rec;
      rec.head_id = head;
      for (const auto& v : png_views(head_dir)) rec.view_paths.push_back((head_dir / v).string());
      if (rec.view_paths.empty()) {
        rec.valid = false;
        rec.reason = "no view images";
      }
      index.records.push_back(std::move(rec));
      continue;
    }
    const fs::path camera = head_dir / "CAMERA_PARAMETERS.json";
    for (const auto& group : sorted_entries(head_dir, true)) {
      CorpusRecord rec;
      rec.head_id = head;
      rec.group_id = group;
      rec.camera_path = camera.string();
      for (const auto& v : png_views(head_dir / group))
        rec.view_paths.push_back((head_dir / group / v).string());
      if (!fs::exists(camera)) {
        rec.valid = false;
        rec.reason = "missing CAMERA_PARAMETERS.json";
      } else {
        try {
          CameraRig rig = read_rig(camera.string());
          if (rig.cameras.size() != rec.view_paths.size()) {
            rec.valid = false;
            rec.reason = "camera file lists " + std::to_string(rig.cameras.size()) +
                         " views, found " + std::to_string(rec.view_paths.size()) + " images";
          }
        } catch (const std::exception& e) {
          rec.valid = false;
          rec.reason = std::string("unreadable camera file: ") + e.what();
        }
      }
      if (rec.view_paths.empty() && rec.valid) {
        rec.valid = false;
        rec.reason = "no view images";
      }
      index.records.push_back(std::move(rec));
    }
  }
  return index;
}

static std::string view_name(size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu.png", i);
  return buf;
}

static void write_readme(const fs::path& root, CorpusKind kind) {
  std::ofstream os(root / "README.md", std::ios::binary | std::ios::trunc);
  os << "# " << corpus_kind_name(kind) << " corpus\n\n";
  if (kind == CorpusKind::AiGenerated) {
    os << "Layout: `{HEAD_ID}/{VIEW_ID}.png`. No camera files; consumers supply an\n"
          "assumed rig.\n";
  } else if (kind == CorpusKind::DigitalHuman) {
    os << "Layout: `{HEAD_ID}/{EXPRESSION_ID}/{VIEW_ID}.png` with one\n"
          "`{HEAD_ID}/CAMERA_PARAMETERS.json` per identity describing every view\n"
          "(id, position, look_at, up; shared fov and resolution).\n";
  } else {
    os << "Layout: `{HEAD_ID}/{ACCESSORY_ID}/{VIEW_ID}.png` with one\n"
          "`{HEAD_ID}/CAMERA_PARAMETERS.json` per identity describing every view\n"
          "(id, position, look_at, up; shared fov and resolution).\n";
  }
  os << "\nView ids are zero-padded (`000.png`, `001.png`, ...) in rig order.\n";
}

void write_corpus(std::span<const SceneViews> scenes, const std::string& root, CorpusKind kind,
                  bool overwrite) {
  const fs::path root_path(root);
  if (fs::exists(root_path) && !fs::is_empty(root_path)) {
    if (!overwrite)
      throw std::runtime_error("write_corpus: root exists and is not empty: " + root);
    fs::remove_all(root_path);
  }
  fs::create_directories(root_path);

  std::map<std::string, const CameraRig*> head_rigs;
  for (const auto& scene : scenes) {
    if (kind != CorpusKind::AiGenerated) {
      if (scene.views.size() != scene.rig.cameras.size())
        throw std::runtime_error("write_corpus: scene '" + scene.head_id + "/" + scene.group_id +
                                 "' has " + std::to_string(scene.views.size()) + " views but " +
                                 std::to_string(scene.rig.cameras.size()) + " cameras");
      auto [it, inserted] = head_rigs.emplace(scene.head_id, &scene.rig);
      if (!inserted && rig_to_json(*it->second) != rig_to_json(scene.rig))
        throw std::runtime_error("write_corpus: head '" + scene.head_id +
                                 "' has inconsistent rigs across groups");
    }
    fs::path dir = root_path / scene.head_id;
    if (kind != CorpusKind::AiGenerated) dir /= scene.group_id.empty() ? "000" : scene.group_id;
    fs::create_directories(dir);
    for (size_t v = 0; v < scene.views.size(); ++v)
      write_png((dir / view_name(v)).string(), scene.views[v]);
  }
  for (const auto& [head, rig] : head_rigs)
    write_rig((root_path / head / "CAMERA_PARAMETERS.json").string(), *rig);
  write_readme(root_path, kind);
}

std::vector<SceneViews> load_scene_views(const CorpusIndex& index) {
  std::vector<SceneViews> out;
  for (const auto& rec : index.records) {
    if (!rec.valid) continue;
    SceneViews sv;
    sv.head_id = rec.head_id;
    sv.group_id = rec.group_id;
    for (const auto& p : rec.view_paths) sv.views.push_back(read_png(p));
    if (!rec.camera_path.empty()) sv.rig = read_rig(rec.camera_path);
    out.push_back(std::move(sv));
  }
  return out;
}

// ---- synthetic scenes ----------------------------------------------------------

namespace {

void push_gaussian(GaussianCloud& c, const Vec3& pos, const Vec3& scale, const Quat& rot,
                   double opacity, const Vec3& color) {
  c.position.insert(c.position.end(), {pos.x, pos.y, pos.z});
  c.scale.insert(c.scale.end(), {scale.x, scale.y, scale.z});
  Quat q = rot.normalized();
  c.rotation.insert(c.rotation.end(), {q.w, q.x, q.y, q.z});
  c.opacity.push_back(opacity);
  c.color.insert(c.color.end(), {color.x, color.y, color.z});
}

double clamp01(double v) { return std::min(0.95, std::max(0.05, v)); }

}  // namespace

SyntheticScene synth_scene(uint64_t seed, int complexity) {
  if (complexity < 1) throw std::runtime_error("synth_scene: complexity must be >= 1");
  SyntheticScene scene;
  scene.seed = seed;
  scene.complexity = complexity;
  Rng rng(mix_seed(seed, 0x5ce11e));

  const Vec3 axes{0.55, 0.68, 0.58};  // head-ish ellipsoid inside the unit sphere
  Vec3 base{0.55 + 0.35 * rng.uniform(), 0.45 + 0.3 * rng.uniform(), 0.4 + 0.3 * rng.uniform()};
  const double phase = rng.uniform(0.0, 2.0 * kPi);

  if (complexity == 1) {
    push_gaussian(scene.cloud, {0, 0, 0}, axes, Quat{}, 0.92,
                  {clamp01(base.x), clamp01(base.y), clamp01(base.z)});
    scene.cloud.validate();
    return scene;
  }

  const int shell = 24 * complexity;
  for (int i = 0; i < shell; ++i) {
    const double zu = 1.0 - 2.0 * (double(i) + 0.5) / double(shell);
    const double az = double(i) * 2.39996322972865332 + phase;
    const double r = std::sqrt(std::max(0.0, 1.0 - zu * zu));
    Vec3 dir{r * std::cos(az), zu, r * std::sin(az)};
    Vec3 pos{dir.x * axes.x, dir.y * axes.y, dir.z * axes.z};
    pos = pos + Vec3{rng.normal(), rng.normal(), rng.normal()} * 0.015;
    const double s = 0.16 + 0.05 * rng.uniform();
    // low-frequency color over the shell so views differ smoothly
    Vec3 col{base.x + 0.22 * std::sin(2.1 * pos.x + phase) + 0.06 * rng.normal(),
             base.y + 0.22 * std::sin(1.7 * pos.y + 1.3 * phase) + 0.06 * rng.normal(),
             base.z + 0.22 * std::sin(1.9 * pos.z + 2.1 * phase) + 0.06 * rng.normal()};
    push_gaussian(scene.cloud, pos, {s, s * (0.8 + 0.4 * rng.uniform()), s}, Quat{},
                  0.55 + 0.25 * rng.uniform(), {clamp01(col.x), clamp01(col.y), clamp01(col.z)});
  }
  if (complexity >= 2) {
    // eye patches on the +z face
    for (double side : {-1.0, 1.0}) {
      push_gaussian(scene.cloud, {side * 0.22, 0.14, axes.z * 0.92}, {0.09, 0.07, 0.06}, Quat{},
                    0.9, {0.12, 0.12, 0.2});
    }
  }
  if (complexity >= 3) {
    push_gaussian(scene.cloud, {0, -0.05, axes.z * 1.02}, {0.08, 0.11, 0.09}, Quat{}, 0.85,
                  {clamp01(base.x + 0.1), clamp01(base.y - 0.1), clamp01(base.z - 0.1)});
    // hair cap
    for (int i = 0; i < 10; ++i) {
      double az = 2.0 * kPi * double(i) / 10.0;
      Vec3 pos{0.4 * axes.x * std::cos(az), axes.y * 0.85, 0.4 * axes.z * std::sin(az) - 0.1};
      push_gaussian(scene.cloud, pos, {0.14, 0.1, 0.14}, Quat{}, 0.8, {0.15, 0.1, 0.08});
    }
  }
  if (complexity >= 4) {
    push_gaussian(scene.cloud, {0, -0.28, axes.z * 0.95}, {0.12, 0.05, 0.05}, Quat{}, 0.9,
                  {0.55, 0.2, 0.2});
  }
  if (complexity >= 5) {
    for (double side : {-1.0, 1.0})
      push_gaussian(scene.cloud, {side * axes.x * 0.98, 0.0, 0.0}, {0.06, 0.1, 0.08}, Quat{},
                    0.85, {clamp01(base.x - 0.05), clamp01(base.y - 0.12), clamp01(base.z - 0.12)});
  }
  scene.cloud.validate();
  return scene;
}

void make_dataset(std::span<const uint64_t> seeds, const CameraRig& rig, const std::string& root,
                  CorpusKind kind, int complexity, bool overwrite) {
  if (rig.cameras.empty()) throw std::runtime_error("make_dataset: empty rig");
  std::vector<SceneViews> scenes;
  char head[32];
  for (size_t i = 0; i < seeds.size(); ++i) {
    SyntheticScene scene = synth_scene(seeds[i], complexity);
    SceneViews sv;
    std::snprintf(head, sizeof(head), "%03zu", i);
    sv.head_id = head;
    sv.group_id = "000";
    sv.rig = rig;
    for (const Camera& cam : rig.cameras) sv.views.push_back(render_image(scene.cloud, cam));
    scenes.push_back(std::move(sv));
  }
  write_corpus(scenes, root, kind, overwrite);
}

}  // namespace gshead
