#pragma once

#include <span>
#include <string>

#include "gshead/camera.hpp"
#include "gshead/gsdecode.hpp"
#include "gshead/image.hpp"

namespace gshead {

// The three corpus layouts. ai-generated nests {HEAD_ID}/{VIEW_ID}.png with
// no camera file; digital-human adds an {EXPRESSION_ID} level and a
// per-identity CAMERA_PARAMETERS.json; accessory-rich swaps the expression
// level for {ACCESSORY_ID}.
enum class CorpusKind { AiGenerated, DigitalHuman, AccessoryRich };

const char* corpus_kind_name(CorpusKind kind);
CorpusKind corpus_kind_from_name(const std::string& name);

struct CorpusRecord {
  std::string head_id;
  std::string group_id;  // expression/accessory id; empty for ai-generated
  std::vector<std::string> view_paths;  // lexicographic by view id
  std::string camera_path;
  bool valid = true;
  std::string reason;  // set when !valid
};

struct CorpusIndex {
  CorpusKind kind = CorpusKind::AiGenerated;
  std::string root;
  std::vector<CorpusRecord> records;

  size_t valid_count() const;
};

// Indexes every record under root; malformed records are kept and flagged.
CorpusIndex scan_corpus(const std::string& root, CorpusKind kind);

struct SceneViews {
  std::string head_id;
  std::string group_id;  // ignored for ai-generated
  std::vector<Image> views;
  CameraRig rig;  // written as CAMERA_PARAMETERS.json where the layout has one
};

// Writes the exact tree layout plus a README.md describing it. Refuses an
// existing non-empty root unless overwrite is set.
void write_corpus(std::span<const SceneViews> scenes, const std::string& root, CorpusKind kind,
                  bool overwrite = false);

// Reads images and rigs back for every valid record.
std::vector<SceneViews> load_scene_views(const CorpusIndex& index);

// Seeded head-like arrangement of colored anisotropic Gaussians: an
// ellipsoidal shell plus feature blobs, scaled to the unit sphere.
struct SyntheticScene {
  uint64_t seed = 0;
  int complexity = 1;
  GaussianCloud cloud;
};

SyntheticScene synth_scene(uint64_t seed, int complexity);

// synth_scene + render + write_corpus for each seed.
void make_dataset(std::span<const uint64_t> seeds, const CameraRig& rig, const std::string& root,
                  CorpusKind kind, int complexity = 3, bool overwrite = false);

}  // namespace gshead
