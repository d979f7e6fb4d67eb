#pragma once

// Dataset assembly and the line-delimited JSON interchange formats:
// scenes.jsonl (scene graph + raw feature bundle per line, 9 significant
// digits) and questions.jsonl (one QA item per line), plus the image-id
// hash split and run manifests.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vqr/lang.hpp"
#include "vqr/world.hpp"

namespace vqr::io {

enum class Split { train, val, test };
const std::string& split_name(Split s);

/// Deterministic split by image id: 70 / 15 / 15 train/val/test.
Split split_of(const std::string& image_id);

struct Dataset {
  std::uint64_t master_seed = 0;
  world::Quality quality = world::Quality::high;
  std::vector<world::SceneGraph> scenes;
  std::vector<world::FeatureBundle> raw_bundles;  // parallel to scenes, no widening
  std::vector<lang::QAItem> questions;
  std::map<std::string, std::size_t> scene_index;  // image_id -> position

  const world::SceneGraph& scene_of(const std::string& image_id) const;
  const world::FeatureBundle& bundle_of(const std::string& image_id) const;
};

struct GenConfig {
  int num_images = 100;
  int questions_per_image = 5;
  world::Quality quality = world::Quality::high;
  world::WorldConfig world;
  Eigen::Index grid = 7;
  Eigen::Index det_dim = 64;
  Eigen::Index cell_dim = 32;
};

/// Deterministic dataset from one master seed. Scenes and questions depend
/// only on (seed, counts); feature noise additionally scales with quality, so
/// datasets regenerated at different qualities share every scene, question
/// and underlying noise draw.
Dataset gen_dataset(std::uint64_t master_seed, const GenConfig& cfg);

void write_scenes_jsonl(const Dataset& ds, const std::string& path);
void write_questions_jsonl(const Dataset& ds, const std::string& path);
void write_splits_json(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& scenes_path, const std::string& questions_path);

/// Shortest-of-9-significant-digits decimal used in scenes.jsonl.
std::string fmt9(double v);

/// Streaming FNV-1a 64 over a file's bytes, hex encoded.
std::string file_fingerprint(const std::string& path);

/// Run manifest written next to every command's outputs; re-running with the
/// same inputs reproduces the same output hashes.
struct RunManifest {
  std::string tool_version;
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t master_seed = 0;
  std::string config_hash;
  std::map<std::string, std::string> input_hashes;
  std::map<std::string, std::string> output_hashes;

  void write(const std::string& path) const;
};

}  // namespace vqr::io
