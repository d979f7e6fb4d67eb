#pragma once

// Synthetic scene graphs and the three feature sources derived from them:
// per-object detection features (attribute content only, no position), a
// spatial grid (content placed by layout), and normalized bounding boxes.

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

#include "vqr/rng.hpp"

namespace vqr::world {

enum class ObjShape { cube, sphere, pyramid, cylinder };
enum class Color { red, green, blue, yellow, gray };
enum class SizeClass { small, large };
enum class Material { matte, shiny };

inline constexpr int kNumShapes = 4;
inline constexpr int kNumColors = 5;
inline constexpr int kNumSizes = 2;
inline constexpr int kNumMaterials = 2;
inline constexpr int kAttrDim = kNumShapes + kNumColors + kNumSizes + kNumMaterials;  // 13

const std::string& shape_name(ObjShape s);
const std::string& color_name(Color c);
const std::string& size_name(SizeClass s);
const std::string& material_name(Material m);
ObjShape shape_from_name(const std::string& s);
Color color_from_name(const std::string& s);
SizeClass size_from_name(const std::string& s);
Material material_from_name(const std::string& s);

/// Pixel-space box, top-left origin.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;
  double cx() const { return x + w / 2.0; }
  double cy() const { return y + h / 2.0; }
};

struct SceneObject {
  int id = 0;
  ObjShape shape = ObjShape::cube;
  Color color = Color::red;
  SizeClass size = SizeClass::small;
  Material material = Material::matte;
  BBox bbox;
};

struct SceneGraph {
  std::string image_id;
  double width = 224, height = 224;
  std::vector<SceneObject> objects;
};

struct WorldConfig {
  int min_objects = 3;
  int max_objects = 8;
  double canvas_w = 224, canvas_h = 224;
  double min_center_sep = 44;  // pairwise center distance lower bound
  int max_place_tries = 100;   // per object
  int max_scene_tries = 50;    // whole-scene restarts
  std::array<double, 2> small_extent{14, 26};  // sampled w/h range per size class
  std::array<double, 2> large_extent{36, 56};
};

/// Object count uniform in [min, max], attributes uniform, boxes
/// rejection-sampled to keep centers separated. Deterministic per rng seed.
SceneGraph gen_scene(Rng& rng, const WorldConfig& cfg, std::string image_id = "img");

/// (x, y, w, h) pixels -> (center x, center y, width, height) in [0, 1].
std::array<double, 4> bbox_normalize(const BBox& b, double canvas_w, double canvas_h);

enum class Quality { low, med, high };
Quality quality_from_name(const std::string& name);
const std::string& quality_name(Quality q);
/// Feature-noise sigma modeling detector quality: low 0.8, med 0.4, high 0.15.
double quality_sigma(Quality q);

/// Fixed random projections shared by every scene of a dataset. Rows are
/// orthonormalized so features decode by transposition.
struct FeatureSpace {
  Eigen::MatrixXd det_proj;      // kAttrDim x det_dim
  Eigen::MatrixXd spatial_proj;  // kAttrDim x cell_dim
  Eigen::Index det_dim() const { return det_proj.cols(); }
  Eigen::Index cell_dim() const { return spatial_proj.cols(); }

  static FeatureSpace make(std::uint64_t seed, Eigen::Index det_dim = 64, Eigen::Index cell_dim = 32);
};

/// Concatenated one-hot encoding of the object's four attributes.
Eigen::VectorXd attribute_onehot(const SceneObject& obj);

struct DecodedAttrs {
  ObjShape shape;
  Color color;
  SizeClass size;
  Material material;
};
/// Nearest-attribute decode of a projected (possibly noisy) feature row.
DecodedAttrs decode_attributes(const Eigen::VectorXd& row, const Eigen::MatrixXd& proj);

/// N x D matrix: per object, project the attribute one-hot through the shared
/// detection projection and add quality noise. Positions are never encoded.
Eigen::MatrixXd synth_detection_features(const SceneGraph& scene, Quality quality, Rng& rng,
                                         const FeatureSpace& space);
Eigen::MatrixXd synth_detection_features(const SceneGraph& scene, double sigma, Rng& rng,
                                         const FeatureSpace& space);

/// (grid*grid) x C matrix, cell (r, c) flattened to row r*grid + c. Each
/// object's projected encoding is distributed over the cells its box overlaps,
/// weighted by overlapped area fraction; every entry then gets quality noise.
Eigen::MatrixXd synth_spatial_features(const SceneGraph& scene, Quality quality, Rng& rng,
                                       const FeatureSpace& space, Eigen::Index grid = 7);
Eigen::MatrixXd synth_spatial_features(const SceneGraph& scene, double sigma, Rng& rng,
                                       const FeatureSpace& space, Eigen::Index grid = 7);

struct FeatureFlags {
  bool use_detection = true;
  bool use_spatial = true;
  bool use_bbox_position = false;
  bool use_bbox_size = false;
};

/// The model's image input. detection is N x D, widened by the normalized
/// bbox columns the flags select (position -> +2, size -> +2). spatial is
/// empty when disabled.
struct FeatureBundle {
  Eigen::MatrixXd detection;
  Eigen::MatrixXd spatial;  // (grid*grid) x C or 0 x 0
  Eigen::MatrixXd bbox;     // N x 4 normalized
  FeatureFlags flags;
};

/// Raw sources (no widening, everything synthesized) for dataset files.
FeatureBundle synth_raw_bundle(const SceneGraph& scene, Quality quality, Rng& rng,
                               const FeatureSpace& space, Eigen::Index grid = 7);

/// Applies flags to a raw bundle: widens detection rows with the selected
/// bbox columns and drops the spatial grid when unused.
FeatureBundle apply_flags(const FeatureBundle& raw, const FeatureFlags& flags);

/// synth_raw_bundle followed by apply_flags.
FeatureBundle build_feature_bundle(const SceneGraph& scene, Quality quality, const FeatureFlags& flags,
                                   Rng& rng, const FeatureSpace& space, Eigen::Index grid = 7);

}  // namespace vqr::world
