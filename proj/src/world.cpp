#include "vqr/world.hpp"

#include <algorithm>
#include <cmath>

#include "vqr/errors.hpp"

namespace vqr::world {

namespace {

const std::array<std::string, 4> kShapeNames{"cube", "sphere", "pyramid", "cylinder"};
const std::array<std::string, 5> kColorNames{"red", "green", "blue", "yellow", "gray"};
const std::array<std::string, 2> kSizeNames{"small", "large"};
const std::array<std::string, 2> kMaterialNames{"matte", "shiny"};

template <class E, std::size_t N>
E from_name(const std::array<std::string, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<E>(i);
  throw ParameterError(std::string("unknown ") + what + ": '" + s + "'");
}

}  // namespace

const std::string& shape_name(ObjShape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
const std::string& color_name(Color c) { return kColorNames[static_cast<std::size_t>(c)]; }
const std::string& size_name(SizeClass s) { return kSizeNames[static_cast<std::size_t>(s)]; }
const std::string& material_name(Material m) { return kMaterialNames[static_cast<std::size_t>(m)]; }
ObjShape shape_from_name(const std::string& s) { return from_name<ObjShape>(kShapeNames, s, "shape"); }
Color color_from_name(const std::string& s) { return from_name<Color>(kColorNames, s, "color"); }
SizeClass size_from_name(const std::string& s) { return from_name<SizeClass>(kSizeNames, s, "size"); }
Material material_from_name(const std::string& s) {
  return from_name<Material>(kMaterialNames, s, "material");
}

SceneGraph gen_scene(Rng& rng, const WorldConfig& cfg, std::string image_id) {
  if (cfg.min_objects > cfg.max_objects)
    throw ConfigError("gen_scene: min_objects > max_objects");
  if (cfg.min_objects < 1) throw ConfigError("gen_scene: need at least one object");
  if (cfg.canvas_w < 64 || cfg.canvas_h < 64) throw ConfigError("gen_scene: canvas below 64x64");

  for (int attempt = 0; attempt < cfg.max_scene_tries; ++attempt) {
    SceneGraph scene;
    scene.image_id = std::move(image_id);
    scene.width = cfg.canvas_w;
    scene.height = cfg.canvas_h;
    const int count = cfg.min_objects + rng.below_int(cfg.max_objects - cfg.min_objects + 1);
    bool ok = true;
    for (int i = 0; i < count && ok; ++i) {
      SceneObject obj;
      obj.id = i;
      obj.shape = static_cast<ObjShape>(rng.below_int(kNumShapes));
      obj.color = static_cast<Color>(rng.below_int(kNumColors));
      obj.size = static_cast<SizeClass>(rng.below_int(kNumSizes));
      obj.material = static_cast<Material>(rng.below_int(kNumMaterials));
      const auto& ext = obj.size == SizeClass::small ? cfg.small_extent : cfg.large_extent;
      obj.bbox.w = rng.uniform(ext[0], ext[1]);
      obj.bbox.h = rng.uniform(ext[0], ext[1]);
      bool placed = false;
      for (int t = 0; t < cfg.max_place_tries && !placed; ++t) {
        obj.bbox.x = rng.uniform(0.0, cfg.canvas_w - obj.bbox.w);
        obj.bbox.y = rng.uniform(0.0, cfg.canvas_h - obj.bbox.h);
        placed = std::all_of(scene.objects.begin(), scene.objects.end(), [&](const SceneObject& o) {
          return std::hypot(o.bbox.cx() - obj.bbox.cx(), o.bbox.cy() - obj.bbox.cy()) >=
                 cfg.min_center_sep;
        });
      }
      if (!placed) {
        ok = false;
        break;
      }
      scene.objects.push_back(obj);
    }
    if (ok) return scene;
    image_id = std::move(scene.image_id);  // reuse for the retry
  }
  throw ConfigError("gen_scene: could not satisfy min_center_sep=" +
                    std::to_string(cfg.min_center_sep) + " after " +
                    std::to_string(cfg.max_scene_tries) + " scene attempts");
}

std::array<double, 4> bbox_normalize(const BBox& b, double canvas_w, double canvas_h) {
  if (canvas_w <= 0 || canvas_h <= 0)
    throw ParameterError("bbox_normalize: canvas extents must be positive");
  return {b.cx() / canvas_w, b.cy() / canvas_h, b.w / canvas_w, b.h / canvas_h};
}

Quality quality_from_name(const std::string& name) {
  if (name == "low") return Quality::low;
  if (name == "med") return Quality::med;
  if (name == "high") return Quality::high;
  throw ParameterError("unknown quality: '" + name + "'");
}

const std::string& quality_name(Quality q) {
  static const std::array<std::string, 3> names{"low", "med", "high"};
  return names[static_cast<std::size_t>(q)];
}

double quality_sigma(Quality q) {
  switch (q) {
    case Quality::low: return 0.8;
    case Quality::med: return 0.4;
    default: return 0.15;
  }
}

FeatureSpace FeatureSpace::make(std::uint64_t seed, Eigen::Index det_dim, Eigen::Index cell_dim) {
  if (det_dim < kAttrDim || cell_dim < kAttrDim)
    throw ParameterError("FeatureSpace: projection width must be at least " +
                         std::to_string(kAttrDim));
  auto sample = [](std::uint64_t s, Eigen::Index cols) {
    Rng rng(s);
    Eigen::MatrixXd m(kAttrDim, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    // Gram-Schmidt over rows; D >= 13 Gaussian rows are independent in practice
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index p = 0; p < r; ++p) m.row(r) -= m.row(r).dot(m.row(p)) * m.row(p);
      m.row(r).normalize();
    }
    return m;
  };
  FeatureSpace space;
  space.det_proj = sample(sub_seed(seed, "featurespace/detection"), det_dim);
  space.spatial_proj = sample(sub_seed(seed, "featurespace/spatial"), cell_dim);
  return space;
}

Eigen::VectorXd attribute_onehot(const SceneObject& obj) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(kAttrDim);
  e(static_cast<int>(obj.shape)) = 1.0;
  e(kNumShapes + static_cast<int>(obj.color)) = 1.0;
  e(kNumShapes + kNumColors + static_cast<int>(obj.size)) = 1.0;
  e(kNumShapes + kNumColors + kNumSizes + static_cast<int>(obj.material)) = 1.0;
  return e;
}

DecodedAttrs decode_attributes(const Eigen::VectorXd& row, const Eigen::MatrixXd& proj) {
  const Eigen::VectorXd back = proj * row;  // rows orthonormal: proj^T is the pseudo-inverse
  auto block_argmax = [&](int begin, int len) {
    int best = 0;
    for (int i = 1; i < len; ++i)
      if (back(begin + i) > back(begin + best)) best = i;
    return best;
  };
  DecodedAttrs d;
  d.shape = static_cast<ObjShape>(block_argmax(0, kNumShapes));
  d.color = static_cast<Color>(block_argmax(kNumShapes, kNumColors));
  d.size = static_cast<SizeClass>(block_argmax(kNumShapes + kNumColors, kNumSizes));
  d.material = static_cast<Material>(block_argmax(kNumShapes + kNumColors + kNumSizes, kNumMaterials));
  return d;
}

Eigen::MatrixXd synth_detection_features(const SceneGraph& scene, Quality quality, Rng& rng,
                                         const FeatureSpace& space) {
  return synth_detection_features(scene, quality_sigma(quality), rng, space);
}

Eigen::MatrixXd synth_detection_features(const SceneGraph& scene, double sigma, Rng& rng,
                                         const FeatureSpace& space) {
  const Eigen::Index n = static_cast<Eigen::Index>(scene.objects.size());
  Eigen::MatrixXd out(n, space.det_dim());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = (attribute_onehot(scene.objects[static_cast<std::size_t>(i)]).transpose() *
                  space.det_proj);
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) += sigma * rng.normal();
  }
  return out;
}

Eigen::MatrixXd synth_spatial_features(const SceneGraph& scene, Quality quality, Rng& rng,
                                       const FeatureSpace& space, Eigen::Index grid) {
  return synth_spatial_features(scene, quality_sigma(quality), rng, space, grid);
}

Eigen::MatrixXd synth_spatial_features(const SceneGraph& scene, double sigma, Rng& rng,
                                       const FeatureSpace& space, Eigen::Index grid) {
  if (grid < 4) throw ParameterError("synth_spatial_features: grid must be at least 4");
  const double cell_w = scene.width / static_cast<double>(grid);
  const double cell_h = scene.height / static_cast<double>(grid);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(grid * grid, space.cell_dim());
  for (const SceneObject& obj : scene.objects) {
    const Eigen::RowVectorXd enc = attribute_onehot(obj).transpose() * space.spatial_proj;
    const double area = obj.bbox.w * obj.bbox.h;
    for (Eigen::Index r = 0; r < grid; ++r)
      for (Eigen::Index c = 0; c < grid; ++c) {
        const double ox = std::max(obj.bbox.x, static_cast<double>(c) * cell_w);
        const double oy = std::max(obj.bbox.y, static_cast<double>(r) * cell_h);
        const double ex = std::min(obj.bbox.x + obj.bbox.w, static_cast<double>(c + 1) * cell_w);
        const double ey = std::min(obj.bbox.y + obj.bbox.h, static_cast<double>(r + 1) * cell_h);
        const double overlap = std::max(0.0, ex - ox) * std::max(0.0, ey - oy);
        if (overlap > 0.0) out.row(r * grid + c) += (overlap / area) * enc;
      }
  }
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) += sigma * rng.normal();
  return out;
}

FeatureBundle synth_raw_bundle(const SceneGraph& scene, Quality quality, Rng& rng,
                               const FeatureSpace& space, Eigen::Index grid) {
  FeatureBundle b;
  b.flags = FeatureFlags{};  // raw: detection + spatial, no widening
  b.detection = synth_detection_features(scene, quality, rng, space);
  b.spatial = synth_spatial_features(scene, quality, rng, space, grid);
  const Eigen::Index n = static_cast<Eigen::Index>(scene.objects.size());
  b.bbox.resize(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto nb = bbox_normalize(scene.objects[static_cast<std::size_t>(i)].bbox, scene.width,
                                   scene.height);
    for (int k = 0; k < 4; ++k) b.bbox(i, k) = nb[static_cast<std::size_t>(k)];
  }
  return b;
}

FeatureBundle apply_flags(const FeatureBundle& raw, const FeatureFlags& flags) {
  FeatureBundle b;
  b.flags = flags;
  b.bbox = raw.bbox;
  const Eigen::Index n = raw.detection.rows();
  const Eigen::Index extra = (flags.use_bbox_position ? 2 : 0) + (flags.use_bbox_size ? 2 : 0);
  b.detection.resize(n, raw.detection.cols() + extra);
  b.detection.leftCols(raw.detection.cols()) = raw.detection;
  Eigen::Index at = raw.detection.cols();
  if (flags.use_bbox_position) {
    b.detection.middleCols(at, 2) = raw.bbox.leftCols(2);
    at += 2;
  }
  if (flags.use_bbox_size) b.detection.middleCols(at, 2) = raw.bbox.rightCols(2);
  if (flags.use_spatial) b.spatial = raw.spatial;
  return b;
}

FeatureBundle build_feature_bundle(const SceneGraph& scene, Quality quality, const FeatureFlags& flags,
                                   Rng& rng, const FeatureSpace& space, Eigen::Index grid) {
  return apply_flags(synth_raw_bundle(scene, quality, rng, space, grid), flags);
}

}  // namespace vqr::world
