#include "vqr/dataset.hpp"

#include <json.hpp>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vqr/errors.hpp"

namespace vqr::io {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSplitSalt = 0x5eed0f5b1175c0deull;

std::string padded(const char* prefix, int value, int width = 6) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%0*d", prefix, width, value);
  return buf;
}

}  // namespace

const std::string& split_name(Split s) {
  static const std::array<std::string, 3> names{"train", "val", "test"};
  return names[static_cast<std::size_t>(s)];
}

Split split_of(const std::string& image_id) {
  const double u = static_cast<double>(splitmix64(fnv1a64(image_id) ^ kSplitSalt) >> 11) * 0x1.0p-53;
  if (u < 0.70) return Split::train;
  if (u < 0.85) return Split::val;
  return Split::test;
}

const world::SceneGraph& Dataset::scene_of(const std::string& image_id) const {
  auto it = scene_index.find(image_id);
  if (it == scene_index.end()) throw ContractError("unknown image id '" + image_id + "'");
  return scenes[it->second];
}

const world::FeatureBundle& Dataset::bundle_of(const std::string& image_id) const {
  auto it = scene_index.find(image_id);
  if (it == scene_index.end()) throw ContractError("unknown image id '" + image_id + "'");
  return raw_bundles[it->second];
}

Dataset gen_dataset(std::uint64_t master_seed, const GenConfig& cfg) {
  if (cfg.num_images < 1 || cfg.questions_per_image < 1)
    throw ConfigError("gen_dataset: counts must be positive");
  const world::FeatureSpace space =
      world::FeatureSpace::make(sub_seed(master_seed, "featurespace"), cfg.det_dim, cfg.cell_dim);
  Dataset ds;
  ds.master_seed = master_seed;
  ds.quality = cfg.quality;
  int qcount = 0;
  for (int i = 0; i < cfg.num_images; ++i) {
    const std::string image_id = padded("img", i);
    Rng scene_rng(sub_seed(master_seed, "scene/" + image_id));
    world::SceneGraph scene = world::gen_scene(scene_rng, cfg.world, image_id);
    Rng feature_rng(sub_seed(master_seed, "features/" + image_id));
    ds.raw_bundles.push_back(world::synth_raw_bundle(scene, cfg.quality, feature_rng, space, cfg.grid));

    Rng q_rng(sub_seed(master_seed, "questions/" + image_id));
    for (int j = 0; j < cfg.questions_per_image; ++j) {
      // T6 is always instantiable, so the resample loop terminates
      for (;;) {
        const int tpl = 1 + q_rng.below_int(lang::kNumTemplates);
        auto item = lang::gen_question(scene, tpl, q_rng, padded("q", qcount), image_id);
        if (item) {
          ds.questions.push_back(std::move(*item));
          ++qcount;
          break;
        }
      }
    }
    ds.scene_index[image_id] = ds.scenes.size();
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

void append_matrix9(std::string& out, const Eigen::MatrixXd& m) {
  out += '[';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out += ',';
    out += '[';
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += fmt9(m(r, c));
    }
    out += ']';
  }
  out += ']';
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write '" + path + "'");
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path + "'");
  return f;
}

Eigen::MatrixXd matrix_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw ParseError(std::string("bad matrix field: ") + what);
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw ParseError(std::string("ragged matrix field: ") + what);
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void write_scenes_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream f = open_out(path);
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    const auto& s = ds.scenes[i];
    const auto& b = ds.raw_bundles[i];
    std::string line;
    line.reserve(1 << 16);
    line += "{\"image_id\":\"" + s.image_id + "\",\"width\":" + fmt9(s.width) +
            ",\"height\":" + fmt9(s.height) + ",\"objects\":[";
    for (std::size_t k = 0; k < s.objects.size(); ++k) {
      const auto& o = s.objects[k];
      if (k) line += ',';
      line += "{\"id\":" + std::to_string(o.id) + ",\"shape\":\"" + world::shape_name(o.shape) +
              "\",\"color\":\"" + world::color_name(o.color) + "\",\"size\":\"" +
              world::size_name(o.size) + "\",\"material\":\"" + world::material_name(o.material) +
              "\",\"bbox\":[" + fmt9(o.bbox.x) + ',' + fmt9(o.bbox.y) + ',' + fmt9(o.bbox.w) + ',' +
              fmt9(o.bbox.h) + "]}";
    }
    line += "],\"detection\":";
    append_matrix9(line, b.detection);
    line += ",\"spatial\":";
    append_matrix9(line, b.spatial);
    line += ",\"bbox\":";
    append_matrix9(line, b.bbox);
    line += "}\n";
    f << line;
  }
}

void write_questions_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream f = open_out(path);
  for (const auto& q : ds.questions) {
    json line{{"qid", q.qid},
              {"image_id", q.image_id},
              {"question", lang::join_tokens(q.question)},
              {"program", lang::join_tokens(lang::serialize_program(q.program))},
              {"answer", q.answer}};
    f << line.dump() << '\n';
  }
}

void write_splits_json(const Dataset& ds, const std::string& path) {
  json j = json::object();
  for (const auto& s : ds.scenes) j[s.image_id] = split_name(split_of(s.image_id));
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

Dataset read_dataset(const std::string& scenes_path, const std::string& questions_path) {
  Dataset ds;
  {
    std::ifstream f = open_in(scenes_path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(scenes_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      world::SceneGraph s;
      s.image_id = j.at("image_id").get<std::string>();
      s.width = j.at("width").get<double>();
      s.height = j.at("height").get<double>();
      for (const auto& jo : j.at("objects")) {
        world::SceneObject o;
        o.id = jo.at("id").get<int>();
        o.shape = world::shape_from_name(jo.at("shape").get<std::string>());
        o.color = world::color_from_name(jo.at("color").get<std::string>());
        o.size = world::size_from_name(jo.at("size").get<std::string>());
        o.material = world::material_from_name(jo.at("material").get<std::string>());
        const auto& bb = jo.at("bbox");
        o.bbox = {bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                  bb.at(3).get<double>()};
        s.objects.push_back(o);
      }
      world::FeatureBundle b;
      b.detection = matrix_from_json(j.at("detection"), "detection");
      b.spatial = matrix_from_json(j.at("spatial"), "spatial");
      b.bbox = matrix_from_json(j.at("bbox"), "bbox");
      ds.scene_index[s.image_id] = ds.scenes.size();
      ds.scenes.push_back(std::move(s));
      ds.raw_bundles.push_back(std::move(b));
    }
  }
  {
    std::ifstream f = open_in(questions_path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw ParseError(questions_path + ":" + std::to_string(lineno) + ": " + e.what());
      }
      lang::QAItem q;
      q.qid = j.at("qid").get<std::string>();
      q.image_id = j.at("image_id").get<std::string>();
      q.question = lang::split_tokens(j.at("question").get<std::string>());
      const auto ptoks = lang::split_tokens(j.at("program").get<std::string>());
      q.program = lang::parse_program(ptoks);
      q.answer = j.at("answer").get<std::string>();
      ds.questions.push_back(std::move(q));
    }
  }
  return ds;
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream f = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 15];
  while (f) {
    f.read(buf, sizeof buf);
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(f.gcount())), h);
  }
  char out[24];
  std::snprintf(out, sizeof out, "%016" PRIx64, h);
  return out;
}

void RunManifest::write(const std::string& path) const {
  json j{{"tool_version", tool_version}, {"command", command},        {"argv", argv},
         {"master_seed", master_seed},   {"config_hash", config_hash}, {"inputs", input_hashes},
         {"outputs", output_hashes}};
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

}  // namespace vqr::io
