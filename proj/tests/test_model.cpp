#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "testutil.hpp"
#include "vqr/dataset.hpp"
#include "vqr/model.hpp"

using namespace vqr;
using model::EncoderKind;
using model::ModelConfig;
using model::Params;
using nn::RunMode;

namespace {

/// Desk-small config so finite differences stay cheap.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 8;
  cfg.joint_dim = 8;
  cfg.attn_dim = 8;
  cfg.det_dim = 16;
  cfg.grid = 4;
  cfg.cell_dim = 14;
  cfg.mlp_hidden = 16;
  cfg.use_spatial = true;
  cfg.use_bbox_position = true;
  cfg.use_bbox_size = true;
  cfg.use_program = true;
  cfg.encoder = EncoderKind::gru;
  cfg.seed = 7;
  return cfg;
}

struct Fixture {
  world::SceneGraph scene;
  world::FeatureBundle bundle;
  std::vector<int> q_ids, p_ids;
};

Fixture make_fixture(const ModelConfig& cfg, std::uint64_t seed) {
  Fixture f;
  Rng rng(seed);
  world::WorldConfig wcfg;
  f.scene = world::gen_scene(rng, wcfg, "imgfix");
  const world::FeatureSpace space = world::FeatureSpace::make(seed + 1, cfg.det_dim, cfg.cell_dim);
  Rng frng(seed + 2);
  f.bundle = world::build_feature_bundle(f.scene, world::Quality::high, cfg.feature_flags(), frng,
                                         space, cfg.grid);
  Rng qrng(seed + 3);
  for (int tpl = 1; tpl <= 6; ++tpl) {
    auto item = lang::gen_question(f.scene, tpl, qrng);
    if (!item) continue;
    f.q_ids = lang::question_token_ids(item->question);
    f.p_ids = lang::program_token_ids(item->program);
    break;
  }
  REQUIRE(!f.q_ids.empty());
  return f;
}

}  // namespace

TEST_CASE("encode ignores program tokens when the channel is off") {
  ModelConfig cfg = tiny_config();
  cfg.use_program = false;
  Params params = Params::init(cfg);
  Fixture f = make_fixture(cfg, 11);
  Rng rng(1);
  Tape t1;
  auto e1 = model::encode(t1, f.q_ids, f.p_ids, cfg, params, RunMode::eval, rng);
  std::vector<int> other_p = f.p_ids.empty() ? std::vector<int>{0, 1} : f.p_ids;
  other_p.push_back(2);
  Tape t2;
  auto e2 = model::encode(t2, f.q_ids, other_p, cfg, params, RunMode::eval, rng);
  auto v1 = e1.joint.to_vector(), v2 = e2.joint.to_vector();
  CHECK(std::memcmp(v1.data(), v2.data(), v1.size() * sizeof(double)) == 0);
  for (double z : e1.program_state.to_vector()) CHECK(z == 0.0);
}

TEST_CASE("bayesian encoder at rate zero matches plain gru bitwise") {
  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  Fixture f = make_fixture(cfg, 13);
  ModelConfig bayes = cfg;
  bayes.encoder = EncoderKind::bayesian_gru;
  bayes.dropout_rate = 0.0;
  Rng r1(5), r2(5);
  Tape t1, t2;
  auto a = model::encode(t1, f.q_ids, f.p_ids, cfg, params, RunMode::train, r1);
  auto b = model::encode(t2, f.q_ids, f.p_ids, bayes, params, RunMode::train, r2);
  auto va = a.joint.to_vector(), vb = b.joint.to_vector();
  CHECK(std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0);
}

TEST_CASE("eval mode forward is deterministic and a probability vector") {
  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  Fixture f = make_fixture(cfg, 17);
  auto run = [&]() {
    Rng rng(9);
    Tape tape;
    auto enc = model::encode(tape, f.q_ids, f.p_ids, cfg, params, RunMode::eval, rng);
    return model::forward(tape, f.bundle, enc, cfg, params, RunMode::eval, rng).to_vector();
  };
  auto p1 = run(), p2 = run();
  CHECK(std::memcmp(p1.data(), p2.data(), p1.size() * sizeof(double)) == 0);
  REQUIRE(p1.size() == 24);
  double sum = 0;
  for (double v : p1) {
    CHECK(v >= 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("empty question is rejected") {
  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  Rng rng(1);
  Tape tape;
  CHECK_THROWS_AS(model::encode(tape, {}, {0, 1}, cfg, params, RunMode::eval, rng), InputError);
}

TEST_CASE("flag changes only touch the tensors they govern") {
  ModelConfig base = tiny_config();
  const auto base_shapes = model::expected_shapes(base);

  struct Case {
    const char* name;
    ModelConfig cfg;
    std::vector<std::string> governed;  // names allowed to change/appear/vanish
  };
  ModelConfig no_sp = base;
  no_sp.use_spatial = false;
  ModelConfig no_prog = base;
  no_prog.use_program = false;
  ModelConfig no_pos = base;
  no_pos.use_bbox_position = false;
  std::vector<Case> cases{
      {"spatial", no_sp, {"att_sp.input", "att_sp.query", "att_sp.score", "clf.w1"}},
      {"program", no_prog,
       {"embed.program", "enc_p.w_z", "enc_p.w_r", "enc_p.w_h", "enc_p.u_z", "enc_p.u_r",
        "enc_p.u_h", "enc_p.b_z", "enc_p.b_r", "enc_p.b_h"}},
      {"bbox_position", no_pos, {"att_det.input", "att_det2.input", "clf.w1"}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    const auto shapes = model::expected_shapes(c.cfg);
    for (const auto& [name, shape] : base_shapes) {
      const bool governed = std::find(c.governed.begin(), c.governed.end(), name) != c.governed.end();
      if (governed) continue;
      REQUIRE(shapes.contains(name));
      CHECK(shapes.at(name) == shape);
    }
    for (const auto& [name, shape] : shapes) {
      if (!base_shapes.contains(name))
        CHECK(std::find(c.governed.begin(), c.governed.end(), name) != c.governed.end());
    }
    // per-name seeding keeps untouched tensors value-identical too
    Params pa = Params::init(base);
    Params pb = Params::init(c.cfg);
    for (const auto& [name, t] : pb.tensors) {
      const bool governed = std::find(c.governed.begin(), c.governed.end(), name) != c.governed.end();
      if (governed || !pa.tensors.contains(name)) continue;
      auto va = pa.at(name).to_vector(), vb = t.to_vector();
      CHECK(std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0);
    }
  }

  // spatial off shrinks the classifier input by exactly cell_dim
  CHECK(model::expected_shapes(no_sp).at("clf.w1")[0] == base_shapes.at("clf.w1")[0] - base.cell_dim);
}

TEST_CASE("permuting detection rows leaves the forward output unchanged") {
  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  Fixture f = make_fixture(cfg, 23);
  Rng rng(3);
  Tape tape;
  auto enc = model::encode(tape, f.q_ids, f.p_ids, cfg, params, RunMode::eval, rng);
  auto p1 = model::forward(tape, f.bundle, enc, cfg, params, RunMode::eval, rng).to_vector();

  world::FeatureBundle permuted = f.bundle;
  const Eigen::Index n = permuted.detection.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    permuted.detection.row(i) = f.bundle.detection.row(n - 1 - i);
    permuted.bbox.row(i) = f.bundle.bbox.row(n - 1 - i);
  }
  auto p2 = model::forward(tape, permuted, enc, cfg, params, RunMode::eval, rng).to_vector();
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
}

TEST_CASE("flag and shape mismatches are contract errors") {
  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  Fixture f = make_fixture(cfg, 29);
  Rng rng(3);
  Tape tape;
  auto enc = model::encode(tape, f.q_ids, f.p_ids, cfg, params, RunMode::eval, rng);
  ModelConfig other = cfg;
  other.use_spatial = false;
  CHECK_THROWS_AS(model::forward(tape, f.bundle, enc, other, params, RunMode::eval, rng),
                  ContractError);
  world::FeatureBundle narrow = f.bundle;
  narrow.detection = f.bundle.detection.leftCols(cfg.det_dim);
  CHECK_THROWS_AS(model::forward(tape, narrow, enc, cfg, params, RunMode::eval, rng), ContractError);
}

TEST_CASE("full model end-to-end gradient matches finite differences") {
  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  Fixture f = make_fixture(cfg, 31);
  const int target = lang::answer_index("yes");
  std::vector<Tensor> leaves;
  for (auto& [name, t] : params.tensors) leaves.push_back(t);
  const double err = testutil::max_rel_fd_error(
      [&](Tape& t) {
        Rng rng(1);
        auto enc = model::encode(t, f.q_ids, f.p_ids, cfg, params, RunMode::eval, rng);
        Tensor logits = model::forward_logits(t, f.bundle, enc, cfg, params, RunMode::eval, rng);
        return ad::cross_entropy(t, ad::reshape(t, logits, {1, cfg.classes}), {target});
      },
      leaves);
  CHECK(err < 1e-4);
}

TEST_CASE("checkpoint round trip is byte identical and validated") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vqr_model_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "a.ckpt.json").string();
  const std::string p2 = (dir / "b.ckpt.json").string();

  ModelConfig cfg = tiny_config();
  Params params = Params::init(cfg);
  model::save_checkpoint(params, cfg, p1);
  auto loaded = model::load_checkpoint(p1);
  model::save_checkpoint(loaded.params, loaded.config, p2);
  CHECK(io::file_fingerprint(p1) == io::file_fingerprint(p2));

  // loaded model predicts identically
  Fixture f = make_fixture(cfg, 37);
  auto run = [&](Params& pr) {
    Rng rng(4);
    Tape tape;
    auto enc = model::encode(tape, f.q_ids, f.p_ids, cfg, pr, RunMode::eval, rng);
    return model::forward(tape, f.bundle, enc, cfg, pr, RunMode::eval, rng).to_vector();
  };
  auto a = run(params), b = run(loaded.params);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

  // tampering with a shape names the tensor
  std::ifstream in(p1);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  const std::string shape_key = "\"clf.b2\":{\"shape\":[" + std::to_string(cfg.classes) + "]";
  REQUIRE(text.find(shape_key) != std::string::npos);
  std::string tampered = text;
  tampered.replace(tampered.find(shape_key), shape_key.size(),
                   "\"clf.b2\":{\"shape\":[" + std::to_string(cfg.classes + 1) + "]");
  const std::string p3 = (dir / "tampered.ckpt.json").string();
  std::ofstream(p3) << tampered;
  try {
    model::load_checkpoint(p3);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("clf.b2") != std::string::npos);
  }

  // fingerprint and version tampering are distinct load errors
  std::string fp_bad = text;
  const std::string fp_key = "\"vocab_fingerprint\":\"";
  const auto at = fp_bad.find(fp_key) + fp_key.size();
  fp_bad[at] = fp_bad[at] == '0' ? '1' : '0';
  const std::string p4 = (dir / "fp.ckpt.json").string();
  std::ofstream(p4) << fp_bad;
  CHECK_THROWS_AS(model::load_checkpoint(p4), ContractError);

  std::string ver_bad = text;
  const std::string ver_key = "\"version\":1";
  REQUIRE(ver_bad.find(ver_key) != std::string::npos);
  ver_bad.replace(ver_bad.find(ver_key), ver_key.size(), "\"version\":9");
  const std::string p5 = (dir / "ver.ckpt.json").string();
  std::ofstream(p5) << ver_bad;
  CHECK_THROWS_AS(model::load_checkpoint(p5), ContractError);

  fs::remove_all(dir);
}
