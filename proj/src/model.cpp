#include "vqr/model.hpp"

#include <json.hpp>

#include <fstream>

#include "vqr/errors.hpp"
#include "vqr/lang.hpp"

namespace vqr::model {

using nlohmann::json;

const std::string& encoder_name(EncoderKind k) {
  static const std::array<std::string, 2> names{"gru", "bayesian_gru"};
  return names[static_cast<std::size_t>(k)];
}

EncoderKind encoder_from_name(const std::string& s) {
  if (s == "gru") return EncoderKind::gru;
  if (s == "bayesian_gru") return EncoderKind::bayesian_gru;
  throw ParameterError("unknown encoder kind: '" + s + "'");
}

world::FeatureFlags ModelConfig::feature_flags() const {
  world::FeatureFlags f;
  f.use_detection = true;
  f.use_spatial = use_spatial;
  f.use_bbox_position = use_bbox_position;
  f.use_bbox_size = use_bbox_size;
  return f;
}

std::map<std::string, ad::Shape> expected_shapes(const ModelConfig& cfg) {
  const Index vq = static_cast<Index>(lang::question_vocab().size());
  const Index vp = static_cast<Index>(lang::program_vocab().size());
  std::map<std::string, ad::Shape> s;
  s["embed.question"] = {vq, cfg.embed_dim};
  auto add_gru = [&](const std::string& prefix) {
    s[prefix + ".w_z"] = {cfg.embed_dim, cfg.hidden_dim};
    s[prefix + ".w_r"] = {cfg.embed_dim, cfg.hidden_dim};
    s[prefix + ".w_h"] = {cfg.embed_dim, cfg.hidden_dim};
    s[prefix + ".u_z"] = {cfg.hidden_dim, cfg.hidden_dim};
    s[prefix + ".u_r"] = {cfg.hidden_dim, cfg.hidden_dim};
    s[prefix + ".u_h"] = {cfg.hidden_dim, cfg.hidden_dim};
    s[prefix + ".b_z"] = {cfg.hidden_dim};
    s[prefix + ".b_r"] = {cfg.hidden_dim};
    s[prefix + ".b_h"] = {cfg.hidden_dim};
  };
  add_gru("enc_q");
  if (cfg.use_program) {
    s["embed.program"] = {vp, cfg.embed_dim};
    add_gru("enc_p");
  }
  s["joint.weight"] = {2 * cfg.hidden_dim, cfg.joint_dim};
  s["joint.bias"] = {cfg.joint_dim};
  // two detection readouts with independent parameters; comparison
  // templates need the classifier to see two attended objects at once
  for (const char* head : {"att_det", "att_det2"}) {
    s[std::string(head) + ".input"] = {cfg.det_input_dim(), cfg.attn_dim};
    s[std::string(head) + ".query"] = {cfg.joint_dim, cfg.attn_dim};
    s[std::string(head) + ".score"] = {cfg.attn_dim};
  }
  if (cfg.use_spatial) {
    // spatial attention scores see cell contents plus the cell's normalized
    // center coordinates; pooling stays over the cell_dim contents
    s["att_sp.input"] = {cfg.cell_dim + 2, cfg.attn_dim};
    s["att_sp.query"] = {cfg.joint_dim, cfg.attn_dim};
    s["att_sp.score"] = {cfg.attn_dim};
  }
  s["clf.w1"] = {cfg.classifier_input_dim(), cfg.mlp_hidden};
  s["clf.b1"] = {cfg.mlp_hidden};
  s["clf.w2"] = {cfg.mlp_hidden, cfg.classes};
  s["clf.b2"] = {cfg.classes};
  return s;
}

Params Params::init(const ModelConfig& cfg) {
  Params p;
  for (const auto& [name, shape] : expected_shapes(cfg)) {
    Rng rng(sub_seed(cfg.seed, "param/" + name));
    if (shape.size() == 2) {
      p.tensors.emplace(name, nn::xavier_leaf(shape[0], shape[1], rng));
    } else if (name.ends_with(".score")) {
      // unit-scale scoring vectors let attention sharpen early; xavier-small
      // scores keep softmax near uniform for many epochs
      std::vector<double> v(static_cast<std::size_t>(shape[0]));
      for (auto& x : v) x = rng.normal();
      p.tensors.emplace(name, Tensor::from_values(shape, v, true));
    } else if (name.ends_with(".b_z")) {
      // carry-biased update gates: early tokens survive to the final state
      // instead of decaying 0.5^T from the zero-bias fixed point
      p.tensors.emplace(
          name, Tensor::from_values(shape, std::vector<double>(static_cast<std::size_t>(shape[0]), -1.5),
                                    true));
    } else {
      p.tensors.emplace(name, Tensor::zeros(shape, true));  // biases start at zero
    }
  }
  return p;
}

Tensor& Params::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("no parameter tensor named '" + name + "'");
  return it->second;
}

const Tensor& Params::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("no parameter tensor named '" + name + "'");
  return it->second;
}

void Params::zero_grads() {
  for (auto& [name, t] : tensors) t.zero_grad();
}

Params Params::clone() const {
  Params out;
  for (const auto& [name, t] : tensors)
    out.tensors.emplace(name, Tensor::from_values(t.shape(), t.to_vector(), t.requires_grad()));
  return out;
}

namespace {

nn::GruParams gru_view(Params& p, const std::string& prefix) {
  nn::GruParams g;
  g.w_z = p.at(prefix + ".w_z");
  g.w_r = p.at(prefix + ".w_r");
  g.w_h = p.at(prefix + ".w_h");
  g.u_z = p.at(prefix + ".u_z");
  g.u_r = p.at(prefix + ".u_r");
  g.u_h = p.at(prefix + ".u_h");
  g.b_z = p.at(prefix + ".b_z");
  g.b_r = p.at(prefix + ".b_r");
  g.b_h = p.at(prefix + ".b_h");
  return g;
}

nn::AttentionParams att_view(Params& p, const std::string& prefix) {
  nn::AttentionParams a;
  a.input_proj = p.at(prefix + ".input");
  a.query_proj = p.at(prefix + ".query");
  a.score_vec = p.at(prefix + ".score");
  return a;
}

Tensor encode_sequence(Tape& tape, const Tensor& emb, const nn::GruParams& gp,
                       const ModelConfig& cfg, RunMode mode, Rng& rng,
                       std::vector<nn::LockedMasks>* mask_log) {
  if (cfg.encoder == EncoderKind::bayesian_gru)
    return nn::bayesian_gru_encode(tape, emb, gp, cfg.dropout_rate, rng, mode, mask_log);
  return nn::gru_encode(tape, emb, gp);
}

}  // namespace

QuestionEncoding encode(Tape& tape, const std::vector<int>& question_ids,
                        const std::vector<int>& program_ids, const ModelConfig& cfg, Params& params,
                        RunMode mode, Rng& rng, EncodeTrace* trace) {
  if (question_ids.empty()) throw InputError("encode: empty question");
  QuestionEncoding out;
  {
    Tensor emb = nn::embed(tape, question_ids, params.at("embed.question"));
    out.question_state = encode_sequence(tape, emb, gru_view(params, "enc_q"), cfg, mode, rng,
                                         trace ? &trace->question_masks : nullptr);
  }
  if (cfg.use_program) {
    if (program_ids.empty()) throw InputError("encode: empty program with the program channel on");
    Tensor emb = nn::embed(tape, program_ids, params.at("embed.program"));
    out.program_state = encode_sequence(tape, emb, gru_view(params, "enc_p"), cfg, mode, rng,
                                        trace ? &trace->program_masks : nullptr);
  } else {
    out.program_state = Tensor::zeros({cfg.hidden_dim});
  }
  Tensor joined = ad::concat(tape, {out.question_state, out.program_state}, 0);
  out.joint = nn::affine(tape, joined, params.at("joint.weight"), params.at("joint.bias"));
  return out;
}

Tensor forward_logits(Tape& tape, const world::FeatureBundle& bundle, const QuestionEncoding& enc,
                      const ModelConfig& cfg, Params& params, RunMode mode, Rng& rng) {
  if (bundle.flags.use_spatial != cfg.use_spatial ||
      bundle.flags.use_bbox_position != cfg.use_bbox_position ||
      bundle.flags.use_bbox_size != cfg.use_bbox_size)
    throw ContractError("forward: bundle flags disagree with the model config");
  if (bundle.detection.cols() != cfg.det_input_dim())
    throw ContractError("forward: detection width " + std::to_string(bundle.detection.cols()) +
                        " does not match config width " + std::to_string(cfg.det_input_dim()));

  Tensor det_rows = Tensor::from_matrix(bundle.detection);
  auto det = nn::attention_pool(tape, det_rows, enc.joint, att_view(params, "att_det"));
  auto det2 = nn::attention_pool(tape, det_rows, enc.joint, att_view(params, "att_det2"));

  std::vector<Tensor> clf_in{det.pooled, det2.pooled};
  if (cfg.use_spatial) {
    if (bundle.spatial.rows() != cfg.grid * cfg.grid || bundle.spatial.cols() != cfg.cell_dim)
      throw ContractError("forward: spatial grid does not match config");
    // keys carry the normalized cell centers so scores can be position-aware;
    // the pooled value stays the cell_dim contents
    Eigen::MatrixXd keys(bundle.spatial.rows(), cfg.cell_dim + 2);
    keys.leftCols(cfg.cell_dim) = bundle.spatial;
    for (Index r = 0; r < cfg.grid; ++r)
      for (Index c = 0; c < cfg.grid; ++c) {
        keys(r * cfg.grid + c, cfg.cell_dim) = (static_cast<double>(c) + 0.5) / static_cast<double>(cfg.grid);
        keys(r * cfg.grid + c, cfg.cell_dim + 1) = (static_cast<double>(r) + 0.5) / static_cast<double>(cfg.grid);
      }
    Tensor key_rows = Tensor::from_matrix(keys);
    Tensor cell_rows = Tensor::from_matrix(bundle.spatial);
    auto sp = nn::attention_pool_kv(tape, key_rows, cell_rows, enc.joint, att_view(params, "att_sp"));
    clf_in.push_back(sp.pooled);
  }
  clf_in.push_back(enc.joint);

  Tensor x = ad::concat(tape, clf_in, 0);
  Tensor h = ad::relu(tape, nn::affine(tape, x, params.at("clf.w1"), params.at("clf.b1")));
  if (mode == RunMode::train && cfg.mlp_dropout > 0.0) {
    if (cfg.mlp_dropout >= 1.0) throw ParameterError("mlp_dropout must lie in [0, 1)");
    const double keep = 1.0 / (1.0 - cfg.mlp_dropout);
    std::vector<double> mask(static_cast<std::size_t>(cfg.mlp_hidden));
    for (auto& m : mask) m = rng.bernoulli(cfg.mlp_dropout) ? 0.0 : keep;
    h = ad::mul(tape, h, Tensor::from_values({cfg.mlp_hidden}, mask));
  }
  return nn::affine(tape, h, params.at("clf.w2"), params.at("clf.b2"));
}

Tensor forward(Tape& tape, const world::FeatureBundle& bundle, const QuestionEncoding& enc,
               const ModelConfig& cfg, Params& params, RunMode mode, Rng& rng) {
  return ad::softmax(tape, forward_logits(tape, bundle, enc, cfg, params, mode, rng), 0);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr int kCheckpointVersion = 1;

json config_to_json(const ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"hidden_dim", c.hidden_dim},
              {"joint_dim", c.joint_dim},
              {"attn_dim", c.attn_dim},
              {"det_dim", c.det_dim},
              {"grid", c.grid},
              {"cell_dim", c.cell_dim},
              {"classes", c.classes},
              {"mlp_hidden", c.mlp_hidden},
              {"use_spatial", c.use_spatial},
              {"use_bbox_position", c.use_bbox_position},
              {"use_bbox_size", c.use_bbox_size},
              {"use_program", c.use_program},
              {"encoder", encoder_name(c.encoder)},
              {"dropout_rate", c.dropout_rate},
              {"mlp_dropout", c.mlp_dropout},
              {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<Index>();
  c.hidden_dim = j.at("hidden_dim").get<Index>();
  c.joint_dim = j.at("joint_dim").get<Index>();
  c.attn_dim = j.at("attn_dim").get<Index>();
  c.det_dim = j.at("det_dim").get<Index>();
  c.grid = j.at("grid").get<Index>();
  c.cell_dim = j.at("cell_dim").get<Index>();
  c.classes = j.at("classes").get<Index>();
  c.mlp_hidden = j.at("mlp_hidden").get<Index>();
  c.use_spatial = j.at("use_spatial").get<bool>();
  c.use_bbox_position = j.at("use_bbox_position").get<bool>();
  c.use_bbox_size = j.at("use_bbox_size").get<bool>();
  c.use_program = j.at("use_program").get<bool>();
  c.encoder = encoder_from_name(j.at("encoder").get<std::string>());
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.mlp_dropout = j.at("mlp_dropout").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const Params& params, const ModelConfig& cfg, const std::string& path) {
  json tensors = json::object();
  for (const auto& [name, t] : params.tensors) {
    tensors[name] = json{{"shape", t.shape()}, {"values", t.to_vector()}};
  }
  json j{{"version", kCheckpointVersion},
         {"config", config_to_json(cfg)},
         {"vocab_fingerprint", lang::answer_vocab_fingerprint()},
         {"tensors", tensors}};
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  f << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  if (!j.contains("version") || j.at("version").get<int>() != kCheckpointVersion)
    throw ContractError("checkpoint '" + path + "': unsupported version");
  if (j.at("vocab_fingerprint").get<std::string>() != lang::answer_vocab_fingerprint())
    throw ContractError("checkpoint '" + path + "': answer vocabulary fingerprint mismatch");
  Checkpoint ckpt;
  ckpt.config = config_from_json(j.at("config"));
  const auto expected = expected_shapes(ckpt.config);
  const auto& tensors = j.at("tensors");
  for (const auto& [name, shape] : expected) {
    if (!tensors.contains(name))
      throw ContractError("checkpoint '" + path + "': missing tensor '" + name + "'");
    const auto& jt = tensors.at(name);
    const auto got = jt.at("shape").get<ad::Shape>();
    if (got != shape)
      throw ContractError("checkpoint '" + path + "': tensor '" + name + "' has shape " +
                          ad::shape_str(got) + ", config requires " + ad::shape_str(shape));
    ckpt.params.tensors.emplace(
        name, Tensor::from_values(shape, jt.at("values").get<std::vector<double>>(), true));
  }
  for (auto it = tensors.begin(); it != tensors.end(); ++it)
    if (!expected.contains(it.key()))
      throw ContractError("checkpoint '" + path + "': unexpected tensor '" + it.key() + "'");
  return ckpt;
}

}  // namespace vqr::model
