#include "vqr/gradcheck.hpp"

#include <cmath>

#include "vqr/lang.hpp"
#include "vqr/model.hpp"
#include "vqr/rng.hpp"

namespace vqr::gradcheck {

double max_rel_fd_error(const std::function<Tensor(Tape&)>& build, std::vector<Tensor> leaves,
                        double h) {
  for (auto& t : leaves) t.zero_grad();
  {
    Tape tape;
    Tensor loss = build(tape);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (auto& t : leaves) analytic.push_back(t.grad());

  auto eval = [&]() {
    Tape tape;
    return build(tape).value();
  };
  double max_err = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].values_mut();
    for (Eigen::Index i = 0; i < vals.size(); ++i) {
      const double orig = vals(i);
      vals(i) = orig + h;
      const double lp = eval();
      vals(i) = orig - h;
      const double lm = eval();
      vals(i) = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double a = analytic[li][static_cast<std::size_t>(i)];
      max_err = std::max(max_err, std::abs(a - fd) / std::max(1.0, std::abs(a)));
    }
  }
  for (auto& t : leaves) t.zero_grad();
  return max_err;
}

namespace {

Tensor rand_leaf(Rng& rng, ad::Shape shape, double lo = -2.0, double hi = 2.0,
                 bool requires_grad = true) {
  std::vector<double> v(static_cast<std::size_t>(ad::numel_of(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), v, requires_grad);
}

model::ModelConfig small_full_config(std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 8;
  cfg.joint_dim = 8;
  cfg.attn_dim = 8;
  cfg.det_dim = 14;
  cfg.grid = 4;
  cfg.cell_dim = 13;
  cfg.mlp_hidden = 16;
  cfg.use_spatial = true;
  cfg.use_bbox_position = true;
  cfg.use_bbox_size = true;
  cfg.use_program = true;
  cfg.encoder = model::EncoderKind::gru;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

Report check_full_model(int seeds) {
  Report report;
  report.seeds = seeds;
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = sub_seed(0xf00d, "gradcheck/" + std::to_string(s));
    model::ModelConfig cfg = small_full_config(seed);
    model::Params params = model::Params::init(cfg);

    Rng rng(seed);
    world::WorldConfig wcfg;
    world::SceneGraph scene = world::gen_scene(rng, wcfg, "gc");
    const world::FeatureSpace space = world::FeatureSpace::make(seed, cfg.det_dim, cfg.cell_dim);
    Rng frng(seed + 1);
    world::FeatureBundle bundle =
        world::build_feature_bundle(scene, world::Quality::high, cfg.feature_flags(), frng, space,
                                    cfg.grid);
    Rng qrng(seed + 2);
    std::vector<int> q_ids, p_ids;
    for (int tpl = 1; tpl <= lang::kNumTemplates && q_ids.empty(); ++tpl) {
      auto item = lang::gen_question(scene, tpl, qrng);
      if (!item) continue;
      q_ids = lang::question_token_ids(item->question);
      p_ids = lang::program_token_ids(item->program);
    }
    const int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.classes)));

    std::vector<Tensor> leaves;
    for (auto& [name, t] : params.tensors) {
      leaves.push_back(t);
      report.coordinates += static_cast<int>(t.numel());
    }
    const double err = max_rel_fd_error(
        [&](Tape& t) {
          Rng mask_rng(1);
          auto enc = model::encode(t, q_ids, p_ids, cfg, params, nn::RunMode::eval, mask_rng);
          Tensor logits = model::forward_logits(t, bundle, enc, cfg, params, nn::RunMode::eval, mask_rng);
          return ad::cross_entropy(t, ad::reshape(t, logits, {1, cfg.classes}), {target});
        },
        leaves);
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  return report;
}

Report check_operations(int seeds) {
  Report report;
  report.seeds = seeds;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(sub_seed(0xbeef, "opcheck/" + std::to_string(s)));
    Tensor a = rand_leaf(rng, {3, 4});
    Tensor b = rand_leaf(rng, {3, 4});
    Tensor m2 = rand_leaf(rng, {4, 2});
    Tensor v = rand_leaf(rng, {4});
    Tensor c34 = rand_leaf(rng, {3, 4}, -1, 1, false);
    Tensor c32 = rand_leaf(rng, {3, 2}, -1, 1, false);
    Tensor table = rand_leaf(rng, {5, 3});
    Tensor c23 = rand_leaf(rng, {2, 3}, -1, 1, false);
    Tensor c64 = rand_leaf(rng, {6, 4}, -1, 1, false);

    auto weighted = [](Tape& t, const Tensor& y, const Tensor& c) {
      return ad::sum(t, ad::mul(t, y, c));
    };
    std::vector<std::pair<std::function<Tensor(Tape&)>, std::vector<Tensor>>> checks;
    checks.push_back({[&](Tape& t) { return weighted(t, ad::matmul(t, a, m2), c32); }, {a, m2}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::add(t, a, b), c34); }, {a, b}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::sub(t, a, b), c34); }, {a, b}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::mul(t, a, b), c34); }, {a, b}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::scale(t, a, 1.3), c34); }, {a}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::sigmoid(t, a), c34); }, {a}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::tanh(t, a), c34); }, {a}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::add_rowwise(t, a, v), c34); }, {a, v}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::softmax(t, a, 1), c34); }, {a}});
    checks.push_back({[&](Tape& t) { return ad::cross_entropy(t, a, {1, 0, 3}); }, {a}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::embed_rows(t, table, {4, 1}), c23); },
                      {table}});
    checks.push_back({[&](Tape& t) { return ad::mean(t, ad::slice(t, a, 0, 1, 2)); }, {a}});
    checks.push_back({[&](Tape& t) { return weighted(t, ad::concat(t, {a, b}, 0), c64); }, {a, b}});
    for (auto& [build, leaves] : checks) {
      report.max_rel_error = std::max(report.max_rel_error, max_rel_fd_error(build, leaves));
      for (const auto& t : leaves) report.coordinates += static_cast<int>(t.numel());
    }
  }
  return report;
}

}  // namespace vqr::gradcheck
