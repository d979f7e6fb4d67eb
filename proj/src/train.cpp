#include "vqr/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "vqr/lang.hpp"

namespace vqr::train {

void TrainConfig::validate() const {
  // lr == 0 is the documented degenerate no-op step
  if (lr < 0) throw ParameterError("TrainConfig: lr must be nonnegative");
  if (batch_size < 1) throw ParameterError("TrainConfig: batch_size must be at least 1");
  if (max_epochs < 1) throw ParameterError("TrainConfig: max_epochs must be at least 1");
  if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
    throw ParameterError("TrainConfig: betas must lie in (0, 1)");
  if (weight_decay < 0) throw ParameterError("TrainConfig: weight_decay must be nonnegative");
  if (patience < 1) throw ParameterError("TrainConfig: patience must be at least 1");
}

std::vector<Example> make_examples(const io::Dataset& ds, const model::ModelConfig& cfg,
                                   io::Split split, int limit) {
  const world::FeatureFlags flags = cfg.feature_flags();
  std::unordered_map<std::string, std::shared_ptr<const world::FeatureBundle>> bundles;
  std::vector<Example> out;
  for (const auto& q : ds.questions) {
    if (io::split_of(q.image_id) != split) continue;
    if (limit >= 0 && static_cast<int>(out.size()) >= limit) break;
    auto it = bundles.find(q.image_id);
    if (it == bundles.end()) {
      auto applied = std::make_shared<world::FeatureBundle>(
          world::apply_flags(ds.bundle_of(q.image_id), flags));
      it = bundles.emplace(q.image_id, std::move(applied)).first;
    }
    Example ex;
    ex.question_ids = lang::question_token_ids(q.question);
    ex.program_ids = lang::program_token_ids(q.program);
    ex.bundle = it->second;
    ex.answer = lang::answer_index(q.answer);
    ex.template_id = lang::template_of(q.program);
    ex.qid = q.qid;
    out.push_back(std::move(ex));
  }
  return out;
}

namespace {

/// Adam over the named parameter tensors; missing gradients count as zero.
class Adam {
 public:
  Adam(model::Params& params, const TrainConfig& cfg) : params_(params), cfg_(cfg) {
    for (auto& [name, t] : params_.tensors) {
      m_.emplace(name, Eigen::ArrayXd::Zero(t.numel()));
      v_.emplace(name, Eigen::ArrayXd::Zero(t.numel()));
      const bool matrix = t.rank() == 2 && name.find("embed.") == std::string::npos;
      decayed_.emplace(name, matrix);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, p] : params_.tensors) {
      Eigen::ArrayXd g = Eigen::ArrayXd::Zero(p.numel());
      if (p.has_grad()) g = p.grad_array();
      auto& m = m_.at(name);
      auto& v = v_.at(name);
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
      p.values_mut() -= cfg_.lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
      if (cfg_.weight_decay > 0.0 && decayed_.at(name))
        p.values_mut() *= 1.0 - cfg_.lr * cfg_.weight_decay;
    }
  }

 private:
  model::Params& params_;
  TrainConfig cfg_;
  std::map<std::string, Eigen::ArrayXd> m_, v_;
  std::map<std::string, bool> decayed_;
  long t_ = 0;
};

double max_abs_grad(const model::Params& params) {
  double mx = 0;
  for (const auto& [name, t] : params.tensors)
    if (t.has_grad()) mx = std::max(mx, t.grad_array().abs().maxCoeff());
  return mx;
}

int predict_class(model::Params& params, const model::ModelConfig& cfg, const Example& ex) {
  Rng rng(0);  // eval mode draws nothing
  Tape tape;
  auto enc = model::encode(tape, ex.question_ids, ex.program_ids, cfg, params, nn::RunMode::eval, rng);
  Tensor probs = model::forward(tape, *ex.bundle, enc, cfg, params, nn::RunMode::eval, rng);
  int best = 0;
  for (ad::Index i = 1; i < probs.numel(); ++i)
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace

TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty() || val_set.empty())
    throw InputError("train: empty train or validation split");

  model::ModelConfig mcfg = cfg.model;
  model::Params params = model::Params::init(mcfg);
  Adam adam(params, cfg);
  Rng mask_rng(sub_seed(cfg.seed, "dropout"));

  TrainResult result;
  result.config = mcfg;
  result.best_epoch = -1;
  result.best_val_accuracy = -1;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // seeded per-epoch shuffle
    Rng shuffle_rng(sub_seed(cfg.seed, "shuffle/epoch" + std::to_string(epoch)));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0;
    int batch_index = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - at);
      params.zero_grads();
      double batch_loss = 0;
      for (std::size_t k = at; k < end; ++k) {
        const Example& ex = train_set[order[k]];
        Tape tape;
        auto enc = model::encode(tape, ex.question_ids, ex.program_ids, mcfg, params,
                                 nn::RunMode::train, mask_rng);
        Tensor logits =
            model::forward_logits(tape, *ex.bundle, enc, mcfg, params, nn::RunMode::train, mask_rng);
        Tensor item_loss =
            ad::cross_entropy(tape, ad::reshape(tape, logits, {1, mcfg.classes}), {ex.answer});
        batch_loss += item_loss.value();
        tape.backward(ad::scale(tape, item_loss, inv_batch));
      }
      if (!std::isfinite(batch_loss))
        throw TrainAbort(epoch, batch_index, max_abs_grad(params));
      loss_sum += batch_loss;
      adam.step();
      ++batch_index;
    }

    int correct = 0;
    for (const Example& ex : val_set) correct += predict_class(params, mcfg, ex) == ex.answer;
    const double val_acc = static_cast<double>(correct) / static_cast<double>(val_set.size());
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(train_set.size()), val_acc});

    if (val_acc > result.best_val_accuracy) {
      result.best_val_accuracy = val_acc;
      result.best_epoch = epoch;
      result.params = params.clone();
    }
    if (epoch - result.best_epoch >= cfg.patience) break;
  }
  return result;
}

double EvalReport::subset_accuracy(std::initializer_list<int> tpls) const {
  int total = 0, correct = 0;
  for (int tpl : tpls) {
    total += template_total[static_cast<std::size_t>(tpl - 1)];
    correct += template_correct[static_cast<std::size_t>(tpl - 1)];
  }
  return total ? static_cast<double>(correct) / total : 0.0;
}

EvalReport evaluate(model::Params& params, const model::ModelConfig& cfg,
                    const std::vector<Example>& data) {
  if (data.empty()) throw InputError("evaluate: empty dataset");
  EvalReport r;
  r.count = static_cast<int>(data.size());
  r.confusion.assign(static_cast<std::size_t>(cfg.classes),
                     std::vector<int>(static_cast<std::size_t>(cfg.classes), 0));
  int correct = 0;
  for (const Example& ex : data) {
    const int pred = predict_class(params, cfg, ex);
    const auto t = static_cast<std::size_t>(ex.template_id - 1);
    r.template_total[t]++;
    if (pred == ex.answer) {
      ++correct;
      r.template_correct[t]++;
    }
    r.confusion[static_cast<std::size_t>(ex.answer)][static_cast<std::size_t>(pred)]++;
  }
  r.overall = static_cast<double>(correct) / static_cast<double>(r.count);
  return r;
}

ensemble::ScoreSet predict_scores(model::Params& params, const model::ModelConfig& cfg,
                                  const std::vector<Example>& data, std::string tag) {
  if (data.empty()) throw InputError("predict: empty dataset");
  ensemble::ScoreSet out;
  out.fingerprint = lang::answer_vocab_fingerprint();
  out.tag = std::move(tag);
  for (const Example& ex : data) {
    Rng rng(0);
    Tape tape;
    auto enc =
        model::encode(tape, ex.question_ids, ex.program_ids, cfg, params, nn::RunMode::eval, rng);
    Tensor probs = model::forward(tape, *ex.bundle, enc, cfg, params, nn::RunMode::eval, rng);
    Eigen::VectorXd v(probs.numel());
    for (ad::Index i = 0; i < probs.numel(); ++i) v(i) = probs[i];
    out.scores.emplace(ex.qid, std::move(v));
  }
  return out;
}

std::map<std::string, int> gold_labels(const std::vector<Example>& data) {
  std::map<std::string, int> out;
  for (const Example& ex : data) out.emplace(ex.qid, ex.answer);
  return out;
}

double majority_baseline(const std::vector<Example>& data) {
  if (data.empty()) throw InputError("majority_baseline: empty dataset");
  std::map<int, int> counts;
  for (const Example& ex : data) counts[ex.answer]++;
  int best = 0;
  for (const auto& [cls, n] : counts) best = std::max(best, n);
  return static_cast<double>(best) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// ablation harness
// ---------------------------------------------------------------------------

double median(std::vector<double> v) {
  if (v.empty()) throw InputError("median of nothing");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<AblationRow> ablation_grid(const model::ModelConfig& base_in) {
  // detection-only baseline; each table axis varies one factor against it
  model::ModelConfig base = base_in;
  base.use_spatial = false;
  base.use_bbox_position = false;
  base.use_bbox_size = false;
  base.use_program = true;
  base.encoder = model::EncoderKind::gru;

  std::vector<AblationRow> rows;
  auto push = [&rows](std::string label, world::Quality q, model::ModelConfig cfg) {
    rows.push_back({std::move(label), q, cfg});
  };
  push("Baseline with low quality features", world::Quality::low, base);
  push("Baseline with med quality features", world::Quality::med, base);
  push("Baseline with high quality features", world::Quality::high, base);

  push("Baseline with detection features", world::Quality::high, base);
  model::ModelConfig with_sp = base;
  with_sp.use_spatial = true;
  push("Baseline with detection and spatial features", world::Quality::high, with_sp);

  push("Baseline", world::Quality::high, base);
  model::ModelConfig with_pos = base;
  with_pos.use_bbox_position = true;
  push("Baseline with position features", world::Quality::high, with_pos);
  model::ModelConfig with_pos_size = with_pos;
  with_pos_size.use_bbox_size = true;
  push("Baseline with position and size features", world::Quality::high, with_pos_size);

  push("Baseline with gru", world::Quality::high, base);
  model::ModelConfig bayes = base;
  bayes.encoder = model::EncoderKind::bayesian_gru;
  push("Baseline with bayesian gru", world::Quality::high, bayes);

  model::ModelConfig no_prog = base;
  no_prog.use_program = false;
  push("Baseline without program features", world::Quality::high, no_prog);
  push("Baseline with program features", world::Quality::high, base);
  return rows;
}

namespace {

std::string config_fingerprint(const AblationRow& row, std::uint64_t seed) {
  std::ostringstream os;
  os << world::quality_name(row.quality) << '/' << row.cfg.use_spatial << row.cfg.use_bbox_position
     << row.cfg.use_bbox_size << row.cfg.use_program << '/'
     << model::encoder_name(row.cfg.encoder) << '/' << row.cfg.dropout_rate << '/' << seed;
  return os.str();
}

}  // namespace

AblationReport run_ablation(const AblationConfig& cfg) {
  if (cfg.seeds.empty()) throw ParameterError("run_ablation: need at least one seed");
  // one dataset per quality; same master seed keeps scenes and questions
  // identical so rows differ only in what the spec varies
  std::map<world::Quality, io::Dataset> data;
  for (world::Quality q : {world::Quality::low, world::Quality::med, world::Quality::high}) {
    io::GenConfig gen = cfg.gen;
    gen.quality = q;
    data.emplace(q, io::gen_dataset(cfg.data_seed, gen));
  }
  {
    std::string splits;
    for (const auto& s : data.at(world::Quality::high).scenes)
      splits += s.image_id + "=" + io::split_name(io::split_of(s.image_id)) + ";";
    std::ostringstream os;
    os << std::hex << fnv1a64(splits);
    const std::string split_hash = os.str();

    const auto rows = ablation_grid(cfg.train.model);

    struct Task {
      std::size_t row;
      std::size_t seed_index;
      std::string key;
    };
    std::vector<Task> tasks;
    std::map<std::string, std::pair<double, std::array<double, 2>>> results;  // key -> (val, subsets)
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        const std::string key = config_fingerprint(rows[r], cfg.seeds[s]);
        if (results.emplace(key, std::pair<double, std::array<double, 2>>{}).second)
          tasks.push_back({r, s, key});
      }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t at = next.fetch_add(1);
        if (at >= tasks.size()) return;
        const Task& task = tasks[at];
        const AblationRow& row = rows[task.row];
        TrainConfig tc = cfg.train;
        tc.model = row.cfg;
        tc.model.seed = cfg.seeds[task.seed_index];
        tc.seed = cfg.seeds[task.seed_index];
        const io::Dataset& ds = data.at(row.quality);
        const auto train_set = make_examples(ds, tc.model, io::Split::train, cfg.train_limit);
        const auto val_set = make_examples(ds, tc.model, io::Split::val, cfg.val_limit);
        TrainResult res = train(train_set, val_set, tc);
        EvalReport report = evaluate(res.params, tc.model, val_set);
        results.at(task.key) = {report.overall,
                                {report.subset_accuracy({3, 4}), report.subset_accuracy({4, 5})}};
      }
    };
    const int jobs = std::max(1, cfg.jobs);
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    AblationReport report;
    report.split_hash = split_hash;
    report.seeds = cfg.seeds;
    for (const auto& row : rows) {
      AblationRowResult rr;
      rr.label = row.label;
      for (std::uint64_t seed : cfg.seeds) {
        const auto& [val, subsets] = results.at(config_fingerprint(row, seed));
        rr.val_acc.push_back(val);
        rr.spatial_acc.push_back(subsets[0]);
        rr.multistep_acc.push_back(subsets[1]);
      }
      rr.median_val = median(rr.val_acc);
      rr.median_spatial = median(rr.spatial_acc);
      rr.median_multistep = median(rr.multistep_acc);
      report.rows.push_back(std::move(rr));
    }
    return report;
  }
}

std::string AblationReport::to_text() const {
  std::ostringstream os;
  os << "Models                                            Validation\n";
  os << "------------------------------------------------------------\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-50s %6.2f\n", r.label.c_str(), 100.0 * r.median_val);
    os << buf;
  }
  return os.str();
}

}  // namespace vqr::train
