// vqr: synthetic visual-question-reasoning lab.
// Subcommands: gen, train, predict, eval, ensemble, ablate, gradcheck.
// Every command prints a machine-readable JSON summary on success and exits
// nonzero with a one-line diagnostic on failure (1 contract, 2 usage, 3 io).

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "vqr/dataset.hpp"
#include "vqr/ensemble.hpp"
#include "vqr/errors.hpp"
#include "vqr/gradcheck.hpp"
#include "vqr/model.hpp"
#include "vqr/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vqr;

namespace {

constexpr const char* kToolVersion = "vqr 0.1.0";

std::vector<std::string> g_argv;

io::RunManifest manifest_base(const std::string& command, std::uint64_t seed, const json& config) {
  io::RunManifest m;
  m.tool_version = kToolVersion;
  m.command = command;
  m.argv = g_argv;
  m.master_seed = seed;
  std::ostringstream os;
  os << std::hex << fnv1a64(config.dump());
  m.config_hash = os.str();
  return m;
}

void emit(const json& summary) { std::cout << summary.dump(2) << '\n'; }

io::Split parse_split(const std::string& s) {
  if (s == "train") return io::Split::train;
  if (s == "val") return io::Split::val;
  if (s == "test") return io::Split::test;
  throw UsageError("unknown split '" + s + "' (expected train, val, or test)");
}

world::Quality parse_quality(const std::string& s) {
  try {
    return world::quality_from_name(s);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
}

json history_json(const train::TrainResult& res) {
  json hist = json::array();
  for (const auto& h : res.history)
    hist.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_accuracy", h.val_accuracy}});
  return {{"history", hist},
          {"best_epoch", res.best_epoch},
          {"best_val_accuracy", res.best_val_accuracy}};
}

json report_json(const train::EvalReport& r, bool with_confusion) {
  json per = json::object();
  for (int tpl = 1; tpl <= 6; ++tpl) {
    per["T" + std::to_string(tpl)] = {
        {"accuracy", r.template_accuracy(tpl)},
        {"count", r.template_total[static_cast<std::size_t>(tpl - 1)]}};
  }
  json out{{"accuracy", r.overall},
           {"count", r.count},
           {"per_template", per},
           {"spatial_subset_accuracy", r.subset_accuracy({3, 4})},
           {"multistep_subset_accuracy", r.subset_accuracy({4, 5})}};
  if (with_confusion) out["confusion"] = r.confusion;
  return out;
}

io::Dataset load_dataset(const std::string& dir) {
  return io::read_dataset((fs::path(dir) / "scenes.jsonl").string(),
                          (fs::path(dir) / "questions.jsonl").string());
}

void check_data_dims(const io::Dataset& ds, const model::ModelConfig& cfg) {
  if (ds.raw_bundles.empty()) throw InputError("dataset has no scenes");
  const auto& b = ds.raw_bundles.front();
  if (b.detection.cols() != cfg.det_dim)
    throw ContractError("dataset detection width " + std::to_string(b.detection.cols()) +
                        " does not match the model det_dim " + std::to_string(cfg.det_dim));
  if (b.spatial.cols() != cfg.cell_dim || b.spatial.rows() != cfg.grid * cfg.grid)
    throw ContractError("dataset spatial grid does not match the model grid/cell_dim");
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

struct GenArgs {
  std::string out;
  int num_images = 100;
  int questions_per_image = 5;
  std::uint64_t seed = 0;
  std::string quality = "high";
};

int cmd_gen(const GenArgs& a) {
  if (a.num_images < 1 || a.questions_per_image < 1)
    throw UsageError("--num-images and --questions-per-image must be positive");
  io::GenConfig gen;
  gen.num_images = a.num_images;
  gen.questions_per_image = a.questions_per_image;
  gen.quality = parse_quality(a.quality);
  try {
    fs::create_directories(a.out);
  } catch (const fs::filesystem_error& e) {
    throw UsageError("cannot create output directory '" + a.out + "': " + e.what());
  }
  io::Dataset ds = io::gen_dataset(a.seed, gen);

  const std::string scenes = (fs::path(a.out) / "scenes.jsonl").string();
  const std::string questions = (fs::path(a.out) / "questions.jsonl").string();
  const std::string splits = (fs::path(a.out) / "splits.json").string();
  io::write_scenes_jsonl(ds, scenes);
  io::write_questions_jsonl(ds, questions);
  io::write_splits_json(ds, splits);

  const json cfg{{"num_images", a.num_images},
                 {"questions_per_image", a.questions_per_image},
                 {"quality", a.quality},
                 {"seed", a.seed}};
  io::RunManifest m = manifest_base("gen", a.seed, cfg);
  m.output_hashes[scenes] = io::file_fingerprint(scenes);
  m.output_hashes[questions] = io::file_fingerprint(questions);
  m.output_hashes[splits] = io::file_fingerprint(splits);
  m.write((fs::path(a.out) / "manifest.json").string());

  emit({{"command", "gen"},
        {"images", static_cast<int>(ds.scenes.size())},
        {"questions", static_cast<int>(ds.questions.size())},
        {"out", a.out},
        {"outputs", m.output_hashes}});
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, config_path;
  std::uint64_t seed = 0;
  int epochs = 30, batch = 32, patience = 5;
  double lr = 1e-3, dropout = 0.25;
  bool no_spatial = false, bbox_position = false, bbox_size = false, no_program = false;
  std::string encoder = "gru";
  int train_limit = -1, val_limit = -1;
  // which options were set on the command line (flags win over --config)
  std::map<std::string, bool> given;
};

train::TrainConfig resolve_train_config(TrainArgs& a) {
  if (!a.config_path.empty()) {
    std::ifstream f(a.config_path);
    if (!f) throw IoError("cannot read config '" + a.config_path + "'");
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw ParseError("config '" + a.config_path + "': " + e.what());
    }
    auto pull = [&](const char* key, auto& into) {
      if (j.contains(key) && !a.given[key]) into = j.at(key).get<std::decay_t<decltype(into)>>();
    };
    pull("lr", a.lr);
    pull("epochs", a.epochs);
    pull("batch", a.batch);
    pull("patience", a.patience);
    pull("seed", a.seed);
    pull("dropout", a.dropout);
    pull("encoder", a.encoder);
    pull("train_limit", a.train_limit);
    pull("val_limit", a.val_limit);
    if (j.contains("spatial") && !a.given["spatial"]) a.no_spatial = !j.at("spatial").get<bool>();
    if (j.contains("program") && !a.given["program"]) a.no_program = !j.at("program").get<bool>();
    if (j.contains("bbox_position") && !a.given["bbox_position"])
      a.bbox_position = j.at("bbox_position").get<bool>();
    if (j.contains("bbox_size") && !a.given["bbox_size"]) a.bbox_size = j.at("bbox_size").get<bool>();
  }
  train::TrainConfig tc;
  tc.lr = a.lr;
  tc.batch_size = a.batch;
  tc.max_epochs = a.epochs;
  tc.patience = a.patience;
  tc.seed = a.seed;
  tc.model.use_spatial = !a.no_spatial;
  tc.model.use_bbox_position = a.bbox_position;
  tc.model.use_bbox_size = a.bbox_size;
  tc.model.use_program = !a.no_program;
  try {
    tc.model.encoder = model::encoder_from_name(a.encoder);
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  tc.model.dropout_rate = a.dropout;
  tc.model.seed = a.seed;
  try {
    tc.validate();
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  return tc;
}

json train_config_json(const train::TrainConfig& tc) {
  return {{"lr", tc.lr},
          {"batch", tc.batch_size},
          {"epochs", tc.max_epochs},
          {"patience", tc.patience},
          {"seed", tc.seed},
          {"spatial", tc.model.use_spatial},
          {"bbox_position", tc.model.use_bbox_position},
          {"bbox_size", tc.model.use_bbox_size},
          {"program", tc.model.use_program},
          {"encoder", model::encoder_name(tc.model.encoder)},
          {"dropout", tc.model.dropout_rate}};
}

int cmd_train(TrainArgs& a) {
  train::TrainConfig tc = resolve_train_config(a);
  io::Dataset ds = load_dataset(a.data);
  check_data_dims(ds, tc.model);
  auto train_set = train::make_examples(ds, tc.model, io::Split::train, a.train_limit);
  auto val_set = train::make_examples(ds, tc.model, io::Split::val, a.val_limit);
  train::TrainResult res = train::train(train_set, val_set, tc);

  model::save_checkpoint(res.params, res.config, a.out);
  const std::string history_path = a.out + ".history.json";
  {
    std::ofstream f(history_path);
    if (!f) throw IoError("cannot write '" + history_path + "'");
    f << history_json(res).dump(2) << '\n';
  }
  io::RunManifest m = manifest_base("train", a.seed, train_config_json(tc));
  const std::string scenes = (fs::path(a.data) / "scenes.jsonl").string();
  const std::string questions = (fs::path(a.data) / "questions.jsonl").string();
  m.input_hashes[scenes] = io::file_fingerprint(scenes);
  m.input_hashes[questions] = io::file_fingerprint(questions);
  m.output_hashes[a.out] = io::file_fingerprint(a.out);
  m.output_hashes[history_path] = io::file_fingerprint(history_path);
  m.write(a.out + ".manifest.json");

  emit({{"command", "train"},
        {"train_items", static_cast<int>(train_set.size())},
        {"val_items", static_cast<int>(val_set.size())},
        {"epochs_run", static_cast<int>(res.history.size())},
        {"best_epoch", res.best_epoch},
        {"best_val_accuracy", res.best_val_accuracy},
        {"majority_baseline", train::majority_baseline(val_set)},
        {"out", a.out}});
  return 0;
}

// ---------------------------------------------------------------------------
// predict / eval
// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string data, ckpt, split = "val", out, tag;
};

int cmd_predict(const PredictArgs& a) {
  model::Checkpoint ckpt = model::load_checkpoint(a.ckpt);
  io::Dataset ds = load_dataset(a.data);
  check_data_dims(ds, ckpt.config);
  auto examples = train::make_examples(ds, ckpt.config, parse_split(a.split));
  auto scores = train::predict_scores(ckpt.params, ckpt.config, examples,
                                      a.tag.empty() ? a.ckpt : a.tag);
  ensemble::write_scores_jsonl(scores, a.out);

  io::RunManifest m = manifest_base("predict", ckpt.config.seed, json{{"split", a.split}});
  m.input_hashes[a.ckpt] = io::file_fingerprint(a.ckpt);
  m.output_hashes[a.out] = io::file_fingerprint(a.out);
  m.write(a.out + ".manifest.json");

  emit({{"command", "predict"},
        {"items", static_cast<int>(scores.scores.size())},
        {"split", a.split},
        {"out", a.out}});
  return 0;
}

struct EvalArgs {
  std::string data, ckpt, scores, split = "val", out;
};

int cmd_eval(const EvalArgs& a) {
  if (a.ckpt.empty() == a.scores.empty())
    throw UsageError("eval needs exactly one of --ckpt or --scores");
  io::Dataset ds = load_dataset(a.data);
  const io::Split split = parse_split(a.split);
  json summary;
  if (!a.ckpt.empty()) {
    model::Checkpoint ckpt = model::load_checkpoint(a.ckpt);
    check_data_dims(ds, ckpt.config);
    auto examples = train::make_examples(ds, ckpt.config, split);
    train::EvalReport report = train::evaluate(ckpt.params, ckpt.config, examples);
    summary = report_json(report, false);
    summary["command"] = "eval";
    summary["split"] = a.split;
    summary["majority_baseline"] = train::majority_baseline(examples);
    if (!a.out.empty()) {
      json full = report_json(report, true);
      full["split"] = a.split;
      std::ofstream f(a.out);
      if (!f) throw IoError("cannot write '" + a.out + "'");
      f << full.dump(2) << '\n';
      summary["out"] = a.out;
    }
  } else {
    ensemble::ScoreSet set = ensemble::read_scores_jsonl(a.scores);
    if (set.fingerprint != lang::answer_vocab_fingerprint())
      throw ContractError("score file '" + a.scores + "': answer vocabulary fingerprint mismatch");
    // gold labels and per-template ids for the split
    std::map<std::string, int> gold;
    std::map<std::string, int> tpl;
    for (const auto& q : ds.questions)
      if (io::split_of(q.image_id) == split) {
        gold[q.qid] = lang::answer_index(q.answer);
        tpl[q.qid] = lang::template_of(q.program);
      }
    const double acc = ensemble::accuracy(set, gold);
    std::array<int, 6> total{}, correct{};
    for (const auto& [qid, cls] : gold) {
      const auto t = static_cast<std::size_t>(tpl.at(qid) - 1);
      total[t]++;
      correct[t] += ensemble::argmax_class(set.scores.at(qid)) == cls;
    }
    json per = json::object();
    for (int i = 0; i < 6; ++i)
      per["T" + std::to_string(i + 1)] = {
          {"accuracy", total[static_cast<std::size_t>(i)]
                           ? static_cast<double>(correct[static_cast<std::size_t>(i)]) /
                                 total[static_cast<std::size_t>(i)]
                           : 0.0},
          {"count", total[static_cast<std::size_t>(i)]}};
    summary = {{"command", "eval"},
               {"accuracy", acc},
               {"count", static_cast<int>(gold.size())},
               {"per_template", per},
               {"split", a.split}};
    if (!a.out.empty()) {
      std::ofstream f(a.out);
      if (!f) throw IoError("cannot write '" + a.out + "'");
      f << summary.dump(2) << '\n';
    }
  }
  emit(summary);
  return 0;
}

// ---------------------------------------------------------------------------
// ensemble
// ---------------------------------------------------------------------------

struct EnsembleArgs {
  std::vector<std::string> val_scores, test_scores;
  std::string data, out, out_scores;
  double step = 0.05;
};

int cmd_ensemble(const EnsembleArgs& a) {
  if (a.val_scores.empty()) throw UsageError("ensemble needs at least one --val-scores file");
  if (!a.test_scores.empty() && a.test_scores.size() != a.val_scores.size())
    throw UsageError("--test-scores must list one file per --val-scores file");
  io::Dataset ds = load_dataset(a.data);

  std::vector<ensemble::ScoreSet> val_sets;
  std::vector<std::string> models;
  for (const auto& path : a.val_scores) {
    val_sets.push_back(ensemble::read_scores_jsonl(path));
    models.push_back(path);
  }
  auto gold_for = [&](io::Split split) {
    std::map<std::string, int> gold;
    for (const auto& q : ds.questions)
      if (io::split_of(q.image_id) == split) gold[q.qid] = lang::answer_index(q.answer);
    return gold;
  };
  const auto val_gold = gold_for(io::Split::val);
  const auto avg_val = ensemble::average_ensemble(val_sets);
  const double avg_val_acc = ensemble::accuracy(avg_val, val_gold);
  auto searched = ensemble::search_weights(val_sets, val_gold, a.step);
  auto weighted_val = ensemble::combine(val_sets, searched.weights);

  json report{{"command", "ensemble"},
              {"models", models},
              {"weights", searched.weights},
              {"val_accuracy_average", avg_val_acc},
              {"val_accuracy_weighted", searched.val_accuracy}};

  ensemble::ScoreSet ensembled = weighted_val;
  if (!a.test_scores.empty()) {
    std::vector<ensemble::ScoreSet> test_sets;
    for (const auto& path : a.test_scores) test_sets.push_back(ensemble::read_scores_jsonl(path));
    const auto test_gold = gold_for(io::Split::test);
    report["test_accuracy_average"] =
        ensemble::accuracy(ensemble::average_ensemble(test_sets), test_gold);
    ensembled = ensemble::combine(test_sets, searched.weights);
    report["test_accuracy_weighted"] = ensemble::accuracy(ensembled, test_gold);
  }

  io::RunManifest m = manifest_base("ensemble", 0, json{{"step", a.step}});
  for (const auto& path : a.val_scores) m.input_hashes[path] = io::file_fingerprint(path);
  for (const auto& path : a.test_scores) m.input_hashes[path] = io::file_fingerprint(path);
  if (!a.out_scores.empty()) {
    ensemble::write_scores_jsonl(ensembled, a.out_scores);
    m.output_hashes[a.out_scores] = io::file_fingerprint(a.out_scores);
    report["out_scores"] = a.out_scores;
  }
  {
    std::ofstream f(a.out);
    if (!f) throw IoError("cannot write '" + a.out + "'");
    f << report.dump(2) << '\n';
  }
  m.output_hashes[a.out] = io::file_fingerprint(a.out);
  m.write(a.out + ".manifest.json");
  emit(report);
  return 0;
}

// ---------------------------------------------------------------------------
// ablate / gradcheck
// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string out;
  std::uint64_t seed = 0;
  int images = 600, questions_per_image = 5;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int jobs = 1, train_limit = 2000, val_limit = 600, epochs = 25;
};

int cmd_ablate(const AblateArgs& a) {
  if (a.images < 1 || a.seeds.empty()) throw UsageError("--images and --seeds must be nonempty");
  train::AblationConfig ac;
  ac.data_seed = a.seed;
  ac.gen.num_images = a.images;
  ac.gen.questions_per_image = a.questions_per_image;
  ac.train.max_epochs = a.epochs;
  ac.seeds = a.seeds;
  ac.train_limit = a.train_limit;
  ac.val_limit = a.val_limit;
  ac.jobs = a.jobs;
  try {
    fs::create_directories(a.out);
  } catch (const fs::filesystem_error& e) {
    throw UsageError("cannot create output directory '" + a.out + "': " + e.what());
  }
  train::AblationReport report = train::run_ablation(ac);

  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"label", r.label},
                    {"val_accuracy", r.val_acc},
                    {"spatial_subset_accuracy", r.spatial_acc},
                    {"multistep_subset_accuracy", r.multistep_acc},
                    {"median_val_accuracy", r.median_val},
                    {"median_spatial_subset", r.median_spatial},
                    {"median_multistep_subset", r.median_multistep}});
  json jreport{{"command", "ablate"},
               {"rows", rows},
               {"split_hash", report.split_hash},
               {"seeds", report.seeds}};
  const std::string jpath = (fs::path(a.out) / "ablation.json").string();
  const std::string tpath = (fs::path(a.out) / "ablation.txt").string();
  {
    std::ofstream f(jpath);
    if (!f) throw IoError("cannot write '" + jpath + "'");
    f << jreport.dump(2) << '\n';
  }
  {
    std::ofstream f(tpath);
    if (!f) throw IoError("cannot write '" + tpath + "'");
    f << report.to_text();
  }
  io::RunManifest m = manifest_base(
      "ablate", a.seed,
      json{{"images", a.images}, {"seeds", a.seeds}, {"epochs", a.epochs}});
  m.output_hashes[jpath] = io::file_fingerprint(jpath);
  m.output_hashes[tpath] = io::file_fingerprint(tpath);
  m.write((fs::path(a.out) / "manifest.json").string());

  emit({{"command", "ablate"},
        {"rows", static_cast<int>(report.rows.size())},
        {"split_hash", report.split_hash},
        {"out", a.out}});
  return 0;
}

struct GradcheckArgs {
  int seeds = 20;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  if (a.seeds < 1) throw UsageError("--seeds must be positive");
  const auto ops = gradcheck::check_operations(a.seeds);
  const auto full = gradcheck::check_full_model(a.seeds);
  const double max_err = std::max(ops.max_rel_error, full.max_rel_error);
  const bool pass = max_err < 1e-4;
  emit({{"command", "gradcheck"},
        {"seeds", a.seeds},
        {"op_max_rel_error", ops.max_rel_error},
        {"full_model_max_rel_error", full.max_rel_error},
        {"max_rel_error", max_err},
        {"coordinates", ops.coordinates + full.coordinates},
        {"pass", pass}});
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_argv.emplace_back(argv[i]);

  CLI::App app{"synthetic visual question reasoning lab"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* cgen = app.add_subcommand("gen", "generate a dataset");
  cgen->add_option("--out", gen.out, "output directory")->required();
  cgen->add_option("--num-images", gen.num_images, "number of scenes");
  cgen->add_option("--questions-per-image", gen.questions_per_image, "questions per scene");
  cgen->add_option("--seed", gen.seed, "master seed");
  cgen->add_option("--quality", gen.quality, "feature quality: low, med, high");

  TrainArgs tr;
  auto* ctrain = app.add_subcommand("train", "train a model");
  ctrain->add_option("--data", tr.data, "dataset directory")->required();
  ctrain->add_option("--out", tr.out, "checkpoint path")->required();
  ctrain->add_option("--config", tr.config_path, "JSON config; command-line flags win");
  auto* o_seed = ctrain->add_option("--seed", tr.seed, "training + init seed");
  auto* o_epochs = ctrain->add_option("--epochs", tr.epochs, "max epochs");
  auto* o_batch = ctrain->add_option("--batch", tr.batch, "batch size");
  auto* o_lr = ctrain->add_option("--lr", tr.lr, "Adam learning rate");
  auto* o_pat = ctrain->add_option("--patience", tr.patience, "early-stop patience");
  auto* o_drop = ctrain->add_option("--dropout", tr.dropout, "locked dropout rate");
  auto* o_enc = ctrain->add_option("--encoder", tr.encoder, "gru or bayesian_gru");
  auto* o_nosp = ctrain->add_flag("--no-spatial", tr.no_spatial, "drop the spatial pipeline");
  auto* o_pos = ctrain->add_flag("--bbox-position", tr.bbox_position, "append normalized centers");
  auto* o_size = ctrain->add_flag("--bbox-size", tr.bbox_size, "append normalized extents");
  auto* o_noprog = ctrain->add_flag("--no-program", tr.no_program, "drop the program channel");
  auto* o_trl = ctrain->add_option("--train-limit", tr.train_limit, "cap train items");
  auto* o_val = ctrain->add_option("--val-limit", tr.val_limit, "cap val items");

  PredictArgs pr;
  auto* cpred = app.add_subcommand("predict", "write per-item score lines");
  cpred->add_option("--data", pr.data, "dataset directory")->required();
  cpred->add_option("--ckpt", pr.ckpt, "checkpoint path")->required();
  cpred->add_option("--split", pr.split, "train, val, or test");
  cpred->add_option("--out", pr.out, "scores.jsonl path")->required();
  cpred->add_option("--tag", pr.tag, "model tag recorded in the score set");

  EvalArgs ev;
  auto* ceval = app.add_subcommand("eval", "evaluate a checkpoint or a score file");
  ceval->add_option("--data", ev.data, "dataset directory")->required();
  ceval->add_option("--ckpt", ev.ckpt, "checkpoint path");
  ceval->add_option("--scores", ev.scores, "scores.jsonl path");
  ceval->add_option("--split", ev.split, "train, val, or test");
  ceval->add_option("--out", ev.out, "write the full report here");

  EnsembleArgs en;
  auto* cens = app.add_subcommand("ensemble", "combine score files");
  cens->add_option("--val-scores", en.val_scores, "validation score files")->required();
  cens->add_option("--test-scores", en.test_scores, "test score files, same order");
  cens->add_option("--data", en.data, "dataset directory (gold labels)")->required();
  cens->add_option("--step", en.step, "weight lattice resolution");
  cens->add_option("--out", en.out, "report path")->required();
  cens->add_option("--out-scores", en.out_scores, "write the ensembled scores here");

  AblateArgs ab;
  auto* cabl = app.add_subcommand("ablate", "run the 12-row ablation grid");
  cabl->add_option("--out", ab.out, "output directory")->required();
  cabl->add_option("--seed", ab.seed, "dataset master seed");
  cabl->add_option("--images", ab.images, "scenes to generate");
  cabl->add_option("--questions-per-image", ab.questions_per_image, "questions per scene");
  cabl->add_option("--seeds", ab.seeds, "training seeds (median is reported)");
  cabl->add_option("--jobs", ab.jobs, "parallel training jobs");
  cabl->add_option("--train-limit", ab.train_limit, "cap train items per run");
  cabl->add_option("--val-limit", ab.val_limit, "cap val items per run");
  cabl->add_option("--epochs", ab.epochs, "max epochs per run");

  GradcheckArgs gc;
  auto* cgrad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  cgrad->add_option("--seeds", gc.seeds, "random repetitions");

  try {
    app.parse(argc, argv);
    if (cgen->parsed()) return cmd_gen(gen);
    if (ctrain->parsed()) {
      tr.given["seed"] = o_seed->count() > 0;
      tr.given["epochs"] = o_epochs->count() > 0;
      tr.given["batch"] = o_batch->count() > 0;
      tr.given["lr"] = o_lr->count() > 0;
      tr.given["patience"] = o_pat->count() > 0;
      tr.given["dropout"] = o_drop->count() > 0;
      tr.given["encoder"] = o_enc->count() > 0;
      tr.given["spatial"] = o_nosp->count() > 0;
      tr.given["bbox_position"] = o_pos->count() > 0;
      tr.given["bbox_size"] = o_size->count() > 0;
      tr.given["program"] = o_noprog->count() > 0;
      tr.given["train_limit"] = o_trl->count() > 0;
      tr.given["val_limit"] = o_val->count() > 0;
      return cmd_train(tr);
    }
    if (cpred->parsed()) return cmd_predict(pr);
    if (ceval->parsed()) return cmd_eval(ev);
    if (cens->parsed()) return cmd_ensemble(en);
    if (cabl->parsed()) return cmd_ablate(ab);
    if (cgrad->parsed()) return cmd_gradcheck(gc);
    throw UsageError("no subcommand");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "vqr: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "vqr: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "vqr: " << e.what() << '\n';
    return 1;
  }
}
