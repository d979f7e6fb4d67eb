#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "vqr/dataset.hpp"
#include "vqr/ensemble.hpp"
#include "vqr/lang.hpp"

#ifndef VQR_CLI_PATH
#error "VQR_CLI_PATH must point at the vqr binary"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
  int exit_code = -1;
  json stdout_json;  // null when stdout was not JSON
  std::string stdout_text;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd =
      std::string(VQR_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream f(out);
  r.stdout_text.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
  try {
    r.stdout_json = json::parse(r.stdout_text);
  } catch (const json::exception&) {
    r.stdout_json = nullptr;
  }
  return r;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("vqr_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int count_lines(const fs::path& p) {
  std::ifstream f(p);
  int n = 0;
  std::string line;
  while (std::getline(f, line)) n += !line.empty();
  return n;
}

}  // namespace

TEST_CASE("gen writes the dataset files and is seed deterministic") {
  TempDir tmp;
  const std::string d1 = (tmp.path / "d1").string(), d2 = (tmp.path / "d2").string();
  auto r1 = run_cli("gen --out " + d1 + " --num-images 10 --questions-per-image 5 --seed 3", tmp.path);
  REQUIRE(r1.exit_code == 0);
  CHECK(r1.stdout_json.at("questions") == 50);
  CHECK(count_lines(fs::path(d1) / "questions.jsonl") == 50);
  CHECK(count_lines(fs::path(d1) / "scenes.jsonl") == 10);
  CHECK(fs::exists(fs::path(d1) / "manifest.json"));
  CHECK(fs::exists(fs::path(d1) / "splits.json"));

  auto r2 = run_cli("gen --out " + d2 + " --num-images 10 --questions-per-image 5 --seed 3", tmp.path);
  REQUIRE(r2.exit_code == 0);
  CHECK(vqr::io::file_fingerprint(d1 + "/scenes.jsonl") ==
        vqr::io::file_fingerprint(d2 + "/scenes.jsonl"));
  CHECK(vqr::io::file_fingerprint(d1 + "/questions.jsonl") ==
        vqr::io::file_fingerprint(d2 + "/questions.jsonl"));

  // the dataset round-trips through the readers
  vqr::io::Dataset ds = vqr::io::read_dataset(d1 + "/scenes.jsonl", d1 + "/questions.jsonl");
  CHECK(ds.scenes.size() == 10);
  CHECK(ds.questions.size() == 50);
  for (const auto& q : ds.questions)
    CHECK(vqr::lang::execute_program(q.program, ds.scene_of(q.image_id)) == q.answer);
}

TEST_CASE("usage and io failures use distinct exit codes") {
  TempDir tmp;
  CHECK(run_cli("gen --out " + (tmp.path / "x").string() + " --quality bogus", tmp.path).exit_code == 2);
  CHECK(run_cli("gen --out " + (tmp.path / "y").string() + " --num-images 0", tmp.path).exit_code == 2);
  CHECK(run_cli("gen", tmp.path).exit_code == 2);  // missing required --out
  CHECK(run_cli("frobnicate", tmp.path).exit_code == 2);
  CHECK(run_cli("train --data " + (tmp.path / "missing").string() + " --out " +
                    (tmp.path / "ck.json").string(),
                tmp.path)
            .exit_code == 3);
  // eval wants exactly one of --ckpt/--scores
  CHECK(run_cli("eval --data " + (tmp.path / "missing").string(), tmp.path).exit_code == 2);
}

TEST_CASE("train, predict, eval, ensemble pipeline") {
  TempDir tmp;
  const std::string data = (tmp.path / "data").string();
  REQUIRE(run_cli("gen --out " + data + " --num-images 30 --questions-per-image 4 --seed 9", tmp.path)
              .exit_code == 0);

  const std::string ck1 = (tmp.path / "m1.ckpt.json").string();
  const std::string ck2 = (tmp.path / "m2.ckpt.json").string();
  auto t1 = run_cli("train --data " + data + " --out " + ck1 +
                        " --seed 1 --epochs 2 --batch 16 --bbox-position",
                    tmp.path);
  REQUIRE(t1.exit_code == 0);
  CHECK(t1.stdout_json.at("best_epoch").get<int>() >= 1);
  CHECK(fs::exists(ck1 + ".history.json"));
  CHECK(fs::exists(ck1 + ".manifest.json"));
  auto t2 = run_cli("train --data " + data + " --out " + ck2 +
                        " --seed 2 --epochs 2 --batch 16 --bbox-position",
                    tmp.path);
  REQUIRE(t2.exit_code == 0);

  // deterministic retrain: same seed, same bytes
  const std::string ck1b = (tmp.path / "m1b.ckpt.json").string();
  REQUIRE(run_cli("train --data " + data + " --out " + ck1b +
                      " --seed 1 --epochs 2 --batch 16 --bbox-position",
                  tmp.path)
              .exit_code == 0);
  CHECK(vqr::io::file_fingerprint(ck1) == vqr::io::file_fingerprint(ck1b));

  const std::string s1 = (tmp.path / "m1.val.jsonl").string();
  const std::string s2 = (tmp.path / "m2.val.jsonl").string();
  auto p1 = run_cli("predict --data " + data + " --ckpt " + ck1 + " --split val --out " + s1, tmp.path);
  REQUIRE(p1.exit_code == 0);
  REQUIRE(run_cli("predict --data " + data + " --ckpt " + ck2 + " --split val --out " + s2, tmp.path)
              .exit_code == 0);
  CHECK(count_lines(s1) == p1.stdout_json.at("items").get<int>());

  // prediction reruns are byte identical
  const std::string s1b = (tmp.path / "m1b.val.jsonl").string();
  REQUIRE(run_cli("predict --data " + data + " --ckpt " + ck1 + " --split val --out " + s1b, tmp.path)
              .exit_code == 0);
  CHECK(vqr::io::file_fingerprint(s1) == vqr::io::file_fingerprint(s1b));

  auto ev = run_cli("eval --data " + data + " --ckpt " + ck1 + " --split val", tmp.path);
  REQUIRE(ev.exit_code == 0);
  CHECK(ev.stdout_json.at("accuracy").get<double>() >= 0.0);
  CHECK(ev.stdout_json.at("per_template").size() == 6);

  // eval of a score file built from the gold answers scores accuracy 1
  vqr::io::Dataset ds = vqr::io::read_dataset(data + "/scenes.jsonl", data + "/questions.jsonl");
  vqr::ensemble::ScoreSet oracle;
  oracle.fingerprint = vqr::lang::answer_vocab_fingerprint();
  for (const auto& q : ds.questions) {
    if (vqr::io::split_of(q.image_id) != vqr::io::Split::val) continue;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(24);
    v(vqr::lang::answer_index(q.answer)) = 1.0;
    oracle.scores.emplace(q.qid, std::move(v));
  }
  const std::string oracle_path = (tmp.path / "oracle.val.jsonl").string();
  vqr::ensemble::write_scores_jsonl(oracle, oracle_path);
  auto evs = run_cli("eval --data " + data + " --scores " + oracle_path + " --split val", tmp.path);
  REQUIRE(evs.exit_code == 0);
  CHECK(evs.stdout_json.at("accuracy").get<double>() == 1.0);

  // ensembling two models: weighted never below average, report written
  const std::string report = (tmp.path / "ens.json").string();
  auto en = run_cli("ensemble --val-scores " + s1 + " " + s2 + " --data " + data + " --out " + report,
                    tmp.path);
  REQUIRE(en.exit_code == 0);
  CHECK(en.stdout_json.at("val_accuracy_weighted").get<double>() >=
        en.stdout_json.at("val_accuracy_average").get<double>());
  CHECK(fs::exists(report));
  CHECK(fs::exists(report + ".manifest.json"));
}

TEST_CASE("gradcheck passes quickly at small seed counts") {
  TempDir tmp;
  auto r = run_cli("gradcheck --seeds 2", tmp.path);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_json.at("pass").get<bool>() == true);
  CHECK(r.stdout_json.at("max_rel_error").get<double>() < 1e-4);
}

TEST_CASE("ablate emits the twelve-row table") {
  TempDir tmp;
  const std::string out = (tmp.path / "abl").string();
  auto r = run_cli("ablate --out " + out +
                       " --seed 5 --images 30 --questions-per-image 3 --seeds 1 --jobs 2"
                       " --train-limit 40 --val-limit 16 --epochs 1",
                   tmp.path);
  REQUIRE(r.exit_code == 0);
  CHECK(r.stdout_json.at("rows") == 12);
  std::ifstream f(out + "/ablation.txt");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  CHECK(text.find("Validation") != std::string::npos);
  int rows = 0;
  for (const char* label : {"Baseline with low quality features", "Baseline with bayesian gru",
                            "Baseline with position and size features"})
    rows += text.find(label) != std::string::npos;
  CHECK(rows == 3);
  json jrep = json::parse(std::ifstream(out + "/ablation.json"));
  CHECK(jrep.at("rows").size() == 12);
}
