#pragma once

// Adam training loop with early stopping, evaluation reports, score-file
// prediction, and the ablation harness that reruns training across the
// feature/encoder/program axes.

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "vqr/dataset.hpp"
#include "vqr/ensemble.hpp"
#include "vqr/model.hpp"

namespace vqr::train {

/// Raised when the loss goes non-finite; carries the abort diagnostics.
class TrainAbort : public Error {
 public:
  TrainAbort(int epoch, int batch, double max_abs_grad)
      : Error(ErrorClass::contract,
              "training aborted: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                  std::to_string(batch) + ", max |grad| = " + std::to_string(max_abs_grad)),
        epoch_(epoch),
        batch_(batch),
        max_abs_grad_(max_abs_grad) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }
  double max_abs_grad() const { return max_abs_grad_; }

 private:
  int epoch_, batch_;
  double max_abs_grad_;
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 30;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, skips biases and embeddings
  int patience = 5;
  std::uint64_t seed = 0;
  model::ModelConfig model;

  void validate() const;
};

/// One model-ready supervised item. Bundles are shared across the questions
/// of an image.
struct Example {
  std::vector<int> question_ids;
  std::vector<int> program_ids;
  std::shared_ptr<const world::FeatureBundle> bundle;
  int answer = 0;
  int template_id = 1;
  std::string qid;
};

/// Flag-applied examples for one split, in dataset order. limit < 0 keeps
/// everything.
std::vector<Example> make_examples(const io::Dataset& ds, const model::ModelConfig& cfg,
                                   io::Split split, int limit = -1);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double val_accuracy = 0;
};

struct TrainResult {
  model::Params params;  // parameters of the best validation epoch
  model::ModelConfig config;
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_accuracy = 0;
};

TrainResult train(const std::vector<Example>& train_set, const std::vector<Example>& val_set,
                  const TrainConfig& cfg);

struct EvalReport {
  double overall = 0;
  int count = 0;
  std::array<int, 6> template_total{};
  std::array<int, 6> template_correct{};
  std::vector<std::vector<int>> confusion;  // gold x predicted

  double template_accuracy(int tpl) const {  // tpl in 1..6
    const auto i = static_cast<std::size_t>(tpl - 1);
    return template_total[i] ? static_cast<double>(template_correct[i]) / template_total[i] : 0.0;
  }
  /// Accuracy over a subset of templates (1-based ids).
  double subset_accuracy(std::initializer_list<int> tpls) const;
};

EvalReport evaluate(model::Params& params, const model::ModelConfig& cfg,
                    const std::vector<Example>& data);

/// Per-item probability vectors, keyed by qid, eval-mode deterministic.
ensemble::ScoreSet predict_scores(model::Params& params, const model::ModelConfig& cfg,
                                  const std::vector<Example>& data, std::string tag = "model");

/// Gold answer classes keyed by qid.
std::map<std::string, int> gold_labels(const std::vector<Example>& data);

/// Majority-class accuracy of a split; the floor any trained model must beat.
double majority_baseline(const std::vector<Example>& data);

// ---------------------------------------------------------------------------
// ablation harness
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string label;
  world::Quality quality = world::Quality::high;
  model::ModelConfig cfg;
};

/// The twelve-row grid: feature quality x3, detection vs detection+spatial,
/// bbox none/position/position+size, encoder x2, program channel x2, all
/// varied against a detection-only baseline.
std::vector<AblationRow> ablation_grid(const model::ModelConfig& base);

struct AblationRowResult {
  std::string label;
  std::vector<double> val_acc;        // per training seed
  std::vector<double> spatial_acc;    // templates 3+4 subset
  std::vector<double> multistep_acc;  // templates 4+5 subset
  double median_val = 0, median_spatial = 0, median_multistep = 0;
};

struct AblationReport {
  std::vector<AblationRowResult> rows;
  std::string split_hash;  // identical across rows by construction
  std::vector<std::uint64_t> seeds;
  std::string to_text() const;
};

struct AblationConfig {
  std::uint64_t data_seed = 0;
  io::GenConfig gen;            // quality field is overridden per row
  TrainConfig train;            // model field is overridden per row
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int train_limit = 2000;
  int val_limit = 600;
  int jobs = 1;
};

AblationReport run_ablation(const AblationConfig& cfg);

double median(std::vector<double> v);

}  // namespace vqr::train
