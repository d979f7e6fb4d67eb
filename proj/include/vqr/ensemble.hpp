#pragma once

// Score-file ensembling: convex combination of per-model probability
// vectors, uniform averaging, and exhaustive simplex-lattice weight search
// on validation accuracy.

#include <Eigen/Dense>

#include <map>
#include <span>
#include <string>
#include <vector>

namespace vqr::ensemble {

/// One model's predictions: qid -> probability vector over the answer
/// vocabulary, bound to a vocabulary fingerprint.
struct ScoreSet {
  std::map<std::string, Eigen::VectorXd> scores;
  std::string fingerprint;
  std::string tag;
};

ScoreSet read_scores_jsonl(const std::string& path, std::string tag = {});
void write_scores_jsonl(const ScoreSet& set, const std::string& path);

/// First maximal entry; ties resolve to the lowest class index.
int argmax_class(const Eigen::VectorXd& scores);

/// Fraction of gold items whose argmax-decoded score matches. The qid sets
/// must align exactly.
double accuracy(const ScoreSet& set, const std::map<std::string, int>& gold);

/// Per qid: sum_k w_k * scores_k. Weights live on the simplex; sets must
/// share fingerprint and qid set.
ScoreSet combine(std::span<const ScoreSet> sets, const std::vector<double>& weights);

ScoreSet average_ensemble(std::span<const ScoreSet> sets);

struct WeightSearchResult {
  std::vector<double> weights;
  double val_accuracy = 0;
};

/// Argmax of validation accuracy over the simplex lattice of the given
/// resolution, always including the exact uniform point (so the result never
/// scores below the average ensemble). Ties break toward uniform, then
/// lexicographically. Beyond four models an exhaustive sweep is replaced by
/// deterministic coordinate ascent from uniform with step halving.
WeightSearchResult search_weights(std::span<const ScoreSet> sets,
                                  const std::map<std::string, int>& gold, double step = 0.05);

}  // namespace vqr::ensemble
