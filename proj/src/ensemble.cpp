#include "vqr/ensemble.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "vqr/errors.hpp"

namespace vqr::ensemble {

using nlohmann::json;

ScoreSet read_scores_jsonl(const std::string& path, std::string tag) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read scores '" + path + "'");
  ScoreSet set;
  set.tag = tag.empty() ? path : std::move(tag);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string qid = j.at("qid").get<std::string>();
    const auto vals = j.at("scores").get<std::vector<double>>();
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) v(static_cast<Eigen::Index>(i)) = vals[i];
    const std::string fp = j.at("vocab_fingerprint").get<std::string>();
    if (set.fingerprint.empty())
      set.fingerprint = fp;
    else if (set.fingerprint != fp)
      throw ContractError(path + ":" + std::to_string(lineno) + ": fingerprint changes mid-file");
    if (!set.scores.emplace(qid, std::move(v)).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate qid '" + qid + "'");
  }
  if (set.scores.empty()) throw InputError("score file '" + path + "' is empty");
  return set;
}

void write_scores_jsonl(const ScoreSet& set, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write scores '" + path + "'");
  for (const auto& [qid, v] : set.scores) {
    json line{{"qid", qid},
              {"scores", std::vector<double>(v.data(), v.data() + v.size())},
              {"vocab_fingerprint", set.fingerprint}};
    f << line.dump() << '\n';
  }
}

int argmax_class(const Eigen::VectorXd& scores) {
  int best = 0;
  for (Eigen::Index i = 1; i < scores.size(); ++i)
    if (scores(i) > scores(best)) best = static_cast<int>(i);
  return best;
}

namespace {

void check_alignment(std::span<const ScoreSet> sets) {
  if (sets.empty()) throw InputError("no score sets");
  for (std::size_t k = 1; k < sets.size(); ++k) {
    if (sets[k].fingerprint != sets[0].fingerprint)
      throw ContractError("score sets '" + sets[0].tag + "' and '" + sets[k].tag +
                          "' have different vocabulary fingerprints");
    if (sets[k].scores.size() == sets[0].scores.size() &&
        std::equal(sets[k].scores.begin(), sets[k].scores.end(), sets[0].scores.begin(),
                   [](const auto& a, const auto& b) { return a.first == b.first; }))
      continue;
    // build the symmetric difference for the diagnostic
    std::vector<std::string> only_first, only_other;
    for (const auto& [qid, v] : sets[0].scores)
      if (!sets[k].scores.contains(qid)) only_first.push_back(qid);
    for (const auto& [qid, v] : sets[k].scores)
      if (!sets[0].scores.contains(qid)) only_other.push_back(qid);
    std::string msg = "score sets disagree on qids;";
    auto list = [&msg](const std::string& tag, const std::vector<std::string>& qids) {
      msg += " only in " + tag + ": [";
      for (std::size_t i = 0; i < qids.size() && i < 8; ++i) msg += (i ? " " : "") + qids[i];
      if (qids.size() > 8) msg += " ... " + std::to_string(qids.size()) + " total";
      msg += "]";
    };
    list(sets[0].tag, only_first);
    list(sets[k].tag, only_other);
    throw AlignmentError(msg);
  }
}

}  // namespace

double accuracy(const ScoreSet& set, const std::map<std::string, int>& gold) {
  if (gold.empty()) throw InputError("accuracy: empty gold labels");
  if (gold.size() != set.scores.size() ||
      !std::equal(gold.begin(), gold.end(), set.scores.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; })) {
    std::string msg = "gold labels and scores disagree on qids";
    throw AlignmentError(msg);
  }
  int correct = 0;
  auto it = set.scores.begin();
  for (const auto& [qid, cls] : gold) {
    (void)qid;
    correct += argmax_class(it->second) == cls;
    ++it;
  }
  return static_cast<double>(correct) / static_cast<double>(gold.size());
}

ScoreSet combine(std::span<const ScoreSet> sets, const std::vector<double>& weights) {
  check_alignment(sets);
  if (weights.size() != sets.size())
    throw ParameterError("combine: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(sets.size()) + " sets");
  double wsum = 0;
  for (double w : weights) {
    if (w < 0) throw ParameterError("combine: negative weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9)
    throw ParameterError("combine: weights sum to " + std::to_string(wsum) + ", need 1");
  ScoreSet out;
  out.fingerprint = sets[0].fingerprint;
  out.tag = "ensemble";
  for (const auto& [qid, first] : sets[0].scores) {
    Eigen::VectorXd acc = weights[0] * first;
    for (std::size_t k = 1; k < sets.size(); ++k) acc += weights[k] * sets[k].scores.at(qid);
    out.scores.emplace(qid, std::move(acc));
  }
  return out;
}

ScoreSet average_ensemble(std::span<const ScoreSet> sets) {
  if (sets.empty()) throw InputError("no score sets");
  return combine(sets, std::vector<double>(sets.size(), 1.0 / static_cast<double>(sets.size())));
}

namespace {

struct SearchState {
  std::vector<std::string> qids;
  std::vector<Eigen::MatrixXd> per_model;  // items x classes
  Eigen::VectorXi gold;

  double eval(const std::vector<double>& w) const {
    Eigen::MatrixXd mix = w[0] * per_model[0];
    for (std::size_t k = 1; k < per_model.size(); ++k) mix += w[k] * per_model[k];
    int correct = 0;
    for (Eigen::Index i = 0; i < mix.rows(); ++i) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < mix.cols(); ++c)
        if (mix(i, c) > mix(i, best)) best = c;
      correct += static_cast<int>(best) == gold(i);
    }
    return static_cast<double>(correct) / static_cast<double>(mix.rows());
  }
};

double dist_to_uniform(const std::vector<double>& w) {
  const double u = 1.0 / static_cast<double>(w.size());
  double d = 0;
  for (double x : w) d += (x - u) * (x - u);
  return d;
}

/// strict improvement under the documented tie-break ordering
bool better(double acc_a, const std::vector<double>& a, double acc_b, const std::vector<double>& b) {
  if (acc_a != acc_b) return acc_a > acc_b;
  const double da = dist_to_uniform(a), db = dist_to_uniform(b);
  if (da != db) return da < db;
  return a < b;
}

void enumerate_compositions(int slots, int total, std::vector<int>& cur,
                            const std::function<void(const std::vector<int>&)>& visit) {
  if (slots == 1) {
    cur.push_back(total);
    visit(cur);
    cur.pop_back();
    return;
  }
  for (int take = 0; take <= total; ++take) {
    cur.push_back(take);
    enumerate_compositions(slots - 1, total - take, cur, visit);
    cur.pop_back();
  }
}

}  // namespace

WeightSearchResult search_weights(std::span<const ScoreSet> sets,
                                  const std::map<std::string, int>& gold, double step) {
  check_alignment(sets);
  if (gold.empty()) throw InputError("search_weights: empty validation labels");
  const int models = static_cast<int>(sets.size());
  const int lattice = static_cast<int>(std::llround(1.0 / step));
  if (step <= 0 || lattice < 1 || std::abs(lattice * step - 1.0) > 1e-9)
    throw ParameterError("search_weights: step must evenly divide 1");

  SearchState st;
  st.per_model.reserve(sets.size());
  {
    // gold must align with the score sets
    if (gold.size() != sets[0].scores.size() ||
        !std::equal(gold.begin(), gold.end(), sets[0].scores.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; }))
      throw AlignmentError("validation labels and score sets disagree on qids");
    const Eigen::Index items = static_cast<Eigen::Index>(gold.size());
    const Eigen::Index classes = sets[0].scores.begin()->second.size();
    st.gold.resize(items);
    Eigen::Index i = 0;
    for (const auto& [qid, cls] : gold) {
      st.qids.push_back(qid);
      st.gold(i++) = cls;
    }
    for (const auto& set : sets) {
      Eigen::MatrixXd m(items, classes);
      Eigen::Index r = 0;
      for (const auto& [qid, v] : set.scores) m.row(r++) = v.transpose();
      st.per_model.push_back(std::move(m));
    }
  }

  if (models == 1) return {{1.0}, st.eval({1.0})};

  const std::vector<double> uniform(sets.size(), 1.0 / models);
  WeightSearchResult best{uniform, st.eval(uniform)};

  auto consider = [&](const std::vector<double>& w) {
    const double acc = st.eval(w);
    if (better(acc, w, best.val_accuracy, best.weights)) best = {w, acc};
  };

  if (models <= 4) {
    std::vector<int> cur;
    enumerate_compositions(models, lattice, cur, [&](const std::vector<int>& counts) {
      std::vector<double> w(counts.size());
      for (std::size_t k = 0; k < counts.size(); ++k) w[k] = counts[k] * step;
      consider(w);
    });
    return best;
  }

  // more than four models: deterministic coordinate ascent on the lattice,
  // transferring mass between coordinate pairs with halving transfer sizes
  std::vector<int> counts(sets.size(), lattice / models);
  int rem = lattice - (lattice / models) * models;
  for (int k = 0; k < rem; ++k) counts[static_cast<std::size_t>(k)]++;
  auto as_weights = [&](const std::vector<int>& c) {
    std::vector<double> w(c.size());
    for (std::size_t k = 0; k < c.size(); ++k) w[k] = c[k] * step;
    return w;
  };
  consider(as_weights(counts));
  for (int transfer = lattice / 2; transfer >= 1; transfer /= 2) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t i = 0; i < counts.size(); ++i)
        for (std::size_t j = 0; j < counts.size(); ++j) {
          if (i == j || counts[j] < transfer) continue;
          std::vector<int> cand = counts;
          cand[i] += transfer;
          cand[j] -= transfer;
          const auto w = as_weights(cand);
          const double acc = st.eval(w);
          if (better(acc, w, best.val_accuracy, best.weights)) {
            best = {w, acc};
            counts = cand;
            improved = true;
          }
        }
    }
  }
  return best;
}

}  // namespace vqr::ensemble
