#pragma once

// Kernel-size sweep and fixed-budget family comparison. Each (config, seed)
// cell trains from scratch and is scored on the eval split with its best-dev
// checkpoint.

#include <cmath>
#include <string>
#include <vector>

#include "lrf/architectures.hpp"
#include "lrf/trainer.hpp"

namespace lrf {

struct SplitData {
  Dataset train, dev, eval;

  static SplitData from(const Corpus& c) {
    return {make_dataset(c, Split::Train), make_dataset(c, Split::Dev), make_dataset(c, Split::Eval)};
  }
};

struct Corpora {
  SplitData clean;
  SplitData reverb;
  double t60 = 0;
};

/// Clean corpus from `cfg` and its reverberant copy (RIR seeds derived from
/// the corpus seed).
inline Corpora make_corpora(const CorpusConfig& cfg, double t60) {
  const Corpus clean = generate_corpus(cfg);
  const Corpus rev = reverberate_corpus(clean, t60, derive_seed(cfg.seed, 4, 0));
  return {SplitData::from(clean), SplitData::from(rev), t60};
}

struct Summary {
  double mean = 0;
  double stddev = 0;  // sample standard deviation; 0 for a single run
};

inline Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

/// Eval-split frame accuracy of the best-dev checkpoint.
inline double train_and_score(const NetworkSpec& spec, const SplitData& d, TrainConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  const auto r = train(spec, d.train, d.dev, cfg);
  return evaluate(r.best, d.eval).frame_accuracy;
}

inline constexpr int kSweepWidth = 64;

/// Single-layer standard CNN with kernel width W.
inline NetworkSpec sweep_network(int kernel, int num_classes, int width = kSweepWidth, int input_dim = kNumMelBins) {
  return build_standard(kernel, 1, width, num_classes, input_dim);
}

struct SweepRow {
  int kernel = 0;
  std::string condition;
  Summary acc;
  int runs = 0;
};

inline std::vector<SweepRow> run_sweep(const std::vector<int>& kernels, const std::vector<std::uint64_t>& seeds,
                                       const SplitData& data, const std::string& condition,
                                       const TrainConfig& cfg, int width = kSweepWidth) {
  std::vector<SweepRow> rows;
  for (int k : kernels) {
    const auto spec = sweep_network(k, data.train.num_classes, width, data.train.input_dim);
    std::vector<double> accs;
    for (auto s : seeds) accs.push_back(train_and_score(spec, data, cfg, s));
    rows.push_back({k, condition, summarize(accs), static_cast<int>(accs.size())});
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "kernel,condition,mean_acc,std_acc,runs\n";
  for (const auto& r : rows)
    out += std::to_string(r.kernel) + "," + r.condition + "," + format_number(r.acc.mean) + "," +
           format_number(r.acc.stddev) + "," + std::to_string(r.runs) + "\n";
  return out;
}

struct CompareRow {
  std::string arch;
  std::string condition;
  Summary acc;
  std::int64_t params = 0;
  int width = 0;
};

/// Family spec matched to `budget` (hourglass uses its budget preset).
inline NetworkSpec budget_network(Family f, std::int64_t budget, int num_classes, int input_dim = kNumMelBins) {
  auto cfg = budget_preset(f);
  cfg.num_classes = num_classes;
  cfg.input_dim = input_dim;
  return match_budget(build(cfg), budget);
}

/// Rows in family order, clean before reverb.
inline std::vector<CompareRow> run_compare(std::int64_t budget, std::vector<Family> families,
                                           const std::vector<std::uint64_t>& seeds, const Corpora& data,
                                           const TrainConfig& cfg) {
  std::sort(families.begin(), families.end());
  families.erase(std::unique(families.begin(), families.end()), families.end());
  std::vector<CompareRow> rows;
  for (Family f : families) {
    const auto spec = budget_network(f, budget, data.clean.train.num_classes, data.clean.train.input_dim);
    for (auto [cond, d] : {std::pair{"clean", &data.clean}, std::pair{"reverb", &data.reverb}}) {
      std::vector<double> accs;
      for (auto s : seeds) accs.push_back(train_and_score(spec, *d, cfg, s));
      rows.push_back({std::string(family_name(f)), cond, summarize(accs), count_params(spec),
                      spec.meta.value("width", 0)});
    }
  }
  return rows;
}

inline std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::string out = "arch,condition,mean_acc,std_acc,params\n";
  for (const auto& r : rows)
    out += r.arch + "," + r.condition + "," + format_number(r.acc.mean) + "," + format_number(r.acc.stddev) + "," +
           std::to_string(r.params) + "\n";
  return out;
}

}  // namespace lrf
