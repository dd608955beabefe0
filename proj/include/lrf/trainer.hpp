#pragma once

// Adam training on random fixed-length crops, full-utterance evaluation,
// finite-difference gradient checking, metrics logging.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lrf/checkpoint.hpp"
#include "lrf/corpus.hpp"
#include "lrf/network.hpp"

namespace lrf {

struct TrainConfig {
  double alpha = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 20;
  int batch_size = 8;
  int crop_frames = 256;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;
  bool record_time = false;  // wall_seconds stays 0 unless set, keeping logs byte-stable

  void validate() const {
    if (!(alpha > 0)) throw Error("alpha must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw Error("betas must lie in [0, 1)");
    if (!(eps > 0)) throw Error("eps must be positive");
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (crop_frames < 1) throw Error("crop_frames must be >= 1");
    if (!(grad_clip > 0)) throw Error("grad_clip must be positive");
  }
};

struct MetricsRecord {
  int epoch = 0;
  std::string split;
  double cross_entropy = 0;
  double frame_accuracy = 0;
  double wall_seconds = 0;
};

// ---------------------------------------------------------------------------
// Optimizer

template <typename T>
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m, v;
};

/// Global L2 norm of all gradients; throws naming the first layer with a
/// non-finite gradient.
template <typename T>
double grad_norm(const ParamStore<T>& params) {
  double ss = 0;
  for (const auto& p : params) {
    for (T g : p.grad.flat()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p.name, p.layer);
      ss += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  return std::sqrt(ss);
}

/// Bias-corrected Adam update after global-norm clipping.
template <typename T>
void adam_step(ParamStore<T>& params, AdamState<T>& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), T(0));
      state.v.emplace_back(p.value.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw Error("optimizer state does not match parameters");
  const double norm = grad_norm(params);
  const double clip = norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].value.flat();
    auto g = params[i].grad.flat();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = static_cast<double>(g[k]) * clip;
      const double mk = cfg.beta1 * static_cast<double>(m[k]) + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * static_cast<double>(v[k]) + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      w[k] = static_cast<T>(static_cast<double>(w[k]) - cfg.alpha * (mk / c1) / (std::sqrt(vk / c2) + cfg.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Data

/// Feature tensors (1, frames, dims) and labels of one split.
struct Dataset {
  int num_classes = 0;
  int input_dim = 0;
  std::vector<Tensor<float>> features;
  std::vector<std::vector<int>> labels;
  std::vector<std::string> ids;

  std::size_t size() const { return features.size(); }
  std::size_t frames() const {
    std::size_t n = 0;
    for (const auto& y : labels) n += y.size();
    return n;
  }
};

inline Tensor<float> to_tensor(const FeatureSequence& f) {
  Tensor<float> x(1, f.frames, f.dims);
  for (std::size_t i = 0; i < f.data.size(); ++i) x.flat()[i] = static_cast<float>(f.data[i]);
  return x;
}

inline Dataset make_dataset(const Corpus& corpus, Split split) {
  Dataset d;
  d.num_classes = corpus.config.num_classes;
  d.input_dim = kNumMelBins;
  for (const Utterance* u : corpus.split(split)) {
    const auto f = features(*u);
    if (f.frames != u->labels.size())
      throw Error("feature/label frame counts differ (" + std::to_string(f.frames) + " vs " +
                      std::to_string(u->labels.size()) + ")",
                  u->id);
    d.features.push_back(to_tensor(f));
    d.labels.push_back(u->labels);
    d.ids.push_back(u->id);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Index of the largest entry; ties go to the lowest index.
template <typename T>
int argmax_first(const T* row, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (row[k] > row[best]) best = k;
  return static_cast<int>(best);
}

/// Fraction of labelled frames (label != kIgnoreLabel) whose argmax matches.
template <typename T>
double frame_accuracy(const Tensor<T>& posteriors, std::span<const int> labels) {
  const std::size_t K = posteriors.channels();
  const std::size_t frames = posteriors.batch() * posteriors.time();
  if (labels.size() != frames) throw Error("label count differs from frame count");
  std::size_t hit = 0, counted = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    if (labels[f] == kIgnoreLabel) continue;
    ++counted;
    hit += argmax_first(posteriors.data() + f * K, K) == labels[f];
  }
  return counted ? static_cast<double>(hit) / static_cast<double>(counted) : 0.0;
}

inline constexpr std::size_t kEvalBatch = 16;

/// Full-utterance pass over a dataset: each utterance is zero-padded to the
/// network's stride, padded frames carry no label.
template <typename T>
MetricsRecord evaluate(Network<T>& net, const Dataset& ds, int epoch = 0, std::string split = "eval") {
  const auto& spec = net.spec();
  if (ds.num_classes != spec.num_classes)
    throw Error("dataset has " + std::to_string(ds.num_classes) + " classes, network " +
                std::to_string(spec.num_classes));
  if (ds.input_dim != spec.input_dim)
    throw Error("features are " + std::to_string(ds.input_dim) + "-dimensional, network expects " +
                std::to_string(spec.input_dim));
  double ce_sum = 0;
  std::size_t frames = 0, hits = 0;
  std::size_t i = 0;
  while (i < ds.size()) {
    // Group consecutive utterances of equal length into one batch.
    const std::size_t len = ds.labels[i].size();
    std::size_t j = i;
    while (j < ds.size() && j - i < kEvalBatch && ds.labels[j].size() == len) ++j;
    const std::size_t B = j - i, Tp = net.pad_length(len), D = ds.features[i].channels();
    Tensor<T> x(B, Tp, D);
    std::vector<int> y(B * Tp, kIgnoreLabel);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& f = ds.features[i + b];
      for (std::size_t t = 0; t < len; ++t) {
        for (std::size_t c = 0; c < D; ++c) x(b, t, c) = static_cast<T>(f(0, t, c));
        y[b * Tp + t] = ds.labels[i + b][t];
      }
    }
    net.forward(x);
    auto r = softmax_xent(net.logits(), y);
    ce_sum += r.cross_entropy * static_cast<double>(r.frames);
    frames += r.frames;
    const auto& post = net.posteriors();
    const std::size_t K = post.channels();
    for (std::size_t f = 0; f < y.size(); ++f)
      if (y[f] != kIgnoreLabel) hits += argmax_first(post.data() + f * K, K) == y[f];
    i = j;
  }
  MetricsRecord m;
  m.epoch = epoch;
  m.split = std::move(split);
  m.cross_entropy = frames ? ce_sum / static_cast<double>(frames) : 0.0;
  m.frame_accuracy = frames ? static_cast<double>(hits) / static_cast<double>(frames) : 0.0;
  return m;
}

inline MetricsRecord evaluate(const Checkpoint& ck, const Dataset& ds, std::string split = "eval") {
  auto net = restore<float>(ck);
  return evaluate(net, ds, 0, std::move(split));
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  Checkpoint best;
  int best_epoch = 0;
  double best_dev_accuracy = -1;
  double initial_ce = 0;
  std::vector<MetricsRecord> history;
};

using MetricsCallback = std::function<void(const MetricsRecord&)>;

namespace detail {

inline void check_trainable(const NetworkSpec& spec, const Dataset& ds, const TrainConfig& cfg) {
  const auto g = analyze(spec);
  if (cfg.crop_frames % g.max_stride != 0)
    throw Error("crop_frames " + std::to_string(cfg.crop_frames) + " is not divisible by the network stride " +
                std::to_string(g.max_stride));
  if (ds.size() == 0) throw Error("empty training set");
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (!ds.features[i].all_finite())
      throw NumericError("non-finite input features", i < ds.ids.size() ? ds.ids[i] : std::to_string(i));
  if (ds.input_dim != spec.input_dim)
    throw Error("features are " + std::to_string(ds.input_dim) + "-dimensional, network expects " +
                std::to_string(spec.input_dim));
  if (ds.num_classes != spec.num_classes)
    throw Error("dataset has " + std::to_string(ds.num_classes) + " classes, network " +
                std::to_string(spec.num_classes));
}

}  // namespace detail

/// Trains with seeded shuffled crops; returns the best-dev checkpoint (ties to
/// the earlier epoch) and the per-epoch history. Epoch 0 is the untrained model.
inline TrainResult train(const NetworkSpec& spec, const Dataset& train_set, const Dataset& dev_set,
                         const TrainConfig& cfg, const MetricsCallback& on_record = {}) {
  cfg.validate();
  detail::check_trainable(spec, train_set, cfg);
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed = [&] {
    return cfg.record_time ? std::chrono::duration<double>(clock::now() - start).count() : 0.0;
  };

  Network<float> net(spec);
  net.init(cfg.seed);
  AdamState<float> adam;
  std::mt19937_64 rng(derive_seed(cfg.seed, 7, 0));
  TrainResult result;
  auto record = [&](MetricsRecord m) {
    m.wall_seconds = elapsed();
    result.history.push_back(m);
    if (on_record) on_record(result.history.back());
  };
  auto consider = [&](const MetricsRecord& dev, int epoch) {
    if (dev.frame_accuracy > result.best_dev_accuracy) {
      result.best_dev_accuracy = dev.frame_accuracy;
      result.best_epoch = epoch;
      result.best = make_checkpoint(spec, net.params());
    }
  };

  const auto dev0 = evaluate(net, dev_set, 0, "dev");
  record(dev0);
  consider(dev0, 0);

  const std::size_t crop = static_cast<std::size_t>(cfg.crop_frames);
  const std::size_t D = static_cast<std::size_t>(spec.input_dim);
  const std::size_t padded = net.pad_length(crop);
  std::vector<std::size_t> order(train_set.size());
  bool have_initial = false;
  std::uint64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double ce_sum = 0, hit_sum = 0, frame_sum = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t B = std::min<std::size_t>(cfg.batch_size, order.size() - b0);
      Tensor<float> x(B, padded, D);
      std::vector<int> y(B * padded, kIgnoreLabel);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t u = order[b0 + b];
        const std::size_t len = train_set.labels[u].size();
        const std::size_t take = std::min(crop, len);
        const std::size_t off =
            len > crop ? std::uniform_int_distribution<std::size_t>(0, len - crop)(rng) : 0;
        const auto& f = train_set.features[u];
        for (std::size_t t = 0; t < take; ++t) {
          std::copy_n(f.data() + (off + t) * D, D, x.data() + (b * padded + t) * D);
          y[b * padded + t] = train_set.labels[u][off + t];
        }
      }
      net.forward(x);
      const double ce = net.loss(y);
      ++step;
      if (!std::isfinite(ce))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step));
      if (!have_initial) {
        result.initial_ce = ce;
        have_initial = true;
      } else if (ce > 10.0 * result.initial_ce) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "diverged: batch CE %.4g exceeds 10x initial %.4g at epoch %d, step %llu", ce,
                      result.initial_ce, epoch, static_cast<unsigned long long>(step));
        throw NumericError(msg);
      }
      std::size_t counted = 0;
      for (int v : y) counted += v != kIgnoreLabel;
      ce_sum += ce * static_cast<double>(counted);
      hit_sum += frame_accuracy(net.posteriors(), y) * static_cast<double>(counted);
      frame_sum += static_cast<double>(counted);
      net.backward();
      adam_step(net.params(), adam, cfg);
    }
    record({epoch, "train", ce_sum / frame_sum, hit_sum / frame_sum, 0});
    const auto dev = evaluate(net, dev_set, epoch, "dev");
    record(dev);
    consider(dev, epoch);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Overfitting a fixed batch

struct OverfitResult {
  double initial_ce = 0;
  double final_ce = 0;
  double final_accuracy = 0;
  int steps = 0;
};

/// Full-batch Adam on one (1, T, D) sequence; frames past labels.size()
/// (stride padding) are unlabelled.
inline OverfitResult overfit(const NetworkSpec& spec, const Tensor<float>& x, std::span<const int> labels, int steps,
                             const TrainConfig& cfg) {
  cfg.validate();
  Network<float> net(spec);
  net.init(cfg.seed);
  const std::size_t T = net.pad_length(x.time());
  Tensor<float> xp(1, T, x.channels());
  std::copy(x.flat().begin(), x.flat().end(), xp.data());
  std::vector<int> y(T, kIgnoreLabel);
  std::copy(labels.begin(), labels.end(), y.begin());
  AdamState<float> adam;
  OverfitResult r;
  r.steps = steps;
  net.forward(xp);
  r.initial_ce = net.loss(y);
  for (int s = 0; s < steps; ++s) {
    if (s > 0) {
      net.forward(xp);
      net.loss(y);
    }
    net.backward();
    adam_step(net.params(), adam, cfg);
  }
  net.forward(xp);
  r.final_ce = net.loss(y);
  r.final_accuracy = frame_accuracy(net.posteriors(), y);
  return r;
}

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckOptions {
  double tolerance = 1e-5;
  double h = 1e-5;
  int channels = 4;  // hidden width of the down-scaled instance (<= 8)
  int input_dim = 4;
  std::size_t frames = 32;
  std::uint64_t seed = 11;
  std::string fault_layer;  // non-empty: corrupt this conv's backward
  double fault_factor = 1.01;
};

struct GradCheckEntry {
  std::string param;
  std::string layer;
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a ReLU or pooling kink
  bool passed = true;
};

struct GradCheckReport {
  std::string family;
  double tolerance = 0;
  double max_rel_error = 0;
  std::size_t frames = 0;
  int channels = 0;
  std::vector<GradCheckEntry> params;
  bool passed = true;

  std::vector<std::string> failing_layers() const {
    std::vector<std::string> out;
    for (const auto& e : params)
      if (!e.passed) out.push_back(e.layer);
    return out;
  }
};

/// Denominator floor for relative errors: keeps roundoff on near-zero
/// gradient entries from reading as a large relative error.
inline constexpr double kGradCheckFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
}

/// Central differences on every parameter of a down-scaled double-precision
/// instance. Inputs within 1e-2 of zero are pushed to +-1e-2; entries whose
/// +-h evaluation changes a ReLU sign or pooling argmax are skipped.
inline GradCheckReport grad_check(const NetworkSpec& spec, const GradCheckOptions& opt = {}) {
  if (opt.channels < 1 || opt.channels > 8) throw Error("grad_check channels must lie in [1, 8]");
  const NetworkSpec small = with_hidden_width(spec, opt.channels, opt.input_dim);
  Network<double> net(small);
  net.init(opt.seed);
  const std::size_t T = net.pad_length(opt.frames);
  if (T > 32 && opt.frames <= 32)
    throw Error("network stride " + std::to_string(net.graph().max_stride) + " exceeds the 32-frame check window");

  std::mt19937_64 rng(derive_seed(opt.seed, 9, 0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Tensor<double> x(1, T, static_cast<std::size_t>(opt.input_dim));
  for (auto& v : x.flat()) {
    v = gauss(rng);
    if (std::abs(v) < 1e-2) v = v < 0 ? -1e-2 : 1e-2;
  }
  std::uniform_int_distribution<int> cls(0, small.num_classes - 1);
  std::vector<int> y(T);
  for (auto& v : y) v = cls(rng);
  // Non-trivial alphas so weighted-sum gradients are exercised off the uniform point.
  for (std::size_t i = 0; i < small.layers.size(); ++i)
    if (small.layers[i].kind == LayerKind::WeightedSum)
      for (auto& a : net.params()[net.params().weight_index(i)].value.flat())
        a = std::uniform_real_distribution<double>(0.3, 1.0)(rng);

  if (!opt.fault_layer.empty()) net.inject_backward_fault(opt.fault_layer, opt.fault_factor);
  net.forward(x);
  net.loss(y);
  net.backward();
  const auto base_sig = net.kink_signature();
  std::vector<Tensor<double>> analytic;
  for (const auto& p : net.params()) analytic.push_back(p.grad);

  auto eval = [&](bool& same_kinks) {
    net.forward(x);
    same_kinks = net.kink_signature() == base_sig;
    return net.loss(y);
  };

  GradCheckReport rep;
  rep.family = std::string(family_name(spec.family));
  rep.tolerance = opt.tolerance;
  rep.frames = T;
  rep.channels = opt.channels;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    auto& p = net.params()[i];
    GradCheckEntry e{p.name, p.layer};
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      double& w = p.value.flat()[k];
      const double w0 = w;
      bool ok_plus = false, ok_minus = false;
      w = w0 + opt.h;
      const double lp = eval(ok_plus);
      w = w0 - opt.h;
      const double lm = eval(ok_minus);
      w = w0;
      if (!ok_plus || !ok_minus) {
        ++e.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * opt.h);
      e.max_rel_error = std::max(e.max_rel_error, relative_error(analytic[i].flat()[k], numeric));
      ++e.checked;
    }
    e.passed = e.max_rel_error < opt.tolerance;
    rep.passed = rep.passed && e.passed;
    rep.max_rel_error = std::max(rep.max_rel_error, e.max_rel_error);
    rep.params.push_back(std::move(e));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Metrics files

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string metrics_csv(const std::vector<MetricsRecord>& history) {
  std::string out = "epoch,split,ce,acc,seconds\n";
  for (const auto& m : history)
    out += std::to_string(m.epoch) + "," + m.split + "," + format_number(m.cross_entropy) + "," +
           format_number(m.frame_accuracy) + "," + format_number(m.wall_seconds) + "\n";
  return out;
}

inline nlohmann::ordered_json metrics_json(const MetricsRecord& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["split"] = m.split;
  j["ce"] = m.cross_entropy;
  j["acc"] = m.frame_accuracy;
  j["seconds"] = m.wall_seconds;
  return j;
}

inline std::string metrics_jsonl(const std::vector<MetricsRecord>& history) {
  std::string out;
  for (const auto& m : history) out += metrics_json(m).dump() + "\n";
  return out;
}

}  // namespace lrf
