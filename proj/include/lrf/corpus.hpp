#pragma once

// Synthetic frame-labelled corpus. Each class is a pair of resonances driven
// by white noise; utterances are sequences of random-class segments of 5-40
// frames. Reverberant copies keep the clean labels (direct path at lag 0).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "lrf/acoustics.hpp"
#include "lrf/binary_io.hpp"

namespace lrf {

enum class Split { Train, Dev, Eval };

inline std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Eval: return "eval";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  for (Split x : {Split::Train, Split::Dev, Split::Eval})
    if (split_name(x) == s) return x;
  throw Error("unknown split '" + std::string(s) + "'");
}

struct Condition {
  bool reverberant = false;
  double t60 = 0;
  std::uint64_t rir_seed = 0;
  bool operator==(const Condition&) const = default;
};

struct Utterance {
  std::string id;
  Split split = Split::Train;
  Waveform waveform;
  std::vector<int> labels;  // one per 10 ms feature frame
  Condition condition;
};

struct CorpusConfig {
  int num_classes = 8;
  int train_utts = 400;
  int dev_utts = 50;
  int eval_utts = 50;
  int frames_per_utt = 300;
  std::uint64_t seed = 1;
  double sample_rate = kDefaultSampleRate;
  int min_segment = 5;
  int max_segment = 40;
  double level_range_db = 6.0;  // segment levels uniform in +-range dB around kSegmentRms
};

struct Corpus {
  CorpusConfig config;
  std::vector<std::pair<double, double>> resonances;  // per class, Hz
  std::vector<Utterance> utterances;

  std::vector<const Utterance*> split(Split s) const {
    std::vector<const Utterance*> out;
    for (const auto& u : utterances)
      if (u.split == s) out.push_back(&u);
    return out;
  }
};

/// splitmix64 step; derives independent per-item seeds from one corpus seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(base ^ (stream * 0x632be59bd9b4e019ULL)) + index);
}

inline constexpr double kMinResonanceSpacingHz = 200.0;
inline constexpr double kResonanceBandwidthHz = 120.0;
inline constexpr double kSegmentRms = 0.1;

/// Two centre frequencies per class, all 2K pairwise >= 200 Hz apart and
/// inside [200, fs/2 - 200].
inline std::vector<std::pair<double, double>> draw_resonances(int K, double fs, std::uint64_t seed) {
  const double lo = kMinResonanceSpacingHz;
  const double hi = fs / 2.0 - kMinResonanceSpacingHz;
  const double slack = (hi - lo) - (2.0 * K - 1.0) * kMinResonanceSpacingHz;
  if (K < 2) throw Error("corpus needs at least 2 classes");
  if (slack < 0)
    throw Error("cannot place " + std::to_string(2 * K) + " resonances " +
                std::to_string(kMinResonanceSpacingHz) + " Hz apart below " + std::to_string(fs / 2) +
                " Hz");
  std::mt19937_64 rng(derive_seed(seed, 1, 0));
  std::uniform_real_distribution<double> u(0.0, slack);
  std::vector<double> f(2 * static_cast<std::size_t>(K));
  for (auto& v : f) v = u(rng);
  std::sort(f.begin(), f.end());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] += lo + static_cast<double>(i) * kMinResonanceSpacingHz;
  std::shuffle(f.begin(), f.end(), rng);
  std::vector<std::pair<double, double>> out;
  for (int k = 0; k < K; ++k) {
    auto a = f[2 * k], b = f[2 * k + 1];
    out.emplace_back(std::min(a, b), std::max(a, b));
  }
  return out;
}

namespace detail {

/// Noise through two cascaded two-pole resonators, scaled to `rms`.
inline std::vector<double> resonant_noise(std::size_t n, std::pair<double, double> centres, double fs,
                                          double rms, std::mt19937_64& rng) {
  const std::size_t warmup = 256;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double r = std::exp(-std::numbers::pi * kResonanceBandwidthHz / fs);
  std::vector<double> y(n + warmup);
  for (auto& v : y) v = gauss(rng);
  for (double fc : {centres.first, centres.second}) {
    const double a1 = -2.0 * r * std::cos(2.0 * std::numbers::pi * fc / fs);
    const double a2 = r * r;
    double y1 = 0, y2 = 0;
    for (auto& v : y) {
      const double out = v - a1 * y1 - a2 * y2;
      y2 = y1;
      y1 = out;
      v = out;
    }
  }
  std::vector<double> seg(y.begin() + warmup, y.end());
  double e = 0;
  for (double v : seg) e += v * v;
  const double scale = e > 0 ? rms / std::sqrt(e / static_cast<double>(seg.size())) : 0.0;
  for (auto& v : seg) v *= scale;
  return seg;
}

}  // namespace detail

/// One utterance: random segment schedule, per-frame labels, waveform.
inline Utterance synth_utterance(const CorpusConfig& cfg,
                                 const std::vector<std::pair<double, double>>& resonances,
                                 std::uint64_t seed) {
  const auto geo = FrameGeometry::for_rate(cfg.sample_rate);
  const auto F = static_cast<std::size_t>(cfg.frames_per_utt);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> seg_len(cfg.min_segment, cfg.max_segment);
  std::uniform_int_distribution<int> cls(0, cfg.num_classes - 1);
  std::uniform_real_distribution<double> level_db(-cfg.level_range_db, cfg.level_range_db);

  Utterance u;
  u.labels.resize(F);
  u.waveform.sample_rate = cfg.sample_rate;
  u.waveform.samples.resize(geo.samples_for(F));
  const std::size_t N = u.waveform.size();
  // Frame t is centred on sample t*shift + length/2; segment edges sit halfway
  // between neighbouring frame centres.
  auto edge = [&](std::size_t frame) -> std::size_t {
    if (frame == 0) return 0;
    if (frame >= F) return N;
    return frame * geo.shift + geo.length / 2 - geo.shift / 2;
  };
  std::size_t start = 0;
  while (start < F) {
    const std::size_t len = std::min<std::size_t>(seg_len(rng), F - start);
    const int k = cls(rng);
    const double g = std::pow(10.0, level_db(rng) / 20.0);
    std::fill(u.labels.begin() + start, u.labels.begin() + start + len, k);
    const std::size_t s0 = edge(start), s1 = edge(start + len);
    auto seg = detail::resonant_noise(s1 - s0, resonances[k], cfg.sample_rate, kSegmentRms * g, rng);
    std::copy(seg.begin(), seg.end(), u.waveform.samples.begin() + s0);
    start += len;
  }
  return u;
}

inline Corpus generate_corpus(const CorpusConfig& cfg) {
  if (cfg.num_classes < 2) throw Error("corpus needs K >= 2");
  if (cfg.frames_per_utt < 1) throw Error("frames_per_utt must be >= 1");
  if (cfg.min_segment < 1 || cfg.max_segment < cfg.min_segment) throw Error("bad segment range");
  if (!(cfg.level_range_db >= 0)) throw Error("level_range_db must be >= 0");
  Corpus c;
  c.config = cfg;
  c.resonances = draw_resonances(cfg.num_classes, cfg.sample_rate, cfg.seed);
  int index = 0;
  for (auto [split, count] : {std::pair{Split::Train, cfg.train_utts}, std::pair{Split::Dev, cfg.dev_utts},
                              std::pair{Split::Eval, cfg.eval_utts}}) {
    for (int i = 0; i < count; ++i, ++index) {
      Utterance u = synth_utterance(cfg, c.resonances, derive_seed(cfg.seed, 2, index));
      char id[32];
      std::snprintf(id, sizeof id, "%s%04d", std::string(split_name(split)).c_str(), i);
      u.id = id;
      u.split = split;
      c.utterances.push_back(std::move(u));
    }
  }
  return c;
}

/// Reverberant copy: one fresh RIR per utterance (same t60), labels unchanged.
inline Corpus reverberate_corpus(const Corpus& clean, double t60, std::uint64_t seed) {
  Corpus out = clean;
  for (std::size_t i = 0; i < out.utterances.size(); ++i) {
    auto& u = out.utterances[i];
    const std::uint64_t rir_seed = derive_seed(seed, 3, i);
    const Rir h = synth_rir(t60, u.waveform.sample_rate, rir_seed);
    u.waveform = apply_rir(clean.utterances[i].waveform, h);
    u.condition = {true, t60, rir_seed};
  }
  return out;
}

/// CMVN-normalized log-mel features of an utterance.
inline FeatureSequence features(const Utterance& u) { return cmvn(melfb(u.waveform)); }

// ---------------------------------------------------------------------------
// On-disk form: manifest.json + one payload per utterance
// (uint64 n + n float64 samples, then uint64 m + m int32 labels).

inline nlohmann::ordered_json manifest_json(const Corpus& c) {
  nlohmann::ordered_json m;
  m["K"] = c.config.num_classes;
  m["fs"] = c.config.sample_rate;
  m["seed"] = c.config.seed;
  m["frames_per_utt"] = c.config.frames_per_utt;
  m["segment_frames"] = {c.config.min_segment, c.config.max_segment};
  m["level_range_db"] = c.config.level_range_db;
  auto& res = m["resonances_hz"] = nlohmann::ordered_json::array();
  for (auto [a, b] : c.resonances) res.push_back({a, b});
  auto& utts = m["utterances"] = nlohmann::ordered_json::array();
  for (const auto& u : c.utterances) {
    nlohmann::ordered_json e;
    e["id"] = u.id;
    e["split"] = split_name(u.split);
    e["file"] = u.id + ".bin";
    e["offset"] = 0;
    e["samples"] = u.waveform.size();
    e["frames"] = u.labels.size();
    if (u.condition.reverberant)
      e["condition"] = {{"kind", "reverb"}, {"t60", u.condition.t60}, {"seed", u.condition.rir_seed}};
    else
      e["condition"] = {{"kind", "clean"}};
    utts.push_back(std::move(e));
  }
  return m;
}

inline void save_corpus(const Corpus& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& u : c.utterances) {
    auto os = io::open_out((dir / (u.id + ".bin")).string());
    io::put_array(os, u.waveform.samples);
    io::put_array(os, u.labels);
    if (!os) throw Error("write failed", u.id);
  }
  io::write_text((dir / "manifest.json").string(), manifest_json(c).dump(2) + "\n");
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  const auto text = io::read_text((dir / "manifest.json").string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  Corpus c;
  try {
    c.config.num_classes = m.at("K").get<int>();
    c.config.sample_rate = m.at("fs").get<double>();
    c.config.seed = m.at("seed").get<std::uint64_t>();
    c.config.frames_per_utt = m.at("frames_per_utt").get<int>();
    c.config.min_segment = m.at("segment_frames")[0].get<int>();
    c.config.max_segment = m.at("segment_frames")[1].get<int>();
    c.config.level_range_db = m.at("level_range_db").get<double>();
    for (const auto& r : m.at("resonances_hz")) c.resonances.emplace_back(r[0].get<double>(), r[1].get<double>());
    c.config.train_utts = c.config.dev_utts = c.config.eval_utts = 0;
    for (const auto& e : m.at("utterances")) {
      Utterance u;
      u.id = e.at("id").get<std::string>();
      u.split = parse_split(e.at("split").get<std::string>());
      (u.split == Split::Train ? c.config.train_utts
                               : u.split == Split::Dev ? c.config.dev_utts : c.config.eval_utts)++;
      const auto& cond = e.at("condition");
      if (cond.at("kind").get<std::string>() == "reverb")
        u.condition = {true, cond.at("t60").get<double>(), cond.at("seed").get<std::uint64_t>()};
      auto is = io::open_in((dir / e.at("file").get<std::string>()).string());
      is.seekg(e.at("offset").get<std::streamoff>());
      u.waveform.sample_rate = c.config.sample_rate;
      u.waveform.samples = io::get_array<double>(is, u.id + " samples");
      u.labels = io::get_array<int>(is, u.id + " labels");
      if (u.waveform.size() != e.at("samples").get<std::size_t>() ||
          u.labels.size() != e.at("frames").get<std::size_t>())
        throw Error("payload length differs from manifest", u.id);
      for (int y : u.labels)
        if (y < 0 || y >= c.config.num_classes) throw Error("label out of range", u.id);
      c.utterances.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("manifest schema error: ") + e.what());
  }
  return c;
}

}  // namespace lrf
