#pragma once

// Receptive-field calculus. rf_general() composes (rf, jump) pairs along the
// graph; structural_probe() and gradient_probe() measure the same quantity on
// a concrete instance by interval propagation and by backpropagation. The
// closed forms below are kept verbatim so their disagreements with the exact
// composition can be reported.

#include <algorithm>
#include <numeric>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lrf/architectures.hpp"
#include "lrf/netgraph.hpp"
#include "lrf/network.hpp"

namespace lrf {

struct LayerRf {
  std::string id;
  std::int64_t rf = 1;
  std::int64_t jump = 1;
};

struct RfReport {
  Family family = Family::Standard;
  std::int64_t rf_general = 1;
  std::optional<std::int64_t> rf_paper;
  std::int64_t structural = 0;
  std::int64_t gradient_probe = 0;
  std::int64_t params = 0;
  std::vector<LayerRf> jump_profile;

  bool consistent() const { return rf_general == structural && rf_general == gradient_probe; }
};

// ---------------------------------------------------------------------------
// Closed forms

inline std::int64_t rf_standard_paper(std::int64_t W, std::int64_t L) { return L * (W - 1) + 1; }

inline std::int64_t rf_dilated_paper(std::int64_t W, std::int64_t L) {
  return (L + ((std::int64_t{1} << (L - 1)) - 1)) * (W - 1) + 1;
}

inline std::int64_t rf_tdnn_paper(const std::vector<TdnnContext>& contexts) {
  std::int64_t rf = 1;
  for (auto [a, b] : contexts) rf += a + b;
  return rf;
}

struct HgClosedForm {
  std::int64_t rf_down = 0;
  std::int64_t rf_stacked = 0;
};

inline HgClosedForm rf_hg_paper(std::int64_t W_d, std::int64_t P_d, std::int64_t L_d,
                                std::int64_t S, std::int64_t L) {
  HgClosedForm r;
  r.rf_down = L_d * (W_d + P_d - 1) - 1;
  r.rf_stacked = S * r.rf_down * (std::int64_t{1} << L);
  return r;
}

// ---------------------------------------------------------------------------
// Exact composition

/// Input footprint of a node: output frame tau depends on input frames
/// [stride*tau + lo[tau mod p], stride*tau + hi[tau mod p]] (interior frames,
/// p = lo.size()). The period p exceeds 1 only after upsampling, where
/// neighbouring frames can see differently aligned low-resolution windows.
struct Footprint {
  std::int64_t stride = 1;
  std::vector<std::int64_t> lo{0};
  std::vector<std::int64_t> hi{0};

  std::size_t period() const { return lo.size(); }
  std::int64_t lo_at(std::int64_t tau) const { return stride * tau + lo[wrap(tau)]; }
  std::int64_t hi_at(std::int64_t tau) const { return stride * tau + hi[wrap(tau)]; }
  std::int64_t width() const {
    std::int64_t w = 0;
    for (std::size_t r = 0; r < lo.size(); ++r) w = std::max(w, hi[r] - lo[r] + 1);
    return w;
  }

 private:
  std::size_t wrap(std::int64_t tau) const {
    const auto p = static_cast<std::int64_t>(lo.size());
    return static_cast<std::size_t>(((tau % p) + p) % p);
  }
};

namespace detail {

template <typename Lo, typename Hi>
Footprint tabulate(std::int64_t stride, std::size_t period, Lo lo_abs, Hi hi_abs) {
  Footprint f;
  f.stride = stride;
  f.lo.resize(period);
  f.hi.resize(period);
  for (std::size_t r = 0; r < period; ++r) {
    const auto tau = static_cast<std::int64_t>(r);
    f.lo[r] = lo_abs(tau) - stride * tau;
    f.hi[r] = hi_abs(tau) - stride * tau;
  }
  return f;
}

}  // namespace detail

/// Exact footprint of every node, in topological order of `g`.
inline std::vector<Footprint> footprints(const NetworkSpec& spec, const GraphInfo& g) {
  std::vector<Footprint> at(spec.layers.size());
  const Footprint input;
  for (std::size_t i : g.order) {
    const auto& l = spec.layers[i];
    auto src = [&](int s) -> const Footprint& { return s < 0 ? input : at[s]; };
    const Footprint& x = src(g.inputs[i][0]);
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& offs = l.taps.offsets;
        at[i] = detail::tabulate(
            x.stride, x.period(),
            [&](std::int64_t t) {
              std::int64_t v = x.lo_at(t + offs[0]);
              for (int k : offs) v = std::min(v, x.lo_at(t + k));
              return v;
            },
            [&](std::int64_t t) {
              std::int64_t v = x.hi_at(t + offs[0]);
              for (int k : offs) v = std::max(v, x.hi_at(t + k));
              return v;
            });
        break;
      }
      case LayerKind::MaxPool: {
        const std::int64_t P = l.window;
        const auto p = x.period() / std::gcd(x.period(), static_cast<std::size_t>(P));
        at[i] = detail::tabulate(
            x.stride * P, p,
            [&](std::int64_t t) {
              std::int64_t v = x.lo_at(P * t);
              for (std::int64_t q = 1; q < P; ++q) v = std::min(v, x.lo_at(P * t + q));
              return v;
            },
            [&](std::int64_t t) {
              std::int64_t v = x.hi_at(P * t);
              for (std::int64_t q = 1; q < P; ++q) v = std::max(v, x.hi_at(P * t + q));
              return v;
            });
        break;
      }
      case LayerKind::Upsample: {
        const std::int64_t f = l.factor;
        if (x.stride % f != 0) throw Error("upsampling leaves a fractional jump", l.id);
        auto down = [f](std::int64_t t) { return t >= 0 ? t / f : -((-t + f - 1) / f); };
        at[i] = detail::tabulate(
            x.stride / f, x.period() * static_cast<std::size_t>(f),
            [&](std::int64_t t) { return x.lo_at(down(t)); },
            [&](std::int64_t t) { return x.hi_at(down(t)); });
        break;
      }
      case LayerKind::Add:
      case LayerKind::WeightedSum: {
        std::size_t p = 1;
        for (int s : g.inputs[i]) {
          if (src(s).stride != x.stride) throw Error("merge of different jumps", l.id);
          p = std::lcm(p, src(s).period());
        }
        at[i] = detail::tabulate(
            x.stride, p,
            [&](std::int64_t t) {
              std::int64_t v = x.lo_at(t);
              for (int s : g.inputs[i]) v = std::min(v, src(s).lo_at(t));
              return v;
            },
            [&](std::int64_t t) {
              std::int64_t v = x.hi_at(t);
              for (int s : g.inputs[i]) v = std::max(v, src(s).hi_at(t));
              return v;
            });
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Identity:
      case LayerKind::Softmax: at[i] = x; break;
    }
  }
  return at;
}

/// Per-layer (rf, jump) in topological order; the last entry is the softmax.
/// rf is the widest footprint over output phases; jump is the layer stride.
inline std::vector<LayerRf> rf_profile(const NetworkSpec& spec) {
  const GraphInfo g = analyze(spec);
  const auto fp = footprints(spec, g);
  std::vector<LayerRf> out;
  for (std::size_t i : g.order) out.push_back({spec.layers[i].id, fp[i].width(), fp[i].stride});
  return out;
}

/// Phase period of the output footprint (1 unless upsampling is involved).
inline std::size_t rf_period(const NetworkSpec& spec) {
  const GraphInfo g = analyze(spec);
  return footprints(spec, g)[g.output].period();
}

inline std::int64_t rf_general_value(const NetworkSpec& spec) { return rf_profile(spec).back().rf; }

/// Published closed form for the family, read from meta; nullopt where none applies
/// (recursive nets) or meta lacks the hyperparameters.
inline std::optional<std::int64_t> rf_paper_for(const NetworkSpec& spec) {
  const auto& m = spec.meta;
  try {
    switch (spec.family) {
      case Family::Standard: return rf_standard_paper(m.at("W").get<int>(), m.at("L").get<int>());
      case Family::DilNet: {
        // L counts every convolution layer: the 3-layer preprocessing subnet plus the dilated ones.
        const auto d = m.at("dilations").get<std::vector<int>>();
        return rf_dilated_paper(m.at("W").get<int>(), 3 + static_cast<std::int64_t>(d.size()));
      }
      case Family::Tdnn: {
        std::vector<TdnnContext> ctx;
        for (const auto& c : m.at("contexts")) ctx.emplace_back(c[0].get<int>(), c[1].get<int>());
        return rf_tdnn_paper(ctx);
      }
      case Family::RecNet: return std::nullopt;
      case Family::HgNet:
        return rf_hg_paper(m.at("W").get<int>(), 2, m.at("L").get<int>(), m.at("S").get<int>(),
                           m.at("L").get<int>())
            .rf_stacked;
    }
  } catch (const Json::exception&) {
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Probes

namespace detail {

/// Narrow instance for probing: RF does not depend on channel counts.
inline NetworkSpec probe_instance(const NetworkSpec& spec) {
  const GraphInfo g = analyze(spec);
  const int width = output_projection(spec, g) ? 2 : spec.num_classes;
  return with_hidden_width(spec, width, 2);
}

inline std::size_t probe_length(const NetworkSpec& spec, std::int64_t rf) {
  const GraphInfo g = analyze(spec);
  const auto s = static_cast<std::size_t>(g.max_stride);
  const auto want = static_cast<std::size_t>(std::max<std::int64_t>(4 * rf, 8)) +
                    2 * rf_period(spec);
  return (want + s - 1) / s * s;
}

struct Interval {
  std::int64_t lo = 1;
  std::int64_t hi = 0;  // empty when lo > hi
  bool empty() const { return lo > hi; }
  void unite(const Interval& o) {
    if (o.empty()) return;
    if (empty()) {
      *this = o;
      return;
    }
    lo = std::min(lo, o.lo);
    hi = std::max(hi, o.hi);
  }
};

}  // namespace detail

/// Input interval hull influencing each output frame, computed by interval
/// propagation; returns the widest hull over the central output frames (one
/// per phase when upsampling makes the footprint phase-dependent).
/// T = 0 picks 4x the analytic RF.
inline std::int64_t structural_probe(const NetworkSpec& spec, std::size_t T = 0) {
  const GraphInfo g = analyze(spec);
  const std::size_t period = rf_period(spec);
  if (T == 0) T = detail::probe_length(spec, rf_general_value(spec));
  if (T < 2 * period) throw Error("probe input is shorter than two footprint periods");
  if (T % static_cast<std::size_t>(g.max_stride) != 0)
    throw Error("probe length must be a multiple of the deepest stride");
  using detail::Interval;
  std::vector<std::vector<Interval>> at(spec.layers.size());
  std::vector<Interval> input(T);
  for (std::size_t t = 0; t < T; ++t) input[t] = {static_cast<std::int64_t>(t), static_cast<std::int64_t>(t)};
  auto src = [&](int s) -> const std::vector<Interval>& { return s < 0 ? input : at[s]; };
  for (std::size_t i : g.order) {
    const auto& l = spec.layers[i];
    const auto& x = src(g.inputs[i][0]);
    const auto len = static_cast<std::int64_t>(x.size());
    std::vector<Interval> y;
    switch (l.kind) {
      case LayerKind::Conv:
        y.resize(x.size());
        for (std::int64_t t = 0; t < len; ++t)
          for (int off : l.taps.offsets)
            if (t + off >= 0 && t + off < len) y[t].unite(x[t + off]);
        break;
      case LayerKind::MaxPool:
        y.resize((x.size() + l.window - 1) / l.window);
        for (std::int64_t t = 0; t < len; ++t) y[t / l.window].unite(x[t]);
        break;
      case LayerKind::Upsample:
        y.resize(x.size() * l.factor);
        for (std::size_t t = 0; t < y.size(); ++t) y[t] = x[t / l.factor];
        break;
      case LayerKind::Add:
      case LayerKind::WeightedSum:
        y = x;
        for (int s : g.inputs[i])
          for (std::size_t t = 0; t < y.size(); ++t) y[t].unite(src(s)[t]);
        break;
      default: y = x; break;
    }
    at[i] = std::move(y);
  }
  const auto& out = at[g.output];
  std::int64_t widest = 0;
  for (std::size_t t = T / 2; t < T / 2 + period; ++t) {
    const Interval c = out[t];
    if (c.empty()) throw Error("central output frame depends on no input");
    if (c.lo <= 0 || c.hi >= static_cast<std::int64_t>(T) - 1)
      throw Error("probe input of " + std::to_string(T) +
                  " frames is too short for an interior measurement");
    widest = std::max(widest, c.hi - c.lo + 1);
  }
  return widest;
}

/// Backpropagates from one logit at a central frame through a positive-weight,
/// activation-free instance and returns the span of input frames with nonzero
/// gradient (widest over the central frames of each footprint phase).
inline std::int64_t gradient_probe(const NetworkSpec& spec, std::size_t T = 0,
                                   std::uint64_t seed = 7) {
  const NetworkSpec narrow = detail::probe_instance(spec);
  if (T == 0) T = detail::probe_length(narrow, rf_general_value(narrow));
  Network<double> net(narrow);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(0.1, 1.0);
  init_params<double>(narrow, net.params(), seed);
  for (auto& p : net.params())
    if (p.name.ends_with(".weight"))
      for (auto& v : p.value.flat()) v = pos(rng);
  Tensor<double> x(1, T, static_cast<std::size_t>(narrow.input_dim));
  for (auto& v : x.flat()) v = pos(rng);
  net.forward(x, EvalOptions{.probe = true});
  const std::size_t period = rf_period(narrow);
  std::int64_t widest = 0;
  for (std::size_t centre = T / 2; centre < T / 2 + period; ++centre) {
    Tensor<double> seed_grad(net.logits().shape());
    seed_grad(0, centre, 0) = 1.0;
    const Tensor<double> gx = net.backward_from(seed_grad);
    std::int64_t lo = -1, hi = -1;
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < gx.channels(); ++c)
        if (std::abs(gx(0, t, c)) > 0.0) {
          if (lo < 0) lo = static_cast<std::int64_t>(t);
          hi = static_cast<std::int64_t>(t);
        }
    if (lo < 0) throw NumericError("gradient probe produced an all-zero input gradient");
    if (lo == 0 || hi == static_cast<std::int64_t>(T) - 1)
      throw Error("probe input of " + std::to_string(T) +
                  " frames is too short for an interior measurement");
    widest = std::max(widest, hi - lo + 1);
  }
  return widest;
}

inline RfReport rf_general(const NetworkSpec& spec) {
  RfReport r;
  r.family = spec.family;
  r.jump_profile = rf_profile(spec);
  r.rf_general = r.jump_profile.back().rf;
  r.rf_paper = rf_paper_for(spec);
  r.structural = structural_probe(spec);
  r.gradient_probe = gradient_probe(spec);
  r.params = count_params(spec);
  return r;
}

// ---------------------------------------------------------------------------
// Closed form vs exact composition

struct Discrepancy {
  std::string equation;
  std::string config;
  std::int64_t paper = 0;
  std::int64_t exact = 0;
};

/// Down-sampling encoder alone: L_d levels of [conv(W_d) -> maxpool(P_d)].
inline NetworkSpec build_encoder(int W_d, int P_d, int L_d, int channels = 2, int input_dim = 2) {
  NetworkSpec s;
  s.family = Family::HgNet;
  s.input_dim = input_dim;
  s.num_classes = 2;
  std::string prev(kInputId);
  int in = input_dim;
  for (int l = 1; l <= L_d; ++l) {
    const auto lvl = std::to_string(l);
    s.chain(LayerSpec::conv("enc" + lvl, TapSet::contiguous(W_d), in, channels), prev);
    s.chain(LayerSpec::maxpool("pool" + lvl, P_d), "enc" + lvl);
    prev = "pool" + lvl;
    in = channels;
  }
  // Restore full resolution with a pure upsample so the spec is a valid network;
  // upsampling does not widen the receptive field.
  std::int64_t stride = 1;
  for (int l = 0; l < L_d; ++l) stride *= P_d;
  s.chain(LayerSpec::upsample("restore", static_cast<int>(stride)), prev);
  s.chain(LayerSpec::conv("output", TapSet{{0}}, channels, 2), "restore");
  s.chain(LayerSpec::softmax("softmax", 2), "output");
  s.meta = {{"W_d", W_d}, {"P_d", P_d}, {"L_d", L_d}};
  validate(s);
  return s;
}

/// Characterization rows for the closed forms that do not match the exact
/// composition (dilated stack, down-sampling encoder, stacked hourglass).
inline std::vector<Discrepancy> discrepancy_report() {
  std::vector<Discrepancy> rows;
  for (int W : {3, 5}) {
    for (int L = 1; L <= 5; ++L) {
      std::vector<int> d;
      for (int l = 0; l < L; ++l) d.push_back(1 << l);
      NetworkSpec chain;
      chain.input_dim = 2;
      chain.num_classes = 2;
      chain.family = Family::DilNet;
      std::string prev(kInputId);
      for (int l = 0; l < L; ++l) {
        const std::string id = "d" + std::to_string(l + 1);
        chain.chain(LayerSpec::conv(id, TapSet::dilated(W, d[l]), 2, 2), prev);
        prev = id;
      }
      chain.chain(LayerSpec::softmax("softmax", 2), prev);
      rows.push_back({"dilated", "W=" + std::to_string(W) + " L=" + std::to_string(L) + " d=2^(l-1)",
                      rf_dilated_paper(W, L), rf_general_value(chain)});
    }
  }
  rows.push_back({"down", "W_d=5 P_d=2 L_d=3", rf_hg_paper(5, 2, 3, 1, 3).rf_down,
                  rf_general_value(build_encoder(5, 2, 3))});
  rows.push_back({"down", "W_d=3 P_d=2 L_d=3", rf_hg_paper(3, 2, 3, 1, 3).rf_down,
                  rf_general_value(build_encoder(3, 2, 3))});
  rows.push_back({"stacked_hg", "S=5 W=5 L=3", rf_hg_paper(5, 2, 3, 5, 3).rf_stacked,
                  rf_general_value(build_hgnet(5, 5, 3, 2, 2, 2))});
  rows.push_back({"stacked_hg", "S=3 W=5 L=5", rf_hg_paper(5, 2, 5, 3, 5).rf_stacked,
                  rf_general_value(build_hgnet(3, 5, 5, 2, 2, 2))});
  return rows;
}

}  // namespace lrf
