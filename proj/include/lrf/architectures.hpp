#pragma once

// Builders for the five acoustic-model families. Every builder ends with a
// 1x1 output projection to the class logits followed by the softmax, so the
// hidden width stays uniform and match_budget() can rescale it.

#include <string>
#include <utility>
#include <vector>

#include "lrf/netgraph.hpp"

namespace lrf {

inline constexpr int kDefaultWidth = 512;

namespace detail {

inline void finish(NetworkSpec& s, const std::string& last, int width) {
  s.chain(LayerSpec::conv("output", TapSet{{0}}, width, s.num_classes), last);
  s.chain(LayerSpec::softmax("softmax", s.num_classes), "output");
  s.meta["width"] = width;
  validate(s);
}

/// conv + relu pair; returns the relu id.
inline std::string conv_relu(NetworkSpec& s, const std::string& id, TapSet taps, int in, int out,
                             const std::string& from, std::string group = {}) {
  s.chain(LayerSpec::conv(id, std::move(taps), in, out, std::move(group)), from);
  s.chain(LayerSpec::relu(id + "_relu"), id);
  return id + "_relu";
}

inline std::string preprocessing_subnet(NetworkSpec& s, int width) {
  std::string prev(kInputId);
  int in = s.input_dim;
  for (int i = 1; i <= 3; ++i) {
    prev = conv_relu(s, "pre" + std::to_string(i), TapSet::contiguous(3), in, width, prev);
    in = width;
  }
  return prev;
}

inline NetworkSpec empty_spec(Family f, int num_classes, int input_dim) {
  if (num_classes < 1) throw Error("num_classes must be >= 1");
  if (input_dim < 1) throw Error("input_dim must be >= 1");
  NetworkSpec s;
  s.family = f;
  s.num_classes = num_classes;
  s.input_dim = input_dim;
  return s;
}

}  // namespace detail

/// L stacked width-W convolutions with ReLU.
inline NetworkSpec build_standard(int W, int L, int channels, int num_classes, int input_dim = 40) {
  if (W < 3 || W % 2 == 0) throw Error("standard CNN kernel width must be odd and >= 3");
  if (L < 1) throw Error("standard CNN needs L >= 1");
  auto s = detail::empty_spec(Family::Standard, num_classes, input_dim);
  std::string prev(kInputId);
  int in = input_dim;
  for (int l = 1; l <= L; ++l) {
    prev = detail::conv_relu(s, "conv" + std::to_string(l), TapSet::contiguous(W), in, channels, prev);
    in = channels;
  }
  s.meta["W"] = W;
  s.meta["L"] = L;
  detail::finish(s, prev, channels);
  return s;
}

/// Three-layer W=3 preprocessing subnet, then one dilated width-W conv per factor.
inline NetworkSpec build_dilnet(int W, const std::vector<int>& dilations, int channels,
                                int num_classes, int input_dim = 40) {
  if (W < 1 || W % 2 == 0) throw Error("dilated kernel width must be odd");
  if (dilations.empty()) throw Error("dilation schedule is empty");
  for (int d : dilations)
    if (d < 1) throw Error("invalid dilation factor " + std::to_string(d));
  auto s = detail::empty_spec(Family::DilNet, num_classes, input_dim);
  std::string prev = detail::preprocessing_subnet(s, channels);
  for (std::size_t k = 0; k < dilations.size(); ++k)
    prev = detail::conv_relu(s, "dil" + std::to_string(k + 1), TapSet::dilated(W, dilations[k]),
                             channels, channels, prev);
  s.meta["W"] = W;
  s.meta["dilations"] = dilations;
  detail::finish(s, prev, channels);
  return s;
}

using TdnnContext = std::pair<int, int>;

/// One {-left, 0, +right} layer per context. An all-(0,0) schedule builds a
/// pointwise network and is flagged with meta.degenerate.
inline NetworkSpec build_tdnn(const std::vector<TdnnContext>& contexts, int channels,
                              int num_classes, int input_dim = 40) {
  if (contexts.empty()) throw Error("TDNN needs at least one layer");
  bool any_context = false;
  for (auto [a, b] : contexts) {
    if (a < 0 || b < 0) throw Error("TDNN contexts must be >= 0");
    any_context |= (a + b) > 0;
  }
  auto s = detail::empty_spec(Family::Tdnn, num_classes, input_dim);
  std::string prev(kInputId);
  int in = input_dim;
  Json ctx = Json::array();
  for (std::size_t l = 0; l < contexts.size(); ++l) {
    const auto [a, b] = contexts[l];
    prev = detail::conv_relu(s, "tdnn" + std::to_string(l + 1), TapSet::tdnn(a, b), in, channels, prev);
    in = channels;
    ctx.push_back({a, b});
  }
  s.meta["contexts"] = ctx;
  if (!any_context) s.meta["degenerate"] = true;
  detail::finish(s, prev, channels);
  return s;
}

/// Preprocessing subnet, then N recursive subnets. Each subnet applies one
/// shared width-W conv R times and merges the R outputs with a learned
/// weighted sum.
inline NetworkSpec build_recnet(int R, int N, int W, int channels, int num_classes,
                                int input_dim = 40) {
  if (R < 1 || N < 1) throw Error("recursive net needs R >= 1 and N >= 1");
  if (W < 1 || W % 2 == 0) throw Error("recursive conv width must be odd");
  auto s = detail::empty_spec(Family::RecNet, num_classes, input_dim);
  std::string prev = detail::preprocessing_subnet(s, channels);
  for (int n = 1; n <= N; ++n) {
    const std::string group = "rec" + std::to_string(n);
    std::vector<std::string> outs;
    std::string h = prev;
    for (int r = 1; r <= R; ++r) {
      h = detail::conv_relu(s, group + "_conv" + std::to_string(r), TapSet::contiguous(W), channels,
                            channels, h, group);
      outs.push_back(h);
    }
    s.merge(LayerSpec::weighted_sum(group + "_sum", outs));
    prev = group + "_sum";
  }
  s.meta["R"] = R;
  s.meta["N"] = N;
  s.meta["W"] = W;
  detail::finish(s, prev, channels);
  return s;
}

/// S hourglass units in series. Each unit: L levels of conv+ReLU then
/// maxpool(2); a bottleneck conv; L levels of upsample(2), Add with the
/// same-resolution pre-pool activation, conv+ReLU.
inline NetworkSpec build_hgnet(int S, int W, int L, int channels, int num_classes,
                               int input_dim = 40) {
  if (S < 1 || L < 1) throw Error("hourglass net needs S >= 1 and L >= 1");
  if (W < 1 || W % 2 == 0) throw Error("hourglass kernel width must be odd");
  auto s = detail::empty_spec(Family::HgNet, num_classes, input_dim);
  std::string prev(kInputId);
  int in = input_dim;
  for (int u = 1; u <= S; ++u) {
    const std::string p = "hg" + std::to_string(u) + "_";
    std::vector<std::string> skips;
    for (int l = 1; l <= L; ++l) {
      const auto lvl = std::to_string(l);
      prev = detail::conv_relu(s, p + "down" + lvl, TapSet::contiguous(W), in, channels, prev);
      in = channels;
      skips.push_back(prev);
      s.chain(LayerSpec::maxpool(p + "pool" + lvl, 2), prev);
      prev = p + "pool" + lvl;
    }
    prev = detail::conv_relu(s, p + "bottleneck", TapSet::contiguous(W), channels, channels, prev);
    for (int l = L; l >= 1; --l) {
      const auto lvl = std::to_string(l);
      s.chain(LayerSpec::upsample(p + "up" + lvl, 2), prev);
      s.merge(LayerSpec::add(p + "skip" + lvl, {p + "up" + lvl, skips[l - 1]}));
      prev = detail::conv_relu(s, p + "upconv" + lvl, TapSet::contiguous(W), channels, channels,
                               p + "skip" + lvl);
    }
  }
  s.meta["S"] = S;
  s.meta["W"] = W;
  s.meta["L"] = L;
  detail::finish(s, prev, channels);
  return s;
}

/// Hyperparameters for any family; defaults are the best configurations
/// reported for each family with 512 kernels per layer.
struct ArchConfig {
  Family family = Family::Standard;
  int W = 5;
  int L = 10;
  int S = 5;
  int R = 5;
  int N = 5;
  std::vector<int> dilations{2, 4, 8};
  std::vector<TdnnContext> contexts{{1, 1}, {1, 1}, {2, 2}, {3, 3}, {3, 3}};
  int channels = kDefaultWidth;
  int num_classes = 8;
  int input_dim = 40;
};

/// Default configuration per family.
inline ArchConfig preset(Family f) {
  ArchConfig c;
  c.family = f;
  switch (f) {
    case Family::Standard: c.W = 5; c.L = 10; break;
    case Family::DilNet: c.W = 5; break;
    case Family::Tdnn: break;
    case Family::RecNet: c.W = 3; c.R = 5; c.N = 5; break;
    case Family::HgNet: c.S = 5; c.W = 5; c.L = 3; break;
  }
  return c;
}

/// Named presets: the five family defaults plus "hgnet-t2" (S=3, W=5, L=5),
/// the hourglass configuration used for fixed-budget comparisons.
inline ArchConfig preset(std::string_view name) {
  if (name == "hgnet-t2") {
    auto c = preset(Family::HgNet);
    c.S = 3;
    c.L = 5;
    return c;
  }
  return preset(parse_family(name));
}

/// Preset used when a family is matched to a parameter budget.
inline ArchConfig budget_preset(Family f) {
  return f == Family::HgNet ? preset("hgnet-t2") : preset(f);
}

inline NetworkSpec build(const ArchConfig& c) {
  switch (c.family) {
    case Family::Standard: return build_standard(c.W, c.L, c.channels, c.num_classes, c.input_dim);
    case Family::DilNet: return build_dilnet(c.W, c.dilations, c.channels, c.num_classes, c.input_dim);
    case Family::Tdnn: return build_tdnn(c.contexts, c.channels, c.num_classes, c.input_dim);
    case Family::RecNet: return build_recnet(c.R, c.N, c.W, c.channels, c.num_classes, c.input_dim);
    case Family::HgNet: return build_hgnet(c.S, c.W, c.L, c.channels, c.num_classes, c.input_dim);
  }
  throw Error("unknown family");
}

}  // namespace lrf
