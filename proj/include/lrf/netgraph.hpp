#pragma once

// Declarative network graphs: layer catalogue, JSON document form,
// validation/shape inference and parameter accounting.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lrf/tensor.hpp"

namespace lrf {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

inline constexpr std::string_view kInputId = "input";

/// Frame offsets read by a convolution, relative to the output position.
struct TapSet {
  std::vector<int> offsets;

  static TapSet contiguous(int width) {
    if (width < 1 || width % 2 == 0)
      throw Error("contiguous kernel width must be odd and >= 1, got " + std::to_string(width));
    return dilated(width, 1);
  }

  /// Width-W kernel with spacing `dilation` between taps (centred).
  static TapSet dilated(int width, int dilation) {
    if (width < 1 || width % 2 == 0)
      throw Error("dilated kernel width must be odd and >= 1, got " + std::to_string(width));
    if (dilation < 1) throw Error("dilation must be >= 1, got " + std::to_string(dilation));
    TapSet t;
    const int half = (width - 1) / 2;
    for (int i = -half; i <= half; ++i) t.offsets.push_back(i * dilation);
    return t;
  }

  /// TDNN context {-left, 0, +right}; duplicate zeros collapse.
  static TapSet tdnn(int left, int right) {
    if (left < 0 || right < 0) throw Error("TDNN contexts must be >= 0");
    TapSet t;
    if (left > 0) t.offsets.push_back(-left);
    t.offsets.push_back(0);
    if (right > 0) t.offsets.push_back(right);
    return t;
  }

  std::size_t size() const noexcept { return offsets.size(); }
  int min() const { return offsets.front(); }
  int max() const { return offsets.back(); }
  int extent() const { return offsets.back() - offsets.front(); }

  void validate(const std::string& where) const {
    if (offsets.empty()) throw Error("tap set is empty", where);
    for (std::size_t i = 1; i < offsets.size(); ++i)
      if (offsets[i] <= offsets[i - 1]) throw Error("tap offsets must be strictly increasing", where);
  }

  bool operator==(const TapSet&) const = default;
};

enum class LayerKind { Conv, MaxPool, Upsample, Relu, Identity, Add, WeightedSum, Softmax };

inline std::string_view kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Relu: return "relu";
    case LayerKind::Identity: return "identity";
    case LayerKind::Add: return "add";
    case LayerKind::WeightedSum: return "weighted_sum";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

inline LayerKind parse_kind(std::string_view s, const std::string& where) {
  for (LayerKind k : {LayerKind::Conv, LayerKind::MaxPool, LayerKind::Upsample, LayerKind::Relu,
                      LayerKind::Identity, LayerKind::Add, LayerKind::WeightedSum, LayerKind::Softmax})
    if (kind_name(k) == s) return k;
  throw Error("unknown layer kind '" + std::string(s) + "'", where);
}

/// One node of the graph. Only the fields relevant to `kind` are meaningful;
/// the others stay at their defaults (and are not serialized).
struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::Identity;
  // Conv
  TapSet taps;
  int in_channels = 0;
  int out_channels = 0;
  std::string share_group;  // empty: unshared
  // MaxPool
  int window = 0;
  // Upsample
  int factor = 0;
  // Add / WeightedSum
  std::vector<std::string> sources;
  // Softmax
  int num_classes = 0;

  static LayerSpec conv(std::string id, TapSet taps, int in, int out, std::string group = {}) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Conv;
    l.taps = std::move(taps);
    l.in_channels = in;
    l.out_channels = out;
    l.share_group = std::move(group);
    return l;
  }
  static LayerSpec maxpool(std::string id, int window) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::MaxPool;
    l.window = window;
    return l;
  }
  static LayerSpec upsample(std::string id, int factor) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Upsample;
    l.factor = factor;
    return l;
  }
  static LayerSpec relu(std::string id) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Relu;
    return l;
  }
  static LayerSpec identity(std::string id) {
    LayerSpec l;
    l.id = std::move(id);
    return l;
  }
  static LayerSpec add(std::string id, std::vector<std::string> sources) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Add;
    l.sources = std::move(sources);
    return l;
  }
  static LayerSpec weighted_sum(std::string id, std::vector<std::string> sources) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::WeightedSum;
    l.sources = std::move(sources);
    return l;
  }
  static LayerSpec softmax(std::string id, int classes) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Softmax;
    l.num_classes = classes;
    return l;
  }

  bool is_merge() const { return kind == LayerKind::Add || kind == LayerKind::WeightedSum; }
  bool operator==(const LayerSpec&) const = default;
};

enum class Family { Standard, DilNet, Tdnn, RecNet, HgNet };

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Standard: return "standard";
    case Family::DilNet: return "dilnet";
    case Family::Tdnn: return "tdnn";
    case Family::RecNet: return "recnet";
    case Family::HgNet: return "hgnet";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  for (Family f : {Family::Standard, Family::DilNet, Family::Tdnn, Family::RecNet, Family::HgNet})
    if (family_name(f) == s) return f;
  throw Error("unknown family '" + std::string(s) + "'");
}

struct NetworkSpec {
  Family family = Family::Standard;
  int input_dim = 40;
  int num_classes = 0;
  std::vector<LayerSpec> layers;
  std::vector<std::pair<std::string, std::string>> edges;
  Json meta = Json::object();

  bool operator==(const NetworkSpec&) const = default;

  /// Appends a layer fed by `from` (an existing layer id or "input").
  NetworkSpec& chain(LayerSpec layer, const std::string& from) {
    edges.emplace_back(from, layer.id);
    layers.push_back(std::move(layer));
    return *this;
  }
  /// Appends a merge layer with one edge per source.
  NetworkSpec& merge(LayerSpec layer) {
    for (const auto& s : layer.sources) edges.emplace_back(s, layer.id);
    layers.push_back(std::move(layer));
    return *this;
  }
};

/// Result of validation: evaluation order plus inferred per-layer shapes.
struct GraphInfo {
  std::vector<std::size_t> order;               // topological, ties broken by listing order
  std::vector<std::vector<int>> inputs;         // per layer; -1 denotes the network input
  std::vector<std::vector<std::size_t>> users;  // per layer: consumer layer indices
  std::vector<int> channels;                    // output channels per layer
  std::vector<int> stride;                      // input frames per output frame
  std::size_t output = 0;                       // index of the softmax sink
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> input_users;
  int max_stride = 1;                           // input lengths must be a multiple of this
};

namespace detail {

inline void check_merge_inputs(const NetworkSpec& spec, const LayerSpec& l,
                               const std::vector<int>& in, const GraphInfo& g) {
  auto chans = [&](int i) { return i < 0 ? spec.input_dim : g.channels[i]; };
  auto strd = [&](int i) { return i < 0 ? 1 : g.stride[i]; };
  auto name = [&](int i) { return i < 0 ? std::string(kInputId) : spec.layers[i].id; };
  for (std::size_t k = 1; k < in.size(); ++k) {
    if (chans(in[k]) != chans(in[0]))
      throw Error("merge channel mismatch between '" + name(in[0]) + "' (" +
                      std::to_string(chans(in[0])) + ") and '" + name(in[k]) + "' (" +
                      std::to_string(chans(in[k])) + ")",
                  l.id);
    if (strd(in[k]) != strd(in[0]))
      throw Error("merge time-resolution mismatch between '" + name(in[0]) + "' and '" +
                      name(in[k]) + "'",
                  l.id);
  }
}

}  // namespace detail

/// Validates `spec` and infers shapes. Every error names the offending layer.
inline GraphInfo analyze(const NetworkSpec& spec) {
  GraphInfo g;
  const std::size_t n = spec.layers.size();
  if (spec.input_dim < 1) throw Error("input_dim must be >= 1");
  if (spec.num_classes < 1) throw Error("num_classes must be >= 1");
  if (n == 0) throw Error("network has no layers");

  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = spec.layers[i];
    if (l.id.empty()) throw Error("layer id must be non-empty", "#" + std::to_string(i));
    if (l.id == kInputId) throw Error("layer id 'input' is reserved", l.id);
    if (!g.index.emplace(l.id, i).second) throw Error("duplicate layer id", l.id);
  }

  g.inputs.assign(n, {});
  g.users.assign(n, {});
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [from, to] : spec.edges) {
    if (!seen.insert({from, to}).second) throw Error("duplicate edge from '" + from + "'", to);
    auto t = g.index.find(to);
    if (t == g.index.end()) throw Error("edge targets unknown layer", to);
    int src = -1;
    if (from != kInputId) {
      auto f = g.index.find(from);
      if (f == g.index.end()) throw Error("edge from unknown layer '" + from + "'", to);
      src = static_cast<int>(f->second);
      g.users[f->second].push_back(t->second);
    } else {
      g.input_users.push_back(t->second);
    }
    g.inputs[t->second].push_back(src);
  }

  std::size_t softmax_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = spec.layers[i];
    if (l.is_merge()) {
      const std::size_t min_sources = l.kind == LayerKind::Add ? 2 : 1;
      if (l.sources.size() < min_sources)
        throw Error("merge needs at least " + std::to_string(min_sources) + " sources", l.id);
      std::vector<int> want;
      for (const auto& s : l.sources) {
        if (s == kInputId) {
          want.push_back(-1);
          continue;
        }
        auto f = g.index.find(s);
        if (f == g.index.end()) throw Error("unknown merge source '" + s + "'", l.id);
        want.push_back(static_cast<int>(f->second));
      }
      auto a = want, b = g.inputs[i];
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (std::adjacent_find(a.begin(), a.end()) != a.end())
        throw Error("duplicate merge source", l.id);
      if (a != b) throw Error("merge sources do not match incoming edges", l.id);
      g.inputs[i] = want;  // keep declared source order
    } else if (g.inputs[i].size() != 1) {
      throw Error("layer needs exactly one input edge, has " + std::to_string(g.inputs[i].size()),
                  l.id);
    }
    if (l.kind == LayerKind::Softmax) {
      ++softmax_count;
      g.output = i;
      if (!g.users[i].empty()) throw Error("softmax output must be a sink", l.id);
    } else if (g.users[i].empty()) {
      throw Error("layer output is unused (only the softmax may be a sink)", l.id);
    }
  }
  if (softmax_count != 1) throw Error("network needs exactly one softmax output");

  // Kahn's algorithm, ties broken by listing order.
  std::vector<std::size_t> indeg(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int s : g.inputs[i])
      if (s >= 0) ++indeg[i];
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (indeg[i] == 0) ready.push(i);
  while (!ready.empty()) {
    const std::size_t i = ready.top();
    ready.pop();
    g.order.push_back(i);
    for (std::size_t u : g.users[i])
      if (--indeg[u] == 0) ready.push(u);
  }
  if (g.order.size() != n) {
    for (std::size_t i = 0; i < n; ++i)
      if (indeg[i] > 0) throw Error("graph contains a cycle", spec.layers[i].id);
  }
  if (g.input_users.empty()) throw Error("network input is unused");

  g.channels.assign(n, 0);
  g.stride.assign(n, 0);
  std::map<std::string, const LayerSpec*> groups;
  for (std::size_t i : g.order) {
    const auto& l = spec.layers[i];
    const auto& in = g.inputs[i];
    const int c_in = in[0] < 0 ? spec.input_dim : g.channels[in[0]];
    const int s_in = in[0] < 0 ? 1 : g.stride[in[0]];
    switch (l.kind) {
      case LayerKind::Conv:
        l.taps.validate(l.id);
        if (l.in_channels < 1 || l.out_channels < 1) throw Error("conv channels must be >= 1", l.id);
        if (l.in_channels != c_in)
          throw Error("conv expects " + std::to_string(l.in_channels) + " input channels, gets " +
                          std::to_string(c_in),
                      l.id);
        if (!l.share_group.empty()) {
          auto [it, fresh] = groups.emplace(l.share_group, &l);
          if (!fresh && (it->second->taps != l.taps || it->second->in_channels != l.in_channels ||
                         it->second->out_channels != l.out_channels))
            throw Error("share group '" + l.share_group + "' shape differs from '" +
                            it->second->id + "'",
                        l.id);
        }
        g.channels[i] = l.out_channels;
        g.stride[i] = s_in;
        break;
      case LayerKind::MaxPool:
        if (l.window < 2) throw Error("maxpool window must be >= 2", l.id);
        g.channels[i] = c_in;
        g.stride[i] = s_in * l.window;
        break;
      case LayerKind::Upsample:
        if (l.factor < 2) throw Error("upsample factor must be >= 2", l.id);
        if (s_in % l.factor != 0)
          throw Error("upsample factor " + std::to_string(l.factor) +
                          " does not divide the current stride " + std::to_string(s_in),
                      l.id);
        g.channels[i] = c_in;
        g.stride[i] = s_in / l.factor;
        break;
      case LayerKind::Relu:
      case LayerKind::Identity:
        g.channels[i] = c_in;
        g.stride[i] = s_in;
        break;
      case LayerKind::Add:
      case LayerKind::WeightedSum:
        detail::check_merge_inputs(spec, l, in, g);
        g.channels[i] = c_in;
        g.stride[i] = s_in;
        break;
      case LayerKind::Softmax:
        if (l.num_classes != spec.num_classes)
          throw Error("softmax class count differs from network num_classes", l.id);
        if (c_in != l.num_classes)
          throw Error("softmax input has " + std::to_string(c_in) + " channels, expected " +
                          std::to_string(l.num_classes),
                      l.id);
        if (s_in != 1) throw Error("output time resolution differs from input", l.id);
        g.channels[i] = c_in;
        g.stride[i] = 1;
        break;
    }
  }
  for (std::size_t i = 0; i < n; ++i) g.max_stride = std::max(g.max_stride, g.stride[i]);
  return g;
}

inline void validate(const NetworkSpec& spec) { (void)analyze(spec); }

// ---------------------------------------------------------------------------
// JSON document form

namespace detail {

inline void require_only(const Json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw Error("unknown field '" + it.key() + "'", where);
  }
}

template <typename T>
T field(const Json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(std::string("missing field '") + key + "'", where);
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    throw Error(std::string("field '") + key + "' has the wrong type", where);
  }
}

}  // namespace detail

inline LayerSpec layer_from_json(const Json& j, std::size_t position) {
  const std::string pos = "#" + std::to_string(position);
  if (!j.is_object()) throw Error("layer entry must be an object", pos);
  const auto id = detail::field<std::string>(j, "id", pos);
  LayerSpec l;
  l.id = id;
  l.kind = parse_kind(detail::field<std::string>(j, "kind", id), id);
  switch (l.kind) {
    case LayerKind::Conv:
      detail::require_only(j, {"id", "kind", "taps", "in_channels", "out_channels", "share_group"},
                           id);
      l.taps.offsets = detail::field<std::vector<int>>(j, "taps", id);
      l.in_channels = detail::field<int>(j, "in_channels", id);
      l.out_channels = detail::field<int>(j, "out_channels", id);
      if (j.contains("share_group")) l.share_group = detail::field<std::string>(j, "share_group", id);
      break;
    case LayerKind::MaxPool:
      detail::require_only(j, {"id", "kind", "window"}, id);
      l.window = detail::field<int>(j, "window", id);
      break;
    case LayerKind::Upsample:
      detail::require_only(j, {"id", "kind", "factor"}, id);
      l.factor = detail::field<int>(j, "factor", id);
      break;
    case LayerKind::Relu:
    case LayerKind::Identity:
      detail::require_only(j, {"id", "kind"}, id);
      break;
    case LayerKind::Add:
    case LayerKind::WeightedSum:
      detail::require_only(j, {"id", "kind", "sources"}, id);
      l.sources = detail::field<std::vector<std::string>>(j, "sources", id);
      break;
    case LayerKind::Softmax:
      detail::require_only(j, {"id", "kind", "num_classes"}, id);
      l.num_classes = detail::field<int>(j, "num_classes", id);
      break;
  }
  return l;
}

inline OrderedJson layer_to_json(const LayerSpec& l) {
  OrderedJson j;
  j["id"] = l.id;
  j["kind"] = kind_name(l.kind);
  switch (l.kind) {
    case LayerKind::Conv:
      j["taps"] = l.taps.offsets;
      j["in_channels"] = l.in_channels;
      j["out_channels"] = l.out_channels;
      if (!l.share_group.empty()) j["share_group"] = l.share_group;
      break;
    case LayerKind::MaxPool: j["window"] = l.window; break;
    case LayerKind::Upsample: j["factor"] = l.factor; break;
    case LayerKind::Add:
    case LayerKind::WeightedSum: j["sources"] = l.sources; break;
    case LayerKind::Softmax: j["num_classes"] = l.num_classes; break;
    case LayerKind::Relu:
    case LayerKind::Identity: break;
  }
  return j;
}

inline NetworkSpec spec_from_json(const Json& doc) {
  if (!doc.is_object()) throw Error("spec document must be a JSON object");
  detail::require_only(doc, {"family", "input_dim", "num_classes", "layers", "edges", "meta"},
                       "document");
  NetworkSpec s;
  s.family = parse_family(detail::field<std::string>(doc, "family", "document"));
  s.input_dim = doc.contains("input_dim") ? detail::field<int>(doc, "input_dim", "document") : 40;
  s.num_classes = detail::field<int>(doc, "num_classes", "document");
  const auto& layers = doc.at("layers");
  if (!layers.is_array()) throw Error("'layers' must be an array", "document");
  for (std::size_t i = 0; i < layers.size(); ++i) s.layers.push_back(layer_from_json(layers[i], i));
  if (!doc.contains("edges") || !doc.at("edges").is_array())
    throw Error("'edges' must be an array", "document");
  for (const auto& e : doc.at("edges")) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_string())
      throw Error("each edge must be a [from, to] pair of ids", "edges");
    s.edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }
  if (doc.contains("meta")) {
    if (!doc.at("meta").is_object()) throw Error("'meta' must be an object", "document");
    s.meta = doc.at("meta");
  }
  validate(s);
  return s;
}

/// Parses and validates a spec document.
inline NetworkSpec parse_spec(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(std::string("malformed JSON: ") + e.what(), "document");
  }
  return spec_from_json(doc);
}

inline OrderedJson spec_to_json(const NetworkSpec& s) {
  OrderedJson doc;
  doc["family"] = family_name(s.family);
  doc["input_dim"] = s.input_dim;
  doc["num_classes"] = s.num_classes;
  doc["layers"] = OrderedJson::array();
  for (const auto& l : s.layers) doc["layers"].push_back(layer_to_json(l));
  doc["edges"] = OrderedJson::array();
  for (const auto& [a, b] : s.edges) doc["edges"].push_back({a, b});
  doc["meta"] = OrderedJson::parse(s.meta.dump());
  return doc;
}

/// Normalized document text: fixed key order, two-space indent, trailing newline.
inline std::string serialize_spec(const NetworkSpec& s) { return spec_to_json(s).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParamCount {
  std::int64_t conv = 0;   // weights + biases, shared groups counted once
  std::int64_t merge = 0;  // weighted-sum scalars
  std::int64_t total() const { return conv + merge; }
};

inline ParamCount param_breakdown(const NetworkSpec& spec) {
  ParamCount pc;
  std::set<std::string> groups;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::Conv) {
      if (!l.share_group.empty() && !groups.insert(l.share_group).second) continue;
      pc.conv += static_cast<std::int64_t>(l.taps.size()) * l.in_channels * l.out_channels +
                 l.out_channels;
    } else if (l.kind == LayerKind::WeightedSum) {
      pc.merge += static_cast<std::int64_t>(l.sources.size());
    }
  }
  return pc;
}

inline std::int64_t count_params(const NetworkSpec& spec) { return param_breakdown(spec).total(); }

/// Index of the conv that produces the class logits (the last conv upstream
/// of the softmax through channel-preserving single-input layers), if any.
inline std::optional<std::size_t> output_projection(const NetworkSpec& spec, const GraphInfo& g) {
  int cur = g.inputs[g.output][0];
  while (cur >= 0) {
    const auto& l = spec.layers[cur];
    if (l.kind == LayerKind::Conv) return static_cast<std::size_t>(cur);
    if (l.is_merge()) return std::nullopt;
    cur = g.inputs[cur][0];
  }
  return std::nullopt;
}

/// Returns a copy with every hidden conv width set to `width`. The conv feeding
/// the softmax keeps num_classes outputs; input channels follow the graph.
/// `input_dim`, when given, replaces the network input width.
inline NetworkSpec with_hidden_width(const NetworkSpec& spec, int width,
                                     std::optional<int> input_dim = std::nullopt) {
  if (width < 1) throw Error("hidden width must be >= 1");
  const GraphInfo g = analyze(spec);
  const auto proj = output_projection(spec, g);
  NetworkSpec out = spec;
  if (input_dim) out.input_dim = *input_dim;
  std::vector<int> chans(spec.layers.size(), 0);
  for (std::size_t i : g.order) {
    auto& l = out.layers[i];
    const int src = g.inputs[i][0];
    const int c_in = src < 0 ? out.input_dim : chans[src];
    if (l.kind == LayerKind::Conv) {
      l.in_channels = c_in;
      l.out_channels = (proj && *proj == i) ? spec.num_classes : width;
      chans[i] = l.out_channels;
    } else {
      chans[i] = c_in;
    }
  }
  out.meta["width"] = width;
  validate(out);
  return out;
}

/// Smallest hidden width whose parameter count lies within tolerance*budget of
/// `budget`. Errors when the budget is infeasible or the band is skipped over.
inline NetworkSpec match_budget(const NetworkSpec& spec, std::int64_t budget,
                                double tolerance = 0.05) {
  if (budget <= 0) throw Error("budget must be positive");
  if (tolerance < 0) throw Error("tolerance must be >= 0");
  const double lo = static_cast<double>(budget) * (1.0 - tolerance);
  const double hi = static_cast<double>(budget) * (1.0 + tolerance);
  std::int64_t below_width = 0, below_count = 0;
  for (int w = 1;; ++w) {
    NetworkSpec cand = with_hidden_width(spec, w);
    const auto c = count_params(cand);
    if (c >= lo && c <= hi) return cand;
    if (c > hi) {
      if (w == 1)
        throw Error("infeasible budget " + std::to_string(budget) + ": width 1 already needs " +
                    std::to_string(c) + " parameters");
      throw Error("no hidden width within tolerance of budget " + std::to_string(budget) +
                  "; nearest below is width " + std::to_string(below_width) + " with " +
                  std::to_string(below_count) + " parameters");
    }
    below_width = w;
    below_count = c;
  }
}

}  // namespace lrf
