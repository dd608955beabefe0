#pragma once

// Parameter storage and whole-graph forward/backward evaluation.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lrf/layers.hpp"
#include "lrf/netgraph.hpp"

namespace lrf {

template <typename T>
struct Param {
  std::string name;   // "<layer or group>.weight" etc.
  std::string layer;  // first layer that owns it (used in diagnostics)
  Tensor<T> value;
  Tensor<T> grad;
};

/// Holds one weight/bias pair per conv (one per share group) and one alpha
/// vector per weighted sum, in spec order.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(const NetworkSpec& spec) {
    weight_of_.assign(spec.layers.size(), -1);
    bias_of_.assign(spec.layers.size(), -1);
    std::map<std::string, std::pair<int, int>> groups;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
      const auto& l = spec.layers[i];
      if (l.kind == LayerKind::Conv) {
        if (!l.share_group.empty()) {
          if (auto it = groups.find(l.share_group); it != groups.end()) {
            weight_of_[i] = it->second.first;
            bias_of_[i] = it->second.second;
            continue;
          }
        }
        const std::string owner = l.share_group.empty() ? l.id : l.share_group;
        weight_of_[i] = add(owner + ".weight", l.id,
                            Shape{l.taps.size(), std::size_t(l.in_channels), std::size_t(l.out_channels)});
        bias_of_[i] = add(owner + ".bias", l.id, Shape{1, 1, std::size_t(l.out_channels)});
        if (!l.share_group.empty()) groups[l.share_group] = {weight_of_[i], bias_of_[i]};
      } else if (l.kind == LayerKind::WeightedSum) {
        weight_of_[i] = add(l.id + ".alpha", l.id, Shape{1, 1, l.sources.size()});
      }
    }
  }

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Parameter index of a layer's weight (conv) or alpha (weighted sum); -1 if none.
  int weight_index(std::size_t layer) const { return weight_of_[layer]; }
  int bias_index(std::size_t layer) const { return bias_of_[layer]; }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    out.weight_of_ = weight_of_;
    out.bias_of_ = bias_of_;
    for (const auto& p : params_)
      out.params_.push_back({p.name, p.layer, p.value.template cast<U>(), p.grad.template cast<U>()});
    return out;
  }

 private:
  template <typename U>
  friend class ParamStore;

  int add(std::string name, std::string layer, Shape shape) {
    params_.push_back({std::move(name), std::move(layer), Tensor<T>(shape), Tensor<T>(shape)});
    return static_cast<int>(params_.size() - 1);
  }

  std::vector<Param<T>> params_;
  std::vector<int> weight_of_;
  std::vector<int> bias_of_;
};

/// Seeded Glorot-uniform conv weights (fan = |taps| * channels), zero biases,
/// weighted-sum alphas at 1/R.
template <typename T>
void init_params(const NetworkSpec& spec, ParamStore<T>& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<bool> done(params.size(), false);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const int w = params.weight_index(i);
    if (w < 0 || done[w]) continue;
    done[w] = true;
    auto& p = params[w];
    if (l.kind == LayerKind::Conv) {
      const double k = static_cast<double>(l.taps.size());
      const double limit = std::sqrt(6.0 / (k * l.in_channels + k * l.out_channels));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : p.value.flat()) v = static_cast<T>(u(rng));
      params[params.bias_index(i)].value.fill(T(0));
    } else {
      p.value.fill(static_cast<T>(1.0 / static_cast<double>(l.sources.size())));
    }
  }
}

struct EvalOptions {
  /// Receptive-field probe mode: ReLU acts as identity, max pooling as mean pooling.
  bool probe = false;
};

/// A network instance: spec, graph analysis, parameters and the activation
/// cache of the last forward pass. Single-writer.
template <typename T>
class Network {
 public:
  explicit Network(NetworkSpec spec)
      : spec_(std::move(spec)), graph_(analyze(spec_)), params_(spec_) {}

  const NetworkSpec& spec() const { return spec_; }
  const GraphInfo& graph() const { return graph_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  void init(std::uint64_t seed) { init_params(spec_, params_, seed); }

  /// Inputs shorter than a multiple of the deepest stride are rejected; see
  /// pad_length().
  std::size_t pad_length(std::size_t frames) const {
    const auto s = static_cast<std::size_t>(graph_.max_stride);
    return (frames + s - 1) / s * s;
  }

  /// Runs the graph in topological order; returns the posteriors.
  const Tensor<T>& forward(const Tensor<T>& x, EvalOptions opts = {}) {
    if (x.channels() != static_cast<std::size_t>(spec_.input_dim))
      throw Error("input has " + std::to_string(x.channels()) + " channels, network expects " +
                  std::to_string(spec_.input_dim));
    if (x.time() % static_cast<std::size_t>(graph_.max_stride) != 0)
      throw Error("input length " + std::to_string(x.time()) + " is not a multiple of " +
                  std::to_string(graph_.max_stride) + " (pad or crop first)");
    opts_ = opts;
    input_ = x;
    const std::size_t n = spec_.layers.size();
    acts_.assign(n, Tensor<T>());
    argmax_.assign(n, {});
    for (std::size_t i : graph_.order) {
      const auto& l = spec_.layers[i];
      try {
        acts_[i] = eval_layer(i, l);
      } catch (const NumericError&) {
        throw;
      } catch (const Error& e) {
        throw Error(e.what(), l.id);
      }
    }
    return acts_[graph_.output];
  }

  const Tensor<T>& posteriors() const { return acts_[graph_.output]; }
  const Tensor<T>& logits() const { return source(graph_.inputs[graph_.output][0]); }
  const Tensor<T>& activation(std::size_t layer) const { return acts_[layer]; }
  const Tensor<T>& activation(const std::string& id) const { return acts_.at(graph_.index.at(id)); }

  /// Cross-entropy of the last forward pass; keeps the logit gradient for backward().
  double loss(std::span<const int> labels) {
    auto r = softmax_xent(logits(), labels);
    grad_logits_ = std::move(r.grad_logits);
    return r.cross_entropy;
  }

  /// Zeroes and fills every parameter gradient from the last loss() call.
  /// Returns the gradient with respect to the network input.
  Tensor<T> backward() { return backward_from(grad_logits_); }

  /// Backward pass seeded with an arbitrary gradient at the logits.
  Tensor<T> backward_from(const Tensor<T>& grad_logits) {
    const std::size_t n = spec_.layers.size();
    if (grad_logits.shape() != logits().shape()) throw Error("seed gradient shape mismatch");
    params_.zero_grad();
    grads_.assign(n, Tensor<T>());
    Tensor<T> grad_input(input_.shape());
    auto accumulate = [&](int src, const Tensor<T>& g) {
      Tensor<T>& dst = src < 0 ? grad_input : grads_[src];
      if (dst.size() == 0) {
        dst = g;
        return;
      }
      for (std::size_t k = 0; k < dst.size(); ++k) dst.flat()[k] += g.flat()[k];
    };
    accumulate(graph_.inputs[graph_.output][0], grad_logits);
    for (auto it = graph_.order.rbegin(); it != graph_.order.rend(); ++it) {
      const std::size_t i = *it;
      if (i == graph_.output) continue;
      const auto& l = spec_.layers[i];
      if (grads_[i].size() == 0) grads_[i] = Tensor<T>(acts_[i].shape());
      try {
        backprop_layer(i, l, grads_[i], accumulate);
      } catch (const NumericError&) {
        throw;
      } catch (const Error& e) {
        throw Error(e.what(), l.id);
      }
      grads_[i] = Tensor<T>();  // release
    }
    return grad_input;
  }

  /// Test hook: scales the weight gradient of the named conv by `factor`
  /// during backward (simulates a faulty backward kernel).
  void inject_backward_fault(std::string layer_id, T factor) {
    fault_layer_ = std::move(layer_id);
    fault_factor_ = factor;
  }

  /// Activation pattern of the last forward pass (ReLU signs, pool argmaxes);
  /// used to detect finite-difference steps that cross a kink.
  std::vector<std::uint8_t> kink_signature() const {
    std::vector<std::uint8_t> sig;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      if (l.kind == LayerKind::Relu) {
        for (T v : source(graph_.inputs[i][0]).flat()) sig.push_back(v > T(0));
      } else if (l.kind == LayerKind::MaxPool) {
        for (auto a : argmax_[i]) sig.push_back(static_cast<std::uint8_t>(a & 0xff));
      }
    }
    return sig;
  }

 private:
  const Tensor<T>& source(int idx) const { return idx < 0 ? input_ : acts_[idx]; }

  std::vector<const Tensor<T>*> sources(std::size_t i) const {
    std::vector<const Tensor<T>*> xs;
    for (int s : graph_.inputs[i]) xs.push_back(&source(s));
    return xs;
  }

  Tensor<T> eval_layer(std::size_t i, const LayerSpec& l) {
    const Tensor<T>& x = source(graph_.inputs[i][0]);
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& w = params_[params_.weight_index(i)].value;
        const auto& b = params_[params_.bias_index(i)].value;
        return conv1d_forward(x, l.taps, w, b.flat());
      }
      case LayerKind::MaxPool: {
        if (opts_.probe) return meanpool_forward(x, l.window);
        auto r = maxpool_forward(x, l.window);
        argmax_[i] = std::move(r.argmax);
        return std::move(r.output);
      }
      case LayerKind::Upsample: return upsample_forward(x, l.factor);
      case LayerKind::Relu: return opts_.probe ? x : relu_forward(x);
      case LayerKind::Identity: return x;
      case LayerKind::Add: {
        auto xs = sources(i);
        return add_forward<T>(xs);
      }
      case LayerKind::WeightedSum: {
        auto xs = sources(i);
        return weighted_sum_forward<T>(xs, params_[params_.weight_index(i)].value.flat());
      }
      case LayerKind::Softmax: return softmax_forward(x);
    }
    return x;
  }

  template <typename Acc>
  void backprop_layer(std::size_t i, const LayerSpec& l, const Tensor<T>& g, Acc& accumulate) {
    const int src = graph_.inputs[i][0];
    const Tensor<T>& x = source(src);
    switch (l.kind) {
      case LayerKind::Conv: {
        auto& wp = params_[params_.weight_index(i)];
        auto& bp = params_[params_.bias_index(i)];
        auto cg = conv1d_backward(x, l.taps, wp.value, g);
        if (!fault_layer_.empty() && fault_layer_ == l.id)
          for (auto& v : cg.weights.flat()) v *= fault_factor_;
        for (std::size_t k = 0; k < wp.grad.size(); ++k) wp.grad.flat()[k] += cg.weights.flat()[k];
        for (std::size_t k = 0; k < bp.grad.size(); ++k) bp.grad.flat()[k] += cg.bias[k];
        accumulate(src, cg.input);
        break;
      }
      case LayerKind::MaxPool:
        accumulate(src, opts_.probe ? meanpool_backward(g, l.window, x.shape())
                                    : maxpool_backward<T>(g, argmax_[i], x.shape()));
        break;
      case LayerKind::Upsample: accumulate(src, upsample_backward(g, l.factor)); break;
      case LayerKind::Relu: accumulate(src, opts_.probe ? g : relu_backward(x, g)); break;
      case LayerKind::Identity: accumulate(src, g); break;
      case LayerKind::Add:
        for (int s : graph_.inputs[i]) accumulate(s, g);
        break;
      case LayerKind::WeightedSum: {
        auto xs = sources(i);
        auto& ap = params_[params_.weight_index(i)];
        auto wg = weighted_sum_backward<T>(xs, ap.value.flat(), g);
        for (std::size_t k = 0; k < wg.alpha.size(); ++k) ap.grad.flat()[k] += wg.alpha[k];
        for (std::size_t k = 0; k < xs.size(); ++k) accumulate(graph_.inputs[i][k], wg.inputs[k]);
        break;
      }
      case LayerKind::Softmax: break;
    }
  }

  NetworkSpec spec_;
  GraphInfo graph_;
  ParamStore<T> params_;
  EvalOptions opts_;
  Tensor<T> input_;
  std::vector<Tensor<T>> acts_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<Tensor<T>> grads_;
  Tensor<T> grad_logits_;
  std::string fault_layer_;
  T fault_factor_ = T(1);
};

}  // namespace lrf
