#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "lrf/architectures.hpp"
#include "lrf/network.hpp"

using namespace lrf;

namespace {

Tensor<double> random_input(std::size_t T, std::size_t D, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor<double> x(1, T, D);
  for (auto& v : x.flat()) v = n(rng);
  return x;
}

}  // namespace

TEST(Network, SingleConvMatchesManualChain) {
  NetworkSpec s;
  s.input_dim = 3;
  s.num_classes = 4;
  s.chain(LayerSpec::conv("c", TapSet::contiguous(3), 3, 4), "input");
  s.chain(LayerSpec::softmax("sm", 4), "c");
  Network<double> net(s);
  net.init(5);
  const auto x = random_input(7, 3, 1);
  const auto& p = net.forward(x);
  const auto& w = net.params()[0].value;
  const auto& b = net.params()[1].value;
  const auto manual = softmax_forward(conv1d_forward<double>(x, TapSet::contiguous(3), w, b.flat()));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.flat()[i], manual.flat()[i], 1e-14);
}

TEST(Network, ThreeLayerFiniteDifferences) {
  const auto s = build_standard(3, 2, 5, 4, 3);  // conv-relu-conv-relu-output
  Network<double> net(s);
  net.init(9);
  auto x = random_input(10, 3, 2);
  const std::vector<int> y{0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
  net.forward(x);
  net.loss(y);
  const auto gx = net.backward();
  const auto sig = net.kink_signature();
  std::vector<Tensor<double>> analytic;
  for (const auto& p : net.params()) analytic.push_back(p.grad);
  const double h = 1e-5;
  double worst = 0;
  auto loss_at = [&](bool& same) {
    net.forward(x);
    same = net.kink_signature() == sig;
    return net.loss(y);
  };
  auto check = [&](double& v, double a) {
    const double v0 = v;
    bool s1, s2;
    v = v0 + h;
    const double lp = loss_at(s1);
    v = v0 - h;
    const double lm = loss_at(s2);
    v = v0;
    if (!s1 || !s2) return;
    const double n = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-4}));
  };
  for (std::size_t i = 0; i < net.params().size(); ++i)
    for (std::size_t k = 0; k < net.params()[i].value.size(); ++k)
      check(net.params()[i].value.flat()[k], analytic[i].flat()[k]);
  for (std::size_t k = 0; k < x.size(); ++k) check(x.flat()[k], gx.flat()[k]);
  EXPECT_LT(worst, 1e-5);
}

TEST(Network, PosteriorLengthEqualsInputLength) {
  for (const auto& s : {build_standard(5, 3, 4, 3, 2), build_dilnet(3, {2, 4}, 4, 3, 2),
                        build_tdnn({{2, 0}, {0, 3}}, 4, 3, 2), build_recnet(2, 2, 3, 4, 3, 2),
                        build_hgnet(2, 3, 3, 4, 3, 2)}) {
    Network<double> net(s);
    net.init(1);
    const std::size_t T = net.pad_length(21);
    const auto& p = net.forward(random_input(T, 2, 3));
    EXPECT_EQ(p.time(), T) << family_name(s.family);
    EXPECT_EQ(p.channels(), 3u);
  }
}

TEST(Network, InputValidation) {
  Network<double> net(build_hgnet(1, 3, 2, 4, 3, 2));
  EXPECT_EQ(net.graph().max_stride, 4);
  EXPECT_EQ(net.pad_length(9), 12u);
  EXPECT_THROW(net.forward(random_input(9, 2, 1)), Error);
  EXPECT_THROW(net.forward(random_input(12, 3, 1)), Error);
}

TEST(Network, InitIsSeededGlorot) {
  const auto s = build_standard(5, 2, 6, 3, 4);
  Network<double> a(s), b(s), c(s);
  a.init(7);
  b.init(7);
  c.init(8);
  EXPECT_EQ(a.params()[0].value, b.params()[0].value);
  EXPECT_NE(a.params()[0].value, c.params()[0].value);
  const double limit = std::sqrt(6.0 / (5.0 * 4 + 5.0 * 6));
  for (double v : a.params()[0].value.flat()) EXPECT_LE(std::abs(v), limit);
  for (double v : a.params()[1].value.flat()) EXPECT_EQ(v, 0.0);
}

TEST(Network, SharedGroupHasOneAccumulator) {
  const auto s = build_recnet(3, 1, 3, 4, 2, 2);
  ParamStore<double> ps(s);
  std::set<int> weights;
  for (std::size_t i = 0; i < s.layers.size(); ++i)
    if (s.layers[i].kind == LayerKind::Conv && !s.layers[i].share_group.empty()) weights.insert(ps.weight_index(i));
  EXPECT_EQ(weights.size(), 1u);
  for (const auto& p : ps) EXPECT_EQ(p.value.shape(), p.grad.shape());
}

TEST(Network, FaultInjectionScalesOnlyThatLayer) {
  const auto s = build_standard(3, 2, 4, 3, 2);
  Network<double> a(s), b(s);
  a.init(1);
  b.init(1);
  b.inject_backward_fault("conv2", 2.0);
  const auto x = random_input(6, 2, 4);
  const std::vector<int> y{0, 1, 2, 0, 1, 2};
  for (auto* n : {&a, &b}) {
    n->forward(x);
    n->loss(y);
    n->backward();
  }
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const bool faulty = a.params()[i].name == "conv2.weight";
    for (std::size_t k = 0; k < a.params()[i].grad.size(); ++k)
      EXPECT_DOUBLE_EQ(b.params()[i].grad.flat()[k], (faulty ? 2.0 : 1.0) * a.params()[i].grad.flat()[k]);
  }
}
