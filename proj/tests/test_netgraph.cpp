#include <gtest/gtest.h>

#include <random>

#include "lrf/architectures.hpp"
#include "lrf/netgraph.hpp"

using namespace lrf;

namespace {

NetworkSpec one_conv(int W = 5, int in = 40, int out = 8) {
  NetworkSpec s;
  s.input_dim = in;
  s.num_classes = out;
  s.chain(LayerSpec::conv("c1", TapSet::contiguous(W), in, out), "input");
  s.chain(LayerSpec::softmax("sm", out), "c1");
  return s;
}

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(TapSet, Shapes) {
  EXPECT_EQ(TapSet::contiguous(5).offsets, (std::vector<int>{-2, -1, 0, 1, 2}));
  EXPECT_EQ(TapSet::dilated(3, 4).offsets, (std::vector<int>{-4, 0, 4}));
  EXPECT_EQ(TapSet::tdnn(2, 3).offsets, (std::vector<int>{-2, 0, 3}));
  EXPECT_EQ(TapSet::tdnn(0, 0).offsets, (std::vector<int>{0}));
  EXPECT_THROW(TapSet::contiguous(4), Error);
  EXPECT_THROW(TapSet::dilated(3, 0), Error);
  TapSet bad{{1, 0}};
  EXPECT_THROW(bad.validate("x"), Error);
}

TEST(ParseSpec, MinimalDocument) {
  const char* doc = R"({"family":"standard","input_dim":40,"num_classes":8,
    "layers":[{"id":"c1","kind":"conv","taps":[-1,0,1],"in_channels":40,"out_channels":8},
              {"id":"sm","kind":"softmax","num_classes":8}],
    "edges":[["input","c1"],["c1","sm"]],"meta":{}})";
  const auto s = parse_spec(doc);
  ASSERT_EQ(s.layers.size(), 2u);
  EXPECT_EQ(s.layers[0].kind, LayerKind::Conv);
  EXPECT_EQ(s.layers[1].kind, LayerKind::Softmax);
  EXPECT_EQ(parse_spec(serialize_spec(s)), s);
  EXPECT_EQ(serialize_spec(parse_spec(serialize_spec(s))), serialize_spec(s));
}

TEST(ParseSpec, UnknownFieldRejected) {
  auto j = spec_to_json(one_conv());
  j["colour"] = "blue";
  EXPECT_THROW(parse_spec(j.dump()), Error);
  auto k = spec_to_json(one_conv());
  k["layers"][0]["stride"] = 2;
  EXPECT_NE(error_of([&] { parse_spec(k.dump()); }).find("c1"), std::string::npos);
}

TEST(ParseSpec, MalformedJson) { EXPECT_THROW(parse_spec("{not json"), Error); }

TEST(ParseSpec, AddWithMismatchedChannelsNamesBothLayers) {
  NetworkSpec s;
  s.input_dim = 4;
  s.num_classes = 2;
  s.chain(LayerSpec::conv("wide", TapSet::contiguous(3), 4, 6), "input");
  s.chain(LayerSpec::conv("narrow", TapSet::contiguous(3), 4, 5), "input");
  s.merge(LayerSpec::add("join", {"wide", "narrow"}));
  s.chain(LayerSpec::conv("out", TapSet{{0}}, 6, 2), "join");
  s.chain(LayerSpec::softmax("sm", 2), "out");
  const auto msg = error_of([&] { parse_spec(serialize_spec(s)); });
  EXPECT_NE(msg.find("wide"), std::string::npos) << msg;
  EXPECT_NE(msg.find("narrow"), std::string::npos) << msg;
}

TEST(ParseSpec, CycleNamesLayer) {
  NetworkSpec s;
  s.input_dim = 2;
  s.num_classes = 2;
  s.layers.push_back(LayerSpec::conv("a", TapSet{{0}}, 2, 2));
  s.layers.push_back(LayerSpec::relu("b"));
  s.layers.push_back(LayerSpec::softmax("sm", 2));
  s.edges = {{"b", "a"}, {"a", "b"}, {"b", "sm"}};
  const auto msg = error_of([&] { validate(s); });
  EXPECT_FALSE(msg.empty());
  EXPECT_TRUE(msg.find('a') != std::string::npos || msg.find('b') != std::string::npos) << msg;
}

TEST(ParseSpec, StructuralErrors) {
  auto dup = one_conv();
  dup.layers.push_back(LayerSpec::relu("c1"));
  EXPECT_THROW(validate(dup), Error);

  auto two_sinks = one_conv();
  two_sinks.chain(LayerSpec::relu("dangling"), "c1");
  EXPECT_THROW(validate(two_sinks), Error);

  auto bad_edge = one_conv();
  bad_edge.edges.emplace_back("ghost", "sm");
  EXPECT_THROW(validate(bad_edge), Error);

  NetworkSpec pool1;
  pool1.input_dim = 2;
  pool1.num_classes = 2;
  pool1.chain(LayerSpec::maxpool("p", 1), "input");
  pool1.chain(LayerSpec::conv("c", TapSet{{0}}, 2, 2), "p");
  pool1.chain(LayerSpec::softmax("sm", 2), "c");
  EXPECT_THROW(validate(pool1), Error);

  // Pooling without restoring resolution: time length not preserved.
  NetworkSpec unrestored;
  unrestored.input_dim = 2;
  unrestored.num_classes = 2;
  unrestored.chain(LayerSpec::maxpool("p", 2), "input");
  unrestored.chain(LayerSpec::conv("c", TapSet{{0}}, 2, 2), "p");
  unrestored.chain(LayerSpec::softmax("sm", 2), "c");
  EXPECT_THROW(validate(unrestored), Error);

  auto wrong_classes = one_conv(3, 40, 8);
  wrong_classes.layers[1].num_classes = 7;
  EXPECT_THROW(validate(wrong_classes), Error);
}

TEST(ParseSpec, ShareGroupShapesMustAgree) {
  NetworkSpec s;
  s.input_dim = 4;
  s.num_classes = 4;
  s.chain(LayerSpec::conv("a", TapSet::contiguous(3), 4, 4, "g"), "input");
  s.chain(LayerSpec::conv("b", TapSet::contiguous(5), 4, 4, "g"), "a");
  s.chain(LayerSpec::softmax("sm", 4), "b");
  EXPECT_THROW(validate(s), Error);
}

TEST(ParseSpec, DilNetRoundTrip) {
  const auto built = build_dilnet(5, {2, 4, 8}, 512, 8);
  const auto parsed = parse_spec(serialize_spec(built));
  EXPECT_EQ(parsed, built);
}

TEST(ParseSpec, RoundTripRandomSpecs) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 30; ++i) {
    std::uniform_int_distribution<int> w(1, 3), l(1, 4), c(2, 9);
    NetworkSpec s;
    switch (i % 5) {
      case 0: s = build_standard(2 * w(rng) + 1, l(rng), c(rng), 3); break;
      case 1: s = build_dilnet(2 * w(rng) + 1, {1, 2 * w(rng)}, c(rng), 3); break;
      case 2: s = build_tdnn({{w(rng), 0}, {0, w(rng)}}, c(rng), 3); break;
      case 3: s = build_recnet(l(rng), l(rng), 3, c(rng), 3); break;
      case 4: s = build_hgnet(w(rng), 3, l(rng), c(rng), 3); break;
    }
    const auto text = serialize_spec(s);
    EXPECT_EQ(serialize_spec(parse_spec(text)), text);
  }
}

TEST(CountParams, SingleConv) {
  NetworkSpec s;
  s.input_dim = 40;
  s.num_classes = 512;
  s.chain(LayerSpec::conv("c", TapSet::contiguous(5), 40, 512), "input");
  s.chain(LayerSpec::softmax("sm", 512), "c");
  EXPECT_EQ(count_params(s), 102912);
}

TEST(CountParams, HandCountedStandardToy) {
  // conv1 3x40x16 + 16, conv2 3x16x16 + 16, conv3 3x16x16 + 16, output 1x16x8 + 8
  const auto s = build_standard(3, 3, 16, 8);
  const std::int64_t hand = (3 * 40 * 16 + 16) + 2 * (3 * 16 * 16 + 16) + (16 * 8 + 8);
  EXPECT_EQ(count_params(s), hand);
}

TEST(CountParams, SharedConvCountedOnce) {
  const auto r1 = build_recnet(1, 3, 3, 16, 8);
  const auto r5 = build_recnet(5, 3, 3, 16, 8);
  EXPECT_EQ(param_breakdown(r1).conv, param_breakdown(r5).conv);
  EXPECT_EQ(count_params(r5) - count_params(r1), 3 * (5 - 1));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    std::uniform_int_distribution<int> n(1, 4), c(2, 12);
    const int N = n(rng), C = c(rng);
    EXPECT_EQ(param_breakdown(build_recnet(1, N, 3, C, 4)).conv,
              param_breakdown(build_recnet(n(rng), N, 3, C, 4)).conv);
  }
}

TEST(MatchBudget, StandardToyWithinBand) {
  const auto s = build_standard(3, 3, 8, 8);
  const auto m = match_budget(s, 25600, 0.05);
  const auto c = count_params(m);
  EXPECT_GE(c, 24320);
  EXPECT_LE(c, 26880);
  // Exhaustive search: smallest width in band.
  int first = 0;
  for (int w = 1; w < 200 && !first; ++w) {
    const auto cw = count_params(with_hidden_width(s, w));
    if (cw >= 24320 && cw <= 26880) first = w;
  }
  EXPECT_EQ(m.meta["width"].get<int>(), first);
}

TEST(MatchBudget, ExactCountIsFixedPoint) {
  const auto s = build_standard(5, 4, 8, 8);
  const auto exact = count_params(with_hidden_width(s, 30));
  const auto m = match_budget(s, exact, 0.0);
  EXPECT_EQ(m.meta["width"].get<int>(), 30);
  EXPECT_EQ(count_params(m), exact);
}

TEST(MatchBudget, InfeasibleBudgets) {
  const auto s = build_standard(5, 10, 8, 8);
  EXPECT_THROW(match_budget(s, 100), Error);
  // Hourglass S=5 W=5 L=3: widths 11 and 12 straddle the 5% band.
  EXPECT_THROW(match_budget(build(preset(Family::HgNet)), 25600), Error);
}

TEST(MatchBudget, AllFamiliesAtTableBudget) {
  for (Family f : {Family::Standard, Family::DilNet, Family::Tdnn, Family::RecNet, Family::HgNet}) {
    const auto m = match_budget(build(budget_preset(f)), 25600);
    EXPECT_NEAR(static_cast<double>(count_params(m)), 25600.0, 1280.0) << family_name(f);
  }
}
