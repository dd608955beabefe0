#include <gtest/gtest.h>

#include <random>

#include "lrf/architectures.hpp"
#include "lrf/rf.hpp"

using namespace lrf;

namespace {

// Hand recursion for a chain of convs and pools: r += (W-1)*jump for a conv,
// r += (P-1)*jump then jump *= P for a pool.
std::int64_t encoder_rf(int W, int P, int L) {
  std::int64_t r = 1, j = 1;
  for (int l = 0; l < L; ++l) {
    r += (W - 1) * j;
    r += (P - 1) * j;
    j *= P;
  }
  return r;
}

NetworkSpec random_spec(std::mt19937_64& rng, int family) {
  auto u = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  switch (family) {
    case 0: return build_standard(2 * u(1, 3) + 1, u(1, 6), 2, 2, 2);
    case 1: {
      std::vector<int> d;
      for (int i = u(1, 4); i > 0; --i) d.push_back(u(1, 8));
      return build_dilnet(2 * u(0, 2) + 1, d, 2, 2, 2);
    }
    case 2: {
      std::vector<TdnnContext> c;
      for (int i = u(1, 5); i > 0; --i) c.emplace_back(u(0, 3), u(0, 3));
      return build_tdnn(c, 2, 2, 2);
    }
    case 3: return build_recnet(u(1, 4), u(1, 3), 2 * u(0, 2) + 1, 2, 2, 2);
    default: return build_hgnet(u(1, 3), 2 * u(0, 2) + 1, u(1, 3), 2, 2, 2);
  }
}

}  // namespace

TEST(RfOracle, StandardTenLayers) {
  const auto s = build_standard(5, 10, 4, 3);
  EXPECT_EQ(rf_general_value(s), 41);
  EXPECT_EQ(rf_paper_for(s), 41);
  EXPECT_EQ(structural_probe(s), 41);
  EXPECT_EQ(gradient_probe(s), 41);
}

TEST(RfOracle, TdnnContexts) {
  const auto s = build_tdnn({{1, 1}, {2, 2}}, 4, 3);
  EXPECT_EQ(rf_general_value(s), 7);
  EXPECT_EQ(rf_paper_for(s), 7);
  EXPECT_EQ(gradient_probe(s), 7);
}

TEST(RfOracle, DownsamplingEncoder) {
  EXPECT_EQ(encoder_rf(5, 2, 3), 36);
  EXPECT_EQ(rf_general_value(build_encoder(5, 2, 3)), 36);
  EXPECT_EQ(structural_probe(build_encoder(5, 2, 3)), 36);
  EXPECT_EQ(rf_general_value(build_encoder(3, 2, 3)), encoder_rf(3, 2, 3));
  EXPECT_EQ(rf_general_value(build_encoder(3, 3, 2)), encoder_rf(3, 3, 2));
  EXPECT_EQ(rf_hg_paper(5, 2, 3, 1, 3).rf_down, 17);
}

TEST(RfOracle, DilatedChain) {
  // Exact: 1 + (W-1) * sum of dilations.
  const auto s = build_dilnet(5, {2, 4, 8}, 4, 3);
  EXPECT_EQ(rf_general_value(s), 1 + 3 * 2 + 4 * (2 + 4 + 8));
  EXPECT_EQ(gradient_probe(s), 63);
  EXPECT_EQ(rf_dilated_paper(3, 2), 7);
  EXPECT_EQ(rf_dilated_paper(5, 7), 281);
}

TEST(RfOracle, RecNetHasNoClosedForm) {
  const auto s = build_recnet(3, 2, 3, 4, 3);
  EXPECT_FALSE(rf_paper_for(s).has_value());
  EXPECT_EQ(rf_general_value(s), 1 + 3 * 2 + 2 * 3 * 2);
}

TEST(RfProbes, AgreeOnRandomSpecs) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 40; ++i) {
    const auto s = random_spec(rng, i % 5);
    const auto rf = rf_general_value(s);
    EXPECT_EQ(structural_probe(s), rf) << serialize_spec(s);
    EXPECT_EQ(gradient_probe(s), rf) << serialize_spec(s);
  }
}

TEST(RfClosedForms, StandardAndTdnnMatchExact) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 100; ++i) {
    for (int f : {0, 2}) {
      const auto s = random_spec(rng, f);
      EXPECT_EQ(rf_paper_for(s).value(), rf_general_value(s)) << serialize_spec(s);
    }
  }
}

TEST(RfReport, FieldsConsistent) {
  const auto r = rf_general(build_hgnet(1, 3, 2, 4, 3));
  EXPECT_EQ(r.rf_general, r.structural);
  EXPECT_EQ(r.rf_general, r.gradient_probe);
  EXPECT_EQ(r.rf_general, r.jump_profile.back().rf);
  EXPECT_GT(r.params, 0);
}

TEST(Discrepancy, ClosedFormsVersusExact) {
  const auto rows = discrepancy_report();
  auto find = [&](const std::string& eq, const std::string& cfg) {
    for (const auto& r : rows)
      if (r.equation == eq && r.config == cfg) return r;
    ADD_FAILURE() << eq << " " << cfg;
    return Discrepancy{};
  };
  const auto enc = find("down", "W_d=5 P_d=2 L_d=3");
  EXPECT_EQ(enc.paper, 17);
  EXPECT_EQ(enc.exact, 36);
  const auto hg = find("stacked_hg", "S=5 W=5 L=3");
  EXPECT_EQ(hg.paper, 680);
  EXPECT_NE(hg.exact, hg.paper);
  EXPECT_EQ(hg.exact, rf_general_value(build_hgnet(5, 5, 3, 4, 3)));
  const auto agree = find("dilated", "W=3 L=2 d=2^(l-1)");
  EXPECT_EQ(agree.paper, 7);
  EXPECT_EQ(agree.exact, 7);
  const auto d3 = find("dilated", "W=5 L=3 d=2^(l-1)");
  EXPECT_EQ(d3.exact, 1 + 4 * (1 + 2 + 4));
  EXPECT_NE(d3.paper, d3.exact);
}
