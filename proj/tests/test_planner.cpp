#include <cmath>
#include <set>

#include "doctest.h"
#include "igc/interleave.hpp"
#include "igc/planner.hpp"

using namespace igc;

TEST_CASE("param_count matches the per-block table values") {
  CHECK(param_count(64, 9, {1, 64}) == 4672);       // Xception C=64
  CHECK(param_count(96, 9, {1, 96}) == 10080);      // Xception C=96
  CHECK(param_count(128, 9, {1, 128}) == 17536);    // Xception C=128
  CHECK(param_count(144, 9, {1, 12, 12}) == 4752);  // IGCV2 C=144
  CHECK(param_count(256, 9, {1, 16, 16}) == 10496); // IGCV2 C=256
  CHECK(param_count(361, 9, {1, 19, 19}) == 16967); // IGCV2 C=361
  CHECK(param_count(64, 9, {64}) == 36864);         // single dense 3x3 conv
  CHECK_THROWS_AS(param_count(64, 9, {}), usage_error);
}

TEST_CASE("param_lower_bound evaluations") {
  CHECK(param_lower_bound(144, 1, 2) == doctest::Approx(3456.0));
  CHECK(param_count(144, 1, {12, 12}) == 3456);  // equality at balance

  const double bound = param_lower_bound(144, 9, 3);
  CHECK(bound == doctest::Approx(432.0 * std::cbrt(1296.0)));  // ~4709.98
  CHECK(bound <= 4752.0);

  CHECK(param_lower_bound(64, 9, 1) == doctest::Approx(9.0 * 64 * 64));  // S*C^2
}

TEST_CASE("param_count ignores the order of the pointwise widths") {
  CHECK(param_count(24, 9, {1, 2, 3, 4}) == param_count(24, 9, {1, 4, 3, 2}));
  CHECK(param_count(24, 9, {1, 3, 2, 4}) == param_count(24, 9, {1, 2, 4, 3}));
  // the spatial factor is not interchangeable with the pointwise ones
  CHECK(param_count(24, 9, {2, 1, 3, 4}) != param_count(24, 9, {1, 2, 3, 4}));
}

TEST_CASE("balance_check coupled and separated scoring") {
  auto b1 = balance_check(1, {12, 12});
  CHECK(b1.balanced);
  CHECK(b1.score == doctest::Approx(1.0));

  auto b2 = balance_check(9, {2, 7, 7});
  CHECK_FALSE(b2.balanced);
  CHECK(b2.score == doctest::Approx(18.0 / 7.0));

  auto b3 = balance_check(9, {1, 10, 10}, Regime::separated);
  CHECK(b3.balanced);
  CHECK(b3.score == doctest::Approx(1.0));
  // coupled scoring of the same tuple is off balance (9 vs 10)
  CHECK_FALSE(balance_check(9, {1, 10, 10}).balanced);
}

TEST_CASE("optimal_L picks the better integer neighbor") {
  auto r = optimal_L(64, 9);
  CHECK(r.stationary == doctest::Approx(std::log(576.0)));
  CHECK(r.best_L == 6);
  CHECK(param_lower_bound(64, 9, 6) == doctest::Approx(1107.648).epsilon(1e-5));
  CHECK(param_lower_bound(64, 9, 7) == doctest::Approx(1110.770).epsilon(1e-5));
  CHECK(param_lower_bound(64, 9, 6) < param_lower_bound(64, 9, 7));

  // S*C = e: stationary exactly 1
  auto r2 = optimal_L(3, 1);
  CHECK(r2.stationary == doctest::Approx(std::log(3.0)));
  CHECK(r2.best_L == 1);

  auto r3 = optimal_L(256, 1);
  CHECK(r3.stationary == doctest::Approx(std::log(256.0)));
  const double q5 = param_lower_bound(256, 1, 5);
  const double q6 = param_lower_bound(256, 1, 6);
  CHECK(r3.best_L == (q5 <= q6 ? 5 : 6));
  CHECK(r3.best_L == 6);
}

TEST_CASE("flop_count reproduces the per-block table") {
  FactorChain xception = build_chain(64, 9, {1, 64});
  CHECK(flop_count(xception, 32, 32, 1) == 4672ull * 1024);  // 4,784,128

  FactorChain igcv2 = build_chain(361, 9, {1, 19, 19});
  CHECK(flop_count(igcv2, 32, 32, 1) == 16967ull * 1024);  // ~1.737e7

  CHECK(flop_count(xception, 1, 1, 1) == 4672);  // one position: FLOPs = Q
  CHECK_THROWS_AS(flop_count(xception, 0, 32, 1), usage_error);
}

TEST_CASE("flop_count applies the stride at the spatial factor") {
  FactorChain chain = build_chain(16, 9, {1, 4, 4});
  // depthwise at 16x16 halves to 8x8 for itself and both pointwise factors
  const std::uint64_t expect = 16ull * 9 * 64 + 16ull * 4 * 64 + 16ull * 4 * 64;
  CHECK(flop_count(chain, 16, 16, 2) == expect);
}

TEST_CASE("enumerate_factorizations") {
  SUBCASE("C=144 L=3 separated contains the balanced optimum first") {
    auto points = enumerate_factorizations(144, 3, Regime::separated, 9, false);
    REQUIRE(!points.empty());
    CHECK(points.front().branch_widths == std::vector<int>{1, 12, 12});
    CHECK(points.front().params == 4752);
    for (const auto& p : points) CHECK(p.params >= points.front().params);
  }
  SUBCASE("prime channel count only factors through 1s") {
    auto points = enumerate_factorizations(7, 3, Regime::separated, 9, false);
    std::set<std::vector<int>> ks;
    for (const auto& p : points) ks.insert(p.branch_widths);
    CHECK(ks.count({1, 1, 7}) == 1);
    CHECK(ks.count({1, 7, 1}) == 1);
    CHECK(ks.size() == 2);
  }
  SUBCASE("every point satisfies the Jensen bound") {
    for (int c : {12, 24, 36}) {
      for (auto regime : {Regime::coupled, Regime::separated}) {
        auto points = enumerate_factorizations(c, 3, regime, 9, false);
        for (const auto& p : points) {
          const double bound = param_lower_bound(c, 9, p.depth);
          CHECK(double(p.params) >= bound - 1e-6 * bound);
        }
      }
    }
  }
  SUBCASE("separated depth 1 is infeasible unless C = 1") {
    CHECK(enumerate_factorizations(7, 1, Regime::separated, 9, false).empty());
    CHECK(enumerate_factorizations(1, 1, Regime::separated, 9, false).size() == 1);
  }
  SUBCASE("density verdicts come from the verifier") {
    auto points = enumerate_factorizations(12, 2, Regime::coupled, 1, true);
    for (const auto& p : points) CHECK(p.density_verdict == "one-path");
  }
}

TEST_CASE("plan_igcv2_star depths and loose reports") {
  DesignPoint p216 = plan_igcv2_star(216, 8);
  CHECK(p216.depth == 4);  // ceil(log8 216) + 1

  DesignPoint p64 = plan_igcv2_star(64, 8);
  CHECK(p64.depth == 3);  // 8^2 = 64 exactly
  CHECK(p64.density_verdict == "one-path");

  DesignPoint p416 = plan_igcv2_star(416, 8);
  CHECK(p416.depth == 4);  // 8^3 = 512 != 416: loose
  CHECK(p416.params == 416ull * 9 + 3ull * 416 * 8);
  CHECK((p416.density_verdict == "dense" || p416.density_verdict == "partial"));
}

namespace {

NetworkRecipe cifar_recipe(BlockKind kind, int x, int blocks, int k, int classes) {
  NetworkRecipe r;
  r.input_channels = 3;
  r.stem = StemSpec{x, 9, 1};
  for (int s = 0; s < 3; ++s) {
    StageSpec stage;
    stage.kind = kind;
    stage.width = x << s;
    stage.blocks = blocks;
    stage.k = k;
    stage.stride = s == 0 ? 1 : 2;
    r.stages.push_back(stage);
  }
  r.head = HeadSpec{classes};
  return r;
}

}  // namespace

TEST_CASE("network_param_count matches the whole-network tables") {
  SUBCASE("IGCV2*-C416 depth 20 lands near 0.65M") {
    NetworkRecipe r = cifar_recipe(BlockKind::igcv2_star, 416, 6, 8, 10);
    NetworkBudget b = network_param_count(r, 32, 32);
    CHECK(b.total_params == 640234);
    CHECK(std::abs(double(b.total_params) - 650000.0) / 650000.0 < 0.10);
  }
  SUBCASE("Xception-C35 depth 8 lands near 0.056M") {
    NetworkRecipe r = cifar_recipe(BlockKind::xception, 35, 2, 0, 10);
    NetworkBudget b = network_param_count(r, 32, 32);
    CHECK(b.total_params == 59265);
    CHECK(std::abs(double(b.total_params) - 56000.0) / 56000.0 < 0.10);
  }
  SUBCASE("zero-stage recipe counts stem and head only") {
    NetworkRecipe r;
    r.input_channels = 3;
    r.stem = StemSpec{16, 9, 1};
    StageSpec stage;
    stage.kind = BlockKind::igcv2;
    stage.width = 16;
    stage.blocks = 1;
    stage.k = 4;
    r.stages.push_back(stage);  // base width needs one stage; drop it below
    r.head = HeadSpec{10};
    NetworkBudget with_stage = network_param_count(r, 32, 32);
    const std::uint64_t stage_params = with_stage.items[1].params;
    CHECK(with_stage.total_params ==
          with_stage.items[0].params + stage_params + with_stage.items[2].params);
    CHECK(with_stage.items[0].params == 27ull * 16 + 2 * 16);
    CHECK(with_stage.items[2].params == 16ull * 10 + 10);
  }
  SUBCASE("accounting is additive over stages") {
    NetworkRecipe r = cifar_recipe(BlockKind::igcv2_star, 64, 2, 8, 10);
    NetworkBudget b = network_param_count(r, 32, 32);
    std::uint64_t sum = 0;
    for (const auto& item : b.items) sum += item.params;
    CHECK(sum == b.total_params);
  }
}

TEST_CASE("network flops respect stage strides") {
  NetworkRecipe r = cifar_recipe(BlockKind::xception, 8, 1, 0, 10);
  r.count_affine = false;
  NetworkBudget b = network_param_count(r, 32, 32);
  // stem + stage1 at 32x32 = 1024 positions, stage2 at 256, stage3 at 64
  CHECK(b.items[0].flops == (27ull * 8) * 1024);
  CHECK(b.items[1].flops == (9ull * 8 + 64) * 1024);
  CHECK(b.items[2].flops == (9ull * 16 + 256) * 256);
  CHECK(b.items[3].flops == (9ull * 32 + 1024) * 64);
}

TEST_CASE("single-block recipe reproduces the Xception block numbers") {
  NetworkRecipe r;
  r.input_channels = 64;
  StageSpec stage;
  stage.kind = BlockKind::xception;
  stage.width = 64;
  stage.blocks = 1;
  r.stages.push_back(stage);
  r.count_affine = false;
  NetworkBudget b = network_param_count(r, 32, 32);
  CHECK(b.total_params == 4672);
  CHECK(b.total_flops == 4784128);
}

TEST_CASE("recipe document round-trip and validation") {
  NetworkRecipe r = cifar_recipe(BlockKind::igcv2, 64, 2, 8, 100);
  r.stages[1].kind = BlockKind::igcv3;
  r.stages[1].t = 6.0;
  r.stages[1].g1 = 2;
  r.stages[1].g2 = 2;
  NetworkRecipe parsed = recipe_from_json(recipe_to_json(r));
  CHECK(recipe_to_json(parsed) == recipe_to_json(r));

  CHECK_THROWS_AS(recipe_from_json("{\"stages\":[{\"kind\":\"nope\",\"width\":4}]}"), usage_error);
  CHECK_THROWS_AS(recipe_from_json("{}"), usage_error);
}

TEST_CASE("igcv3 stage accounting follows the bottleneck shape") {
  NetworkRecipe r;
  r.input_channels = 32;
  StageSpec stage;
  stage.kind = BlockKind::igcv3;
  stage.width = 32;
  stage.blocks = 1;
  stage.t = 6.0;
  stage.g1 = 2;
  stage.g2 = 2;
  r.stages.push_back(stage);
  r.count_affine = false;
  NetworkBudget b = network_param_count(r, 16, 16);
  const std::uint64_t expand = 32ull * 192 / 2, dw = 9ull * 192, project = 192ull * 32 / 2;
  CHECK(b.total_params == expand + dw + project);
}
