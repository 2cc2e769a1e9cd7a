#include <functional>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "igc/interleave.hpp"
#include "igc/structure.hpp"

using namespace igc;

TEST_CASE("mixed-radix encode/decode round trip") {
  MixedRadixLayout layout;
  layout.radices = {2, 3, 4};
  for (int fastest = 1; fastest <= 3; ++fastest) {
    layout.fastest = fastest;
    for (int c = 0; c < layout.channels(); ++c) CHECK(layout.encode(layout.decode(c)) == c);
  }
}

TEST_CASE("build_interleave K=(2,2) is the perfect shuffle") {
  PermutationSpec p = build_interleave({2, 2}, 1);
  CHECK(p.map == std::vector<int>{0, 2, 1, 3});
}

TEST_CASE("build_interleave K=(2,3) makes the chain complementary") {
  PermutationSpec p = build_interleave({2, 3}, 1);
  CHECK(p.size() == 6);
  FactorChain chain = build_chain(6, 1, {2, 3});
  CHECK(verify_complementary(chain).pass);
}

TEST_CASE("interleaves compose with their inverses to identity") {
  for (auto radices : std::vector<std::vector<int>>{{2, 2}, {2, 3}, {3, 4, 2}, {4, 4, 4}}) {
    for (int l = 1; l < static_cast<int>(radices.size()); ++l) {
      PermutationSpec p = build_interleave(radices, l);
      PermutationSpec inv = p.inverse();
      for (int j = 0; j < p.size(); ++j) CHECK(inv.map[p.map[j]] == j);
    }
  }
}

TEST_CASE("single factor needs no interleave") {
  FactorChain chain = build_chain(8, 1, {8});
  CHECK(chain.interleaves.empty());
  CHECK(verify_complementary(chain).pass);
}

TEST_CASE("build_chain strict examples") {
  SUBCASE("separated C=144 K=(1,12,12)") {
    FactorChain chain = build_chain(144, 9, {1, 12, 12});
    CHECK(chain.factors[0].spatial_taps == 9);
    CHECK(chain.factors[1].spatial_taps == 1);
    CHECK(verify_complementary(chain).pass);
  }
  SUBCASE("IGCV2* shape C=64 K=(1,8,8)") {
    FactorChain chain = build_chain(64, 9, {1, 8, 8});
    CHECK(verify_complementary(chain).pass);
  }
  SUBCASE("identity interleaves break the condition") {
    FactorChain chain = build_chain(4, 1, {2, 2});
    chain.interleaves[0] = PermutationSpec::identity(4);
    CHECK_FALSE(verify_complementary(chain).pass);
  }
  SUBCASE("strict mode rejects a width mismatch") {
    CHECK_THROWS_AS(build_chain(10, 1, {3, 3}), structural_error);
  }
}

TEST_CASE("exhaustive one-path guarantee for small channel counts") {
  // Full range (C <= 64, L <= 5) runs in the acceptance suite; this covers
  // every ordered factorization with factors >= 2 for C <= 24.
  for (int c = 2; c <= 24; ++c) {
    std::vector<std::vector<int>> stack{{}};
    std::vector<std::vector<int>> all;
    std::function<void(int, std::vector<int>&)> rec = [&](int rem, std::vector<int>& cur) {
      if (cur.size() >= 2 && rem == 1) all.push_back(cur);
      if (cur.size() == 5) return;
      for (int d = 2; d <= rem; ++d) {
        if (rem % d) continue;
        cur.push_back(d);
        rec(rem / d, cur);
        cur.pop_back();
      }
    };
    std::vector<int> cur;
    rec(c, cur);
    for (const auto& k : all) {
      FactorChain chain = build_chain(c, 1, k);
      CHECK(is_exactly_one_path(compose_structure(chain)));
    }
  }
}

TEST_CASE("build_loose_chain") {
  SUBCASE("C=416 K=8 L=4 quantifies coverage") {
    LooseChain lc = build_loose_chain(416, 9, 8, 4);
    CHECK(lc.report.pass);
    CHECK(lc.report.covered_fraction <= 1.0);
    CHECK(lc.report.covered_fraction > 0.0);
    CHECK(lc.report.max_paths >= 1);
    CHECK(lc.chain.depth() == 4);
    CHECK(lc.chain.factors[1].branches == 52);
  }
  SUBCASE("exact case degenerates to strict") {
    LooseChain lc = build_loose_chain(64, 9, 8, 3);
    CHECK(lc.report.mode == ComplementarityMode::strict);
    CHECK(lc.report.pass);
    CHECK(lc.report.covered_fraction == doctest::Approx(1.0));
    CHECK(lc.report.max_paths == 1);
  }
  SUBCASE("single-branch pointwise is an ordinary conv") {
    LooseChain lc = build_loose_chain(8, 9, 8, 2);
    CHECK(lc.report.covered_fraction == doctest::Approx(1.0));
    CHECK(lc.chain.factors[1].branches == 1);
  }
  SUBCASE("short last branch") {
    LooseChain lc = build_loose_chain(10, 9, 4, 3);
    CHECK(lc.chain.factors[1].branches == 3);
    CHECK(lc.chain.factors[1].in_count(2) == 2);
    CHECK(lc.report.covered_fraction <= 1.0);
  }
}

TEST_CASE("build_chain loose mode delegates to the loose builder") {
  FactorChain via_mode = build_chain(416, 9, {1, 8, 8, 8}, ChainMode::loose);
  FactorChain direct = build_loose_chain(416, 9, 8, 4).chain;
  CHECK(via_mode == direct);
  CHECK_THROWS_AS(build_chain(416, 9, {2, 8, 8}, ChainMode::loose), usage_error);
}

TEST_CASE("branch_shuffle distributes branches round-robin") {
  PermutationSpec p = branch_shuffle(8, 2);
  // branch 0 = {0..3}, branch 1 = {4..7}; destinations alternate
  CHECK(p.map == std::vector<int>{0, 2, 4, 6, 1, 3, 5, 7});
  CHECK_THROWS_AS(branch_shuffle(9, 2), structural_error);
}
