#include <cstdint>
#include <random>
#include <vector>

#include "doctest.h"
#include "igc/interleave.hpp"
#include "igc/structure.hpp"

using namespace igc;

namespace {

// Test-side oracle: plain integer matrix product, independent of
// compose_structure.
using IntMat = std::vector<std::vector<std::uint64_t>>;

IntMat to_rows(const StructureMask& m) {
  IntMat rows(m.rows, std::vector<std::uint64_t>(m.cols, 0));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) rows[i][j] = m.at(i, j);
  return rows;
}

IntMat mul(const IntMat& a, const IntMat& b) {
  IntMat out(a.size(), std::vector<std::uint64_t>(b[0].size(), 0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

IntMat brute_force_chain(const FactorChain& chain) {
  IntMat acc;
  for (int l = 0; l < chain.depth(); ++l) {
    IntMat f = to_rows(structure_mask(chain.factors[l]));
    acc = l == 0 ? f : mul(f, acc);
    if (l < chain.depth() - 1) acc = mul(to_rows(permutation_mask(chain.interleaves[l])), acc);
  }
  if (chain.trailing) acc = mul(to_rows(permutation_mask(*chain.trailing)), acc);
  return acc;
}

bool equal(const StructureMask& m, const IntMat& rows) {
  if (m.rows != static_cast<int>(rows.size()) || m.cols != static_cast<int>(rows[0].size()))
    return false;
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      if (m.at(i, j) != rows[i][j]) return false;
  return true;
}

FactorChain two_factor_chain(int channels, int k1, int k2, const PermutationSpec& interleave) {
  FactorChain chain;
  chain.factors.push_back(GroupConvSpec::square(channels, k1, 1));
  chain.factors.push_back(GroupConvSpec::square(channels, k2, 1));
  chain.interleaves.push_back(interleave);
  return chain;
}

}  // namespace

TEST_CASE("structure_mask block-diagonal layout") {
  StructureMask m = structure_mask(GroupConvSpec::square(4, 2, 1));
  const std::uint64_t expect[4][4] = {{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 1}, {0, 0, 1, 1}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(m.at(i, j) == expect[i][j]);

  StructureMask full = structure_mask(GroupConvSpec::square(4, 4, 1));
  CHECK(is_dense(full));
  CHECK(is_exactly_one_path(full));

  // C=6, G=2, K=3: entries follow i/3 == j/3.
  StructureMask m63 = structure_mask(GroupConvSpec::square(6, 3, 1));
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) CHECK(m63.at(i, j) == (i / 3 == j / 3 ? 1u : 0u));
}

TEST_CASE("structure_mask strict row and column sums") {
  for (int c : {4, 6, 12, 24})
    for (int k : {1, 2, 3, 4, 6}) {
      if (c % k) continue;
      StructureMask m = structure_mask(GroupConvSpec::square(c, k, 1));
      for (int i = 0; i < c; ++i) {
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < c; ++j) {
          row += m.at(i, j);
          col += m.at(j, i);
        }
        CHECK(row == static_cast<std::uint64_t>(k));
        CHECK(col == static_cast<std::uint64_t>(k));
      }
    }
}

TEST_CASE("structure_mask spec validation") {
  // C=4, K=3, G=2 is a legitimate loose spec: last branch holds one channel
  StructureMask loose = structure_mask(GroupConvSpec::loose(4, 3, 1));
  CHECK(loose.at(3, 3) == 1);
  CHECK(loose.at(3, 2) == 0);
  std::uint64_t last_row = 0;
  for (int j = 0; j < 4; ++j) last_row += loose.at(3, j);
  CHECK(last_row == 1);

  GroupConvSpec bad;
  bad.channels_in = 4;
  bad.channels_out = 4;
  bad.branch_width_in = 3;
  bad.branch_width_out = 3;
  bad.branches = 1;  // 1*3 leaves a channel uncovered
  CHECK_THROWS_AS(structure_mask(bad), structural_error);
  bad.branches = 3;  // branch 3 would start past the channel count
  CHECK_THROWS_AS(structure_mask(bad), structural_error);
}

TEST_CASE("permutation_mask basics") {
  StructureMask id3 = permutation_mask(PermutationSpec::identity(3));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(id3.at(i, j) == (i == j ? 1u : 0u));

  PermutationSpec swap;
  swap.map = {1, 0};
  StructureMask ms = permutation_mask(swap);
  CHECK(ms.at(0, 0) == 0);
  CHECK(ms.at(0, 1) == 1);
  CHECK(ms.at(1, 0) == 1);
  CHECK(ms.at(1, 1) == 0);

  PermutationSpec bad;
  bad.map = {0, 0, 2};
  CHECK_THROWS_AS(permutation_mask(bad), structural_error);
}

TEST_CASE("permutation orthogonality: mask * mask^T = identity") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + int(rng() % 14);
    PermutationSpec p = PermutationSpec::identity(n);
    std::shuffle(p.map.begin(), p.map.end(), rng);
    IntMat m = to_rows(permutation_mask(p));
    IntMat mt(n, std::vector<std::uint64_t>(n, 0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) mt[j][i] = m[i][j];
    IntMat prod = mul(m, mt);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(prod[i][j] == (i == j ? 1u : 0u));
  }
}

TEST_CASE("compose_structure against brute-force product") {
  PermutationSpec shuffle;
  shuffle.map = {0, 2, 1, 3};  // perfect shuffle on 4 channels

  SUBCASE("single factor equals its own mask") {
    FactorChain chain;
    chain.factors.push_back(GroupConvSpec::square(6, 3, 1));
    CHECK(equal(compose_structure(chain), to_rows(structure_mask(chain.factors[0]))));
  }

  SUBCASE("perfect shuffle gives all-ones") {
    FactorChain chain = two_factor_chain(4, 2, 2, shuffle);
    StructureMask m = compose_structure(chain);
    CHECK(equal(m, brute_force_chain(chain)));
    CHECK(is_dense(m));
    CHECK(is_exactly_one_path(m));
  }

  SUBCASE("identity interleave concentrates paths") {
    FactorChain chain = two_factor_chain(4, 2, 2, PermutationSpec::identity(4));
    StructureMask m = compose_structure(chain);
    CHECK(equal(m, brute_force_chain(chain)));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(m.at(i, j) == (i / 2 == j / 2 ? 2u : 0u));
    CHECK_FALSE(is_dense(m));
    CHECK_FALSE(is_exactly_one_path(m));
  }

  SUBCASE("index range is validated") {
    FactorChain chain = two_factor_chain(4, 2, 2, shuffle);
    CHECK_THROWS_AS(compose_structure(chain, 0, 1), usage_error);
    CHECK_THROWS_AS(compose_structure(chain, 2, 3), usage_error);
    CHECK_THROWS_AS(compose_structure(chain, 2, 1), usage_error);
  }
}

TEST_CASE("compose_structure is associative over split points") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::vector<int>> choices = {{2, 3, 2}, {3, 2, 2}, {2, 2, 3}, {4, 3}, {2, 2, 2, 2}};
    const auto& k = choices[trial % choices.size()];
    int c = 1;
    for (int v : k) c *= v;
    FactorChain chain = build_chain(c, 1, k);
    for (int mid = 1; mid < chain.depth(); ++mid) {
      StructureMask prefix = compose_structure(chain, 1, mid);
      StructureMask suffix = compose_structure(chain, mid + 1, chain.depth());
      IntMat whole = mul(to_rows(suffix), to_rows(prefix));
      CHECK(equal(compose_structure(chain), whole));
    }
  }
}

TEST_CASE("path-count conservation: row sums are the product of widths") {
  FactorChain chain = build_chain(24, 1, {2, 3, 4});
  StructureMask m = compose_structure(chain);
  for (int i = 0; i < m.rows; ++i) {
    std::uint64_t row = 0;
    for (int j = 0; j < m.cols; ++j) row += m.at(i, j);
    CHECK(row == 24u);  // prod(K) = C, one path per input channel
  }
}

TEST_CASE("C=6 canonical chain K=(2,3) is dense with one path") {
  FactorChain chain = build_chain(6, 1, {2, 3});
  StructureMask m = compose_structure(chain);
  CHECK(equal(m, brute_force_chain(chain)));
  CHECK(is_dense(m));
  CHECK(is_exactly_one_path(m));
}

TEST_CASE("verify_complementary verdicts") {
  SUBCASE("canonical separated C=144 chain passes strict") {
    FactorChain chain = build_chain(144, 9, {1, 12, 12});
    ComplementarityReport rep = verify_complementary(chain);
    CHECK(rep.pass);
    CHECK(rep.min_paths == 1);
    CHECK(rep.max_paths == 1);
    CHECK(rep.covered_fraction == doctest::Approx(1.0));
  }

  SUBCASE("identity interleaves fail strict with covered_fraction 0.5") {
    FactorChain chain = two_factor_chain(4, 2, 2, PermutationSpec::identity(4));
    ComplementarityReport rep = verify_complementary(chain, ComplementarityMode::strict);
    CHECK_FALSE(rep.pass);
    CHECK(rep.covered_fraction == doctest::Approx(0.5));
    CHECK(rep.max_paths == 2);
    CHECK(rep.min_paths == 0);

    ComplementarityReport loose = verify_complementary(chain, ComplementarityMode::loose);
    CHECK(loose.pass);  // loose mode quantifies, never fails
    CHECK(loose.covered_fraction == doctest::Approx(0.5));
  }

  SUBCASE("single ordinary conv passes strict") {
    FactorChain chain;
    chain.factors.push_back(GroupConvSpec::square(4, 4, 1));
    CHECK(verify_complementary(chain).pass);
  }
}

TEST_CASE("trailing permutation changes neither density nor path counts") {
  FactorChain chain = build_chain(12, 1, {3, 4});
  ComplementarityReport before = verify_complementary(chain);
  PermutationSpec rotate;
  for (int i = 0; i < 12; ++i) rotate.map.push_back((i + 5) % 12);
  chain.trailing = rotate;
  ComplementarityReport after = verify_complementary(chain);
  CHECK(before.pass == after.pass);
  CHECK(before.min_paths == after.min_paths);
  CHECK(before.max_paths == after.max_paths);
}

TEST_CASE("chain document round-trip") {
  FactorChain chain = build_chain(24, 9, {1, 4, 6});
  std::string doc = chain_to_json(chain);
  FactorChain parsed = chain_from_json(doc);
  CHECK(chain == parsed);
  CHECK(chain_to_json(parsed) == doc);

  SUBCASE("trailing permutation survives the round trip") {
    PermutationSpec rotate;
    for (int i = 0; i < 24; ++i) rotate.map.push_back((i + 1) % 24);
    chain.trailing = rotate;
    FactorChain again = chain_from_json(chain_to_json(chain));
    CHECK(chain == again);
  }

  SUBCASE("loose chains carry explicit c_out") {
    FactorChain loose = build_loose_chain(10, 9, 4, 3).chain;
    FactorChain again = chain_from_json(chain_to_json(loose));
    CHECK(loose == again);
  }

  SUBCASE("malformed documents raise usage errors") {
    CHECK_THROWS_AS(chain_from_json("not json"), usage_error);
    CHECK_THROWS_AS(chain_from_json("{\"version\":1}"), usage_error);
  }
}

TEST_CASE("dimension mismatches are rejected") {
  FactorChain chain;
  chain.factors.push_back(GroupConvSpec::square(4, 2, 1));
  chain.factors.push_back(GroupConvSpec::square(6, 3, 1));
  chain.interleaves.push_back(PermutationSpec::identity(4));
  CHECK_THROWS_AS(chain.validate(), structural_error);
  CHECK_THROWS_AS(compose_structure(chain), structural_error);
}
