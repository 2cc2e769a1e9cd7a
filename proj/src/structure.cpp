#include "igc/structure.hpp"

#include <algorithm>
#include <numeric>

namespace igc {

std::uint64_t GroupConvSpec::nonzeros() const {
  std::uint64_t total = 0;
  for (int g = 0; g < branches; ++g)
    total += static_cast<std::uint64_t>(out_count(g)) * in_count(g) * spatial_taps;
  return total;
}

void GroupConvSpec::validate() const {
  if (channels_in < 1 || channels_out < 1 || branch_width_in < 1 || branch_width_out < 1 ||
      branches < 1)
    throw structural_error("group conv spec: all counts must be >= 1");
  if (spatial_taps < 1) throw structural_error("group conv spec: spatial_taps must be >= 1");
  auto covers = [](int g, int k, int c) { return g * k >= c && (g - 1) * k < c; };
  if (!covers(branches, branch_width_in, channels_in) ||
      !covers(branches, branch_width_out, channels_out))
    throw structural_error("group conv spec: branches*width does not cover the channels");
}

GroupConvSpec GroupConvSpec::grouped(int channels_in, int channels_out, int k_in, int k_out,
                                     int spatial_taps) {
  if (k_in < 1 || channels_in % k_in != 0)
    throw structural_error("grouped: k_in must divide channels_in");
  GroupConvSpec s;
  s.channels_in = channels_in;
  s.channels_out = channels_out;
  s.branch_width_in = k_in;
  s.branch_width_out = k_out;
  s.spatial_taps = spatial_taps;
  s.branches = channels_in / k_in;
  if (s.branches * k_out != channels_out)
    throw structural_error("grouped: branches*k_out must equal channels_out");
  s.validate();
  return s;
}

GroupConvSpec GroupConvSpec::square(int channels, int k, int spatial_taps) {
  return grouped(channels, channels, k, k, spatial_taps);
}

GroupConvSpec GroupConvSpec::loose(int channels, int k, int spatial_taps) {
  if (channels < 1 || k < 1) throw structural_error("loose: channels and k must be >= 1");
  GroupConvSpec s;
  s.channels_in = channels;
  s.channels_out = channels;
  s.branch_width_in = k;
  s.branch_width_out = k;
  s.spatial_taps = spatial_taps;
  s.branches = (channels + k - 1) / k;
  s.validate();
  return s;
}

void PermutationSpec::validate() const {
  const int n = size();
  std::vector<char> seen(n, 0);
  for (int j = 0; j < n; ++j) {
    int d = map[j];
    if (d < 0 || d >= n || seen[d]) throw structural_error("permutation map is not a bijection");
    seen[d] = 1;
  }
}

PermutationSpec PermutationSpec::inverse() const {
  PermutationSpec inv;
  inv.map.resize(map.size());
  for (int j = 0; j < size(); ++j) inv.map[map[j]] = j;
  return inv;
}

bool PermutationSpec::is_identity() const {
  for (int j = 0; j < size(); ++j)
    if (map[j] != j) return false;
  return true;
}

PermutationSpec PermutationSpec::identity(int n) {
  PermutationSpec p;
  p.map.resize(n);
  std::iota(p.map.begin(), p.map.end(), 0);
  return p;
}

int FactorChain::spatial_taps() const {
  int taps = 1;
  for (const auto& f : factors)
    if (f.spatial_taps > 1) taps = f.spatial_taps;
  return taps;
}

std::uint64_t FactorChain::nonzeros() const {
  std::uint64_t total = 0;
  for (const auto& f : factors) total += f.nonzeros();
  return total;
}

void FactorChain::validate() const {
  if (factors.empty()) throw structural_error("chain has no factors");
  if (static_cast<int>(interleaves.size()) != depth() - 1)
    throw structural_error("chain must carry exactly L-1 interleaves");
  int spatial = 0;
  for (const auto& f : factors) {
    f.validate();
    if (f.spatial_taps > 1) ++spatial;
  }
  if (spatial > 1) throw structural_error("chain has more than one spatial factor");
  for (int l = 0; l + 1 < depth(); ++l) {
    interleaves[l].validate();
    if (interleaves[l].size() != factors[l].channels_out)
      throw structural_error("interleave length does not match factor output channels");
    if (factors[l + 1].channels_in != factors[l].channels_out)
      throw structural_error("factor channel chaining mismatch");
  }
  if (trailing) {
    trailing->validate();
    if (trailing->size() != factors.back().channels_out)
      throw structural_error("trailing permutation length mismatch");
  }
}

bool FactorChain::operator==(const FactorChain& o) const {
  auto spec_eq = [](const GroupConvSpec& a, const GroupConvSpec& b) {
    return a.channels_in == b.channels_in && a.channels_out == b.channels_out &&
           a.branch_width_in == b.branch_width_in && a.branch_width_out == b.branch_width_out &&
           a.spatial_taps == b.spatial_taps && a.branches == b.branches;
  };
  if (factors.size() != o.factors.size() || interleaves.size() != o.interleaves.size())
    return false;
  for (std::size_t i = 0; i < factors.size(); ++i)
    if (!spec_eq(factors[i], o.factors[i])) return false;
  for (std::size_t i = 0; i < interleaves.size(); ++i)
    if (interleaves[i].map != o.interleaves[i].map) return false;
  const PermutationSpec ta = trailing ? *trailing : PermutationSpec::identity(channels_out());
  const PermutationSpec tb = o.trailing ? *o.trailing : PermutationSpec::identity(o.channels_out());
  return ta.map == tb.map;
}

StructureMask structure_mask(const GroupConvSpec& spec) {
  spec.validate();
  StructureMask m(spec.channels_out, spec.channels_in);
  for (int g = 0; g < spec.branches; ++g)
    for (int i = spec.out_begin(g); i < spec.out_begin(g) + spec.out_count(g); ++i)
      for (int j = spec.in_begin(g); j < spec.in_begin(g) + spec.in_count(g); ++j) m.at(i, j) = 1;
  return m;
}

StructureMask permutation_mask(const PermutationSpec& perm) {
  perm.validate();
  StructureMask m(perm.size(), perm.size());
  for (int j = 0; j < perm.size(); ++j) m.at(perm.map[j], j) = 1;
  return m;
}

namespace {

// out = a * b, exact integer arithmetic.
StructureMask mask_product(const StructureMask& a, const StructureMask& b) {
  if (a.cols != b.rows) throw structural_error("mask product dimension mismatch");
  StructureMask out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      std::uint64_t aik = a.at(i, k);
      if (!aik) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

// Rows of `m` permuted by `perm` without forming the permutation matrix.
StructureMask permute_rows(const PermutationSpec& perm, const StructureMask& m) {
  StructureMask out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(perm.map[i], j) = m.at(i, j);
  return out;
}

}  // namespace

StructureMask compose_structure(const FactorChain& chain, int from, int to) {
  if (from < 1 || to > chain.depth() || from > to)
    throw usage_error("compose_structure: factor index range out of [1, L]");
  chain.validate();
  StructureMask acc;
  bool first = true;
  for (int l = from; l <= to; ++l) {
    StructureMask f = structure_mask(chain.factors[l - 1]);
    acc = first ? std::move(f) : mask_product(f, acc);
    first = false;
    if (l <= chain.depth() - 1)
      acc = permute_rows(chain.interleaves[l - 1], acc);
    else if (chain.trailing)
      acc = permute_rows(*chain.trailing, acc);
  }
  return acc;
}

StructureMask compose_structure(const FactorChain& chain) {
  return compose_structure(chain, 1, chain.depth());
}

bool is_dense(const StructureMask& mask) {
  return std::all_of(mask.counts.begin(), mask.counts.end(),
                     [](std::uint64_t c) { return c > 0; });
}

bool is_exactly_one_path(const StructureMask& mask) {
  return std::all_of(mask.counts.begin(), mask.counts.end(),
                     [](std::uint64_t c) { return c == 1; });
}

ComplementarityReport verify_complementary(const FactorChain& chain, ComplementarityMode mode) {
  StructureMask m = compose_structure(chain);
  ComplementarityReport rep;
  rep.mode = mode;
  rep.min_paths = ~std::uint64_t(0);
  std::size_t covered = 0;
  for (std::uint64_t c : m.counts) {
    rep.min_paths = std::min(rep.min_paths, c);
    rep.max_paths = std::max(rep.max_paths, c);
    if (c > 0) ++covered;
  }
  rep.covered_fraction = m.counts.empty() ? 0.0 : double(covered) / double(m.counts.size());
  rep.pass = mode == ComplementarityMode::strict ? is_exactly_one_path(m) : true;
  return rep;
}

}  // namespace igc
