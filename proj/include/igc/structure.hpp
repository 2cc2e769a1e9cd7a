#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igc/error.hpp"

namespace igc {

/// One block-diagonal group-convolution factor: `branches` independent
/// branches, each mapping `branch_width_in` input channels to
/// `branch_width_out` output channels with `spatial_taps` taps per weight.
/// In strict mode branches*width covers the channels exactly; in loose mode
/// the last branch holds the remainder.
struct GroupConvSpec {
  int channels_in = 0;
  int channels_out = 0;
  int branch_width_in = 0;
  int branch_width_out = 0;
  int spatial_taps = 1;
  int branches = 0;

  bool strict() const {
    return branches * branch_width_in == channels_in &&
           branches * branch_width_out == channels_out;
  }

  // Clamped per-branch channel ranges (loose mode shortens the last branch).
  int in_begin(int g) const { return g * branch_width_in; }
  int in_count(int g) const {
    int hi = (g + 1) * branch_width_in;
    return (hi > channels_in ? channels_in : hi) - in_begin(g);
  }
  int out_begin(int g) const { return g * branch_width_out; }
  int out_count(int g) const {
    int hi = (g + 1) * branch_width_out;
    return (hi > channels_out ? channels_out : hi) - out_begin(g);
  }

  /// Nonzero weight count: sum of per-branch block sizes times taps.
  std::uint64_t nonzeros() const;

  void validate() const;

  /// Strict grouped factor; branches derived from channels_in / k_in.
  static GroupConvSpec grouped(int channels_in, int channels_out, int k_in, int k_out,
                               int spatial_taps);
  /// Square strict factor on C channels with branch width k.
  static GroupConvSpec square(int channels, int k, int spatial_taps);
  /// Loose factor on C channels: ceil(C/k) branches, last one possibly short.
  static GroupConvSpec loose(int channels, int k, int spatial_taps);
};

/// Channel reordering: map[j] is the destination of source channel j.
struct PermutationSpec {
  std::vector<int> map;

  int size() const { return static_cast<int>(map.size()); }
  void validate() const;  // throws unless map is a bijection on [0, size)
  PermutationSpec inverse() const;
  bool is_identity() const;

  static PermutationSpec identity(int n);
};

/// Ordered product of group-convolution factors with interleaving
/// permutations: factor l is applied first-to-last, interleaves[l] right
/// after factor l, and an optional trailing permutation closes the chain.
struct FactorChain {
  std::vector<GroupConvSpec> factors;
  std::vector<PermutationSpec> interleaves;
  std::optional<PermutationSpec> trailing;

  int depth() const { return static_cast<int>(factors.size()); }
  int channels_in() const { return factors.empty() ? 0 : factors.front().channels_in; }
  int channels_out() const {
    if (trailing) return trailing->size();
    return factors.empty() ? 0 : factors.back().channels_out;
  }
  /// Spatial taps of the unique spatial factor (1 if all factors are pointwise).
  int spatial_taps() const;
  std::uint64_t nonzeros() const;

  void validate() const;

  bool operator==(const FactorChain&) const;
};

/// Integer path-count matrix between input channels (columns) and output
/// channels (rows); spatial taps collapsed.
struct StructureMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint64_t> counts;  // row-major

  StructureMask() = default;
  StructureMask(int r, int c) : rows(r), cols(c), counts(static_cast<std::size_t>(r) * c, 0) {}

  std::uint64_t& at(int i, int j) { return counts[static_cast<std::size_t>(i) * cols + j]; }
  std::uint64_t at(int i, int j) const { return counts[static_cast<std::size_t>(i) * cols + j]; }
};

enum class ComplementarityMode { strict, loose };

struct ComplementarityReport {
  ComplementarityMode mode = ComplementarityMode::strict;
  std::uint64_t min_paths = 0;
  std::uint64_t max_paths = 0;
  double covered_fraction = 0.0;  // share of (out, in) pairs with at least one path
  bool pass = false;              // strict: exactly one path everywhere; loose: always true
};

StructureMask structure_mask(const GroupConvSpec& spec);
StructureMask permutation_mask(const PermutationSpec& perm);

/// Exact integer product of the masks of factors `from..to` (1-based,
/// inclusive) in application order; each factor is bundled with the
/// permutation that follows it, so prefix*suffix equals the full product.
StructureMask compose_structure(const FactorChain& chain, int from, int to);
StructureMask compose_structure(const FactorChain& chain);

bool is_dense(const StructureMask& mask);
bool is_exactly_one_path(const StructureMask& mask);

ComplementarityReport verify_complementary(const FactorChain& chain,
                                           ComplementarityMode mode = ComplementarityMode::strict);

/// Chain document (JSON): {version, channels, factors:[{k_in,k_out,s,g}],
/// interleaves:[[...]]} plus optional trailing permutation and per-factor
/// c_out where it is not g*k_out.
std::string chain_to_json(const FactorChain& chain, bool pretty = false);
FactorChain chain_from_json(const std::string& text);

}  // namespace igc
