#pragma once

#include <vector>

#include "igc/structure.hpp"

namespace igc {

/// Mixed-radix view of C = prod(K) channels: channel index <-> digit tuple
/// (d_1..d_L) with d_l in [0, K_l). A layout is an ordering of the digits
/// from fastest (stride 1) to slowest; layout l puts digit l first and the
/// remaining digits in ascending order, so channels sharing all digits but
/// d_l sit in contiguous runs of K_l.
struct MixedRadixLayout {
  std::vector<int> radices;
  int fastest = 1;  // 1-based digit index

  int channels() const;
  /// Linear index of a digit tuple under this layout.
  int encode(const std::vector<int>& digits) const;
  /// Digit tuple of a linear index under this layout.
  std::vector<int> decode(int index) const;
};

/// Permutation taking the "digit l fastest" layout to the "digit l+1
/// fastest" layout. After applying it, each contiguous branch of width
/// K_{l+1} holds channels that differ only in digit l+1.
PermutationSpec build_interleave(const std::vector<int>& radices, int l);

enum class ChainMode { strict, loose };

/// Canonical chain for branch widths K over C channels: spatial taps on
/// factor 1, stride-swap interleaves, identity trailing permutation.
/// Strict mode requires prod(K) == C and asserts the exactly-one-path
/// property of the result.
FactorChain build_chain(int channels, int spatial_taps, const std::vector<int>& branch_widths,
                        ChainMode mode = ChainMode::strict);

struct LooseChain {
  FactorChain chain;
  ComplementarityReport report;
};

/// Depthwise spatial factor plus (depth-1) pointwise factors of branch
/// width k with ceil(C/k) branches. Interleaves are the canonical ones of
/// the padded k^(depth-1)-channel space compacted to the live channels.
LooseChain build_loose_chain(int channels, int spatial_taps, int k, int depth);

/// Round-robin redistribution for branch-count parameterized group convs:
/// channel b*(C/branches)+r of branch b moves to r*branches+b, so every
/// downstream contiguous branch draws from all upstream branches.
PermutationSpec branch_shuffle(int channels, int branches);

}  // namespace igc
