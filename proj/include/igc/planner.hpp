#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "igc/structure.hpp"

namespace igc {

enum class Regime { coupled, separated };

/// A candidate factorization of a C-channel layer into group convolutions
/// with branch widths K[1..L], spatial taps riding on factor 1.
struct DesignPoint {
  int channels = 0;
  int spatial_taps = 1;
  int depth = 0;
  std::vector<int> branch_widths;
  std::uint64_t params = 0;             // nonzero weights (Q)
  std::uint64_t flops_per_position = 0; // multiply-adds at one spatial position
  int width = 0;
  double balance_score = 1.0;           // >= 1; 1 means balanced
  std::string density_verdict;          // "one-path" | "dense" | "partial" | "unverified"
};

struct BalanceResult {
  bool balanced = false;
  double score = 1.0;
};

struct OptimalDepth {
  double stationary = 0.0;  // ln(S*C), the real-valued stationary point
  int best_L = 1;
};

/// Q = C*S*K_1 + C*sum_{l>=2} K_l. Permutations are free.
std::uint64_t param_count(int channels, int spatial_taps, const std::vector<int>& branch_widths);

/// C*L*(S*C)^(1/L), the Jensen lower bound on Q over factorizations with
/// prod(K) = C.
double param_lower_bound(int channels, int spatial_taps, int depth);

/// Coupled scoring rates {S*K_1, K_2, ..., K_L}; separated scoring rates
/// only the pointwise widths {K_2, ..., K_L} of a depthwise-led design.
BalanceResult balance_check(int spatial_taps, const std::vector<int>& branch_widths,
                            Regime regime = Regime::coupled);

OptimalDepth optimal_L(int channels, int spatial_taps);

/// Nonzero weights of every factor times its output positions, same
/// padding; the stride is applied at the spatial factor (factor 1 if the
/// chain is all-pointwise).
std::uint64_t flop_count(const FactorChain& chain, int height, int width, int stride);

/// All ordered integer tuples K with prod(K) = C (coupled) or K_1 = 1 and
/// prod(K_2..K_L) = C (separated), sorted by Q, then balance score, then
/// lexicographic K. verify_density composes the canonical chain per point.
std::vector<DesignPoint> enumerate_factorizations(int channels, int depth, Regime regime,
                                                  int spatial_taps, bool verify_density = true);

/// Depthwise + (L*-1) pointwise factors of branch width k, with
/// L* = ceil(log_k C) + 1; loose when k^(L*-1) != C.
DesignPoint plan_igcv2_star(int channels, int k);

// --- whole-network accounting -------------------------------------------

enum class BlockKind { xception, igcv1, igcv2, igcv2_star, igcv3 };

struct StageSpec {
  BlockKind kind = BlockKind::igcv2;
  int width = 0;         // output channels of every block in the stage
  int channels_in = 0;   // input channels of the first block (0: same as width)
  int blocks = 1;
  int k = 0;             // branch width (igcv1/igcv2/igcv2*); 0 picks the kind default
  int depth_L = 3;       // igcv2 factor count including the spatial factor
  int stride = 1;        // applied entering the stage
  double t = 6.0;        // igcv3 expansion factor
  int g1 = 2, g2 = 2;    // igcv3 branch counts
};

struct StemSpec {
  int width = 0;
  int spatial_taps = 9;
  int stride = 1;
};

struct HeadSpec {
  int classes = 0;  // global average pool + fully connected layer
};

struct NetworkRecipe {
  int input_channels = 3;
  std::optional<StemSpec> stem;
  std::vector<StageSpec> stages;
  std::optional<HeadSpec> head;
  bool count_affine = true;  // 2 params per output channel of each nonlinear unit

  int base_width() const;  // first stage width; pins L* for igcv2* stages
  void validate() const;
};

struct BudgetItem {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

struct NetworkBudget {
  std::uint64_t total_params = 0;
  std::uint64_t total_flops = 0;
  std::vector<BudgetItem> items;
};

NetworkBudget network_param_count(const NetworkRecipe& recipe, int height, int width);

/// ceil(log_k(c)) + 1 computed in exact integer arithmetic.
int igcv2_star_depth(int channels, int k);

// --- documents -----------------------------------------------------------

std::string recipe_to_json(const NetworkRecipe& recipe, bool pretty = false);
NetworkRecipe recipe_from_json(const std::string& text);

std::string design_points_to_json(const std::vector<DesignPoint>& points, bool pretty = false);
std::string design_points_to_table(const std::vector<DesignPoint>& points);
std::string budget_to_json(const NetworkBudget& budget, bool pretty = false);
std::string budget_to_table(const NetworkBudget& budget);

}  // namespace igc
