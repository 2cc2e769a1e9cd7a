#include "igc/planner.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "igc/interleave.hpp"

namespace igc {

std::uint64_t param_count(int channels, int spatial_taps, const std::vector<int>& branch_widths) {
  if (branch_widths.empty()) throw usage_error("param_count: empty branch width list");
  if (channels < 1 || spatial_taps < 1) throw usage_error("param_count: counts must be >= 1");
  std::uint64_t q = static_cast<std::uint64_t>(channels) * spatial_taps * branch_widths[0];
  for (std::size_t l = 1; l < branch_widths.size(); ++l) {
    if (branch_widths[l] < 1) throw usage_error("param_count: branch widths must be >= 1");
    q += static_cast<std::uint64_t>(channels) * branch_widths[l];
  }
  return q;
}

double param_lower_bound(int channels, int spatial_taps, int depth) {
  return double(channels) * depth *
         std::pow(double(spatial_taps) * channels, 1.0 / double(depth));
}

BalanceResult balance_check(int spatial_taps, const std::vector<int>& branch_widths,
                            Regime regime) {
  if (branch_widths.empty()) throw usage_error("balance_check: empty branch width list");
  std::vector<long long> terms;
  if (regime == Regime::coupled) {
    terms.push_back(static_cast<long long>(spatial_taps) * branch_widths[0]);
    for (std::size_t l = 1; l < branch_widths.size(); ++l) terms.push_back(branch_widths[l]);
  } else {
    for (std::size_t l = 1; l < branch_widths.size(); ++l) terms.push_back(branch_widths[l]);
    if (terms.empty()) terms.push_back(1);  // lone depthwise factor
  }
  auto [lo, hi] = std::minmax_element(terms.begin(), terms.end());
  BalanceResult r;
  r.score = double(*hi) / double(*lo);
  r.balanced = *hi == *lo;
  return r;
}

OptimalDepth optimal_L(int channels, int spatial_taps) {
  const double sc = double(spatial_taps) * channels;
  if (sc <= 1.0) throw usage_error("optimal_L: S*C must exceed 1");
  OptimalDepth r;
  r.stationary = std::log(sc);
  int lo = std::max(1, static_cast<int>(std::floor(r.stationary)));
  int hi = std::max(1, static_cast<int>(std::ceil(r.stationary)));
  r.best_L = param_lower_bound(channels, spatial_taps, lo) <=
                     param_lower_bound(channels, spatial_taps, hi)
                 ? lo
                 : hi;
  return r;
}

namespace {

int out_positions(int extent, int stride) { return (extent + stride - 1) / stride; }

}  // namespace

std::uint64_t flop_count(const FactorChain& chain, int height, int width, int stride) {
  if (height < 1 || width < 1) throw usage_error("flop_count: spatial dims must be >= 1");
  if (stride < 1) throw usage_error("flop_count: stride must be >= 1");
  chain.validate();
  int spatial_index = 0;
  for (int l = 0; l < chain.depth(); ++l)
    if (chain.factors[l].spatial_taps > 1) spatial_index = l;
  std::uint64_t total = 0;
  long long positions = static_cast<long long>(height) * width;
  for (int l = 0; l < chain.depth(); ++l) {
    if (l == spatial_index)
      positions = static_cast<long long>(out_positions(height, stride)) *
                  out_positions(width, stride);
    total += chain.factors[l].nonzeros() * static_cast<std::uint64_t>(positions);
  }
  return total;
}

namespace {

void ordered_factorizations(int product, int slots, std::vector<int>& prefix,
                            const std::function<void(const std::vector<int>&)>& emit) {
  if (slots == 1) {
    prefix.push_back(product);
    emit(prefix);
    prefix.pop_back();
    return;
  }
  for (int d = 1; d <= product; ++d) {
    if (product % d) continue;
    prefix.push_back(d);
    ordered_factorizations(product / d, slots - 1, prefix, emit);
    prefix.pop_back();
  }
}

std::string density_verdict_of(const ComplementarityReport& rep) {
  if (rep.max_paths == 1 && rep.min_paths == 1) return "one-path";
  if (rep.min_paths >= 1) return "dense";
  return "partial";
}

DesignPoint make_point(int channels, int spatial_taps, const std::vector<int>& k, Regime regime,
                       bool verify_density) {
  DesignPoint p;
  p.channels = channels;
  p.spatial_taps = spatial_taps;
  p.depth = static_cast<int>(k.size());
  p.branch_widths = k;
  p.params = param_count(channels, spatial_taps, k);
  p.flops_per_position = p.params;
  p.width = channels;
  p.balance_score = balance_check(spatial_taps, k, regime).score;
  if (verify_density) {
    FactorChain chain = build_chain(channels, spatial_taps, k);
    p.density_verdict = density_verdict_of(verify_complementary(chain));
  } else {
    p.density_verdict = "unverified";
  }
  return p;
}

}  // namespace

std::vector<DesignPoint> enumerate_factorizations(int channels, int depth, Regime regime,
                                                  int spatial_taps, bool verify_density) {
  if (channels < 1 || depth < 1) throw usage_error("enumerate_factorizations: C, L must be >= 1");
  std::vector<DesignPoint> points;
  std::vector<int> prefix;
  auto emit = [&](const std::vector<int>& k) {
    points.push_back(make_point(channels, spatial_taps, k, regime, verify_density));
  };
  if (regime == Regime::coupled) {
    ordered_factorizations(channels, depth, prefix, emit);
  } else {
    if (depth == 1) {
      if (channels == 1) emit({1});
    } else {
      prefix.push_back(1);
      ordered_factorizations(channels, depth - 1, prefix, emit);
    }
  }
  std::sort(points.begin(), points.end(), [](const DesignPoint& a, const DesignPoint& b) {
    if (a.params != b.params) return a.params < b.params;
    if (a.balance_score != b.balance_score) return a.balance_score < b.balance_score;
    return a.branch_widths < b.branch_widths;
  });
  return points;
}

int igcv2_star_depth(int channels, int k) {
  if (channels < 2 || k < 2) throw usage_error("igcv2_star_depth: C and K must be >= 2");
  int pointwise = 0;
  long long reach = 1;
  while (reach < channels) {
    reach *= k;
    ++pointwise;
  }
  return pointwise + 1;
}

DesignPoint plan_igcv2_star(int channels, int k) {
  const int depth = igcv2_star_depth(channels, k);
  LooseChain built = build_loose_chain(channels, 9, k, depth);
  DesignPoint p;
  p.channels = channels;
  p.spatial_taps = 9;
  p.depth = depth;
  p.branch_widths.assign(depth, k);
  p.branch_widths[0] = 1;
  p.params = built.chain.nonzeros();
  p.flops_per_position = p.params;
  p.width = channels;
  p.balance_score = balance_check(9, p.branch_widths, Regime::coupled).score;
  p.density_verdict = density_verdict_of(built.report);
  return p;
}

// --- whole-network accounting ---------------------------------------------

int NetworkRecipe::base_width() const {
  if (stages.empty()) throw usage_error("recipe has no stages");
  return stages.front().width;
}

void NetworkRecipe::validate() const {
  if (input_channels < 1) throw usage_error("recipe: input_channels must be >= 1");
  for (const auto& s : stages) {
    if (s.width < 1 || s.blocks < 1) throw usage_error("recipe: stage width and blocks >= 1");
    if (s.stride < 1) throw usage_error("recipe: stage stride must be >= 1");
    if (s.kind == BlockKind::igcv2 && s.depth_L < 2)
      throw usage_error("recipe: igcv2 stages need depth_L >= 2");
    if (s.kind == BlockKind::igcv3 && (s.t < 1.0 || s.g1 < 1 || s.g2 < 1))
      throw usage_error("recipe: igcv3 stages need t >= 1 and positive branch counts");
  }
  if (head && head->classes < 1) throw usage_error("recipe: head classes must be >= 1");
}

namespace {

// Nonzeros of a loose square pointwise group conv on C channels, branch width k.
std::uint64_t loose_pointwise_params(int c, int k) {
  return GroupConvSpec::loose(c, k, 1).nonzeros();
}

struct BlockCost {
  std::uint64_t conv = 0;    // convolution weights
  std::uint64_t affine = 0;  // scale/shift pairs of the nonlinear units
};

BlockCost block_cost(const StageSpec& s, int c_in, int base_width) {
  const int c = s.width;
  BlockCost cost;
  switch (s.kind) {
    case BlockKind::xception:
      cost.conv = 9ull * c_in + static_cast<std::uint64_t>(c_in) * c;
      cost.affine = 2ull * c;
      break;
    case BlockKind::igcv1: {
      int k = s.k > 0 ? s.k : 2;  // primary branch width
      cost.conv = 9ull * k * c_in;
      // secondary: two branches covering the channels
      int half_in = (c_in + 1) / 2, half_out = (c + 1) / 2;
      cost.conv += static_cast<std::uint64_t>(half_in) * half_out +
                   static_cast<std::uint64_t>(c_in - half_in) * (c - half_out);
      cost.affine = 2ull * c;
      break;
    }
    case BlockKind::igcv2: {
      int k = s.k > 0 ? s.k : 8;
      cost.conv = 9ull * c_in;
      for (int l = 1; l < s.depth_L; ++l)
        cost.conv += loose_pointwise_params(l + 1 == s.depth_L ? c : c_in, k);
      cost.affine = 2ull * c;
      break;
    }
    case BlockKind::igcv2_star: {
      int k = s.k > 0 ? s.k : 8;
      // L* is pinned by the first-stage width of the recipe.
      int depth = igcv2_star_depth(base_width, k);
      cost.conv = 9ull * c_in;
      for (int l = 1; l < depth; ++l)
        cost.conv += loose_pointwise_params(l + 1 == depth ? c : c_in, k);
      cost.affine = 2ull * c;
      break;
    }
    case BlockKind::igcv3: {
      long long expanded = std::llround(s.t * c_in);
      cost.conv = static_cast<std::uint64_t>(c_in) * expanded / s.g1;   // group expand
      cost.conv += 9ull * expanded;                                     // depthwise
      cost.conv += static_cast<std::uint64_t>(expanded) * c / s.g2;     // group project
      cost.affine = 2ull * (2 * expanded + c);
      break;
    }
  }
  return cost;
}

const char* kind_name(BlockKind k) {
  switch (k) {
    case BlockKind::xception: return "xception";
    case BlockKind::igcv1: return "igcv1";
    case BlockKind::igcv2: return "igcv2";
    case BlockKind::igcv2_star: return "igcv2_star";
    case BlockKind::igcv3: return "igcv3";
  }
  return "?";
}

}  // namespace

NetworkBudget network_param_count(const NetworkRecipe& recipe, int height, int width) {
  recipe.validate();
  if (height < 1 || width < 1) throw usage_error("network_param_count: input size must be >= 1");
  NetworkBudget budget;
  const int base = recipe.base_width();
  long long h = height, w = width;
  int channels = recipe.input_channels;

  auto add = [&](const std::string& name, std::uint64_t params, std::uint64_t flops) {
    budget.items.push_back({name, params, flops});
    budget.total_params += params;
    budget.total_flops += flops;
  };

  if (recipe.stem) {
    h = out_positions(static_cast<int>(h), recipe.stem->stride);
    w = out_positions(static_cast<int>(w), recipe.stem->stride);
    std::uint64_t conv = static_cast<std::uint64_t>(recipe.stem->spatial_taps) * channels *
                         recipe.stem->width;
    std::uint64_t affine = recipe.count_affine ? 2ull * recipe.stem->width : 0;
    add("stem", conv + affine, conv * static_cast<std::uint64_t>(h * w));
    channels = recipe.stem->width;
  }

  for (std::size_t i = 0; i < recipe.stages.size(); ++i) {
    const StageSpec& s = recipe.stages[i];
    h = out_positions(static_cast<int>(h), s.stride);
    w = out_positions(static_cast<int>(w), s.stride);
    // channels_in affects only the first block; the rest run width-to-width.
    int first_in = s.channels_in > 0 ? s.channels_in : s.width;
    BlockCost first = block_cost(s, first_in, base);
    BlockCost rest = block_cost(s, s.width, base);
    std::uint64_t conv = first.conv + rest.conv * (s.blocks - 1);
    std::uint64_t affine =
        recipe.count_affine ? first.affine + rest.affine * (s.blocks - 1) : 0;
    add("stage" + std::to_string(i + 1) + "(" + kind_name(s.kind) + ")", conv + affine,
        conv * static_cast<std::uint64_t>(h * w));
    channels = s.width;
  }

  if (recipe.head) {
    std::uint64_t fc = static_cast<std::uint64_t>(channels) * recipe.head->classes +
                       recipe.head->classes;
    add("head", fc, fc);
  }
  return budget;
}

}  // namespace igc
