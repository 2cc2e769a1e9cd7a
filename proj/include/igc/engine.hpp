#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "igc/structure.hpp"
#include "igc/tensor.hpp"

namespace igc {

/// Per-channel affine transform (inference-time batch normalization).
struct AffineParams {
  std::vector<double> scale;
  std::vector<double> shift;
};

/// Weights of one group-convolution factor: branch blocks in branch order,
/// each block K_out x (K_in * S) row-major (output channel major, taps
/// fastest within a row).
struct FactorWeights {
  std::vector<double> w;
  std::optional<AffineParams> affine;
  bool relu = false;

  double block(const GroupConvSpec& spec, int g, int ko, int ki, int s) const {
    std::size_t off = 0;
    for (int gg = 0; gg < g; ++gg)
      off += static_cast<std::size_t>(spec.out_count(gg)) * spec.in_count(gg) * spec.spatial_taps;
    return w[off + (static_cast<std::size_t>(ko) * spec.in_count(g) + ki) * spec.spatial_taps + s];
  }
};

/// Weight set matching a FactorChain factor-for-factor.
struct BlockWeights {
  std::vector<FactorWeights> factors;
};

/// Fully materialized C_o x C_i x S kernel, row-major in (out, in, tap).
struct DenseKernel {
  int channels_out = 0;
  int channels_in = 0;
  int taps = 1;
  std::vector<double> w;

  DenseKernel() = default;
  DenseKernel(int co, int ci, int s)
      : channels_out(co), channels_in(ci), taps(s),
        w(static_cast<std::size_t>(co) * ci * s, 0.0) {}
  double& at(int co, int ci, int s) {
    return w[(static_cast<std::size_t>(co) * channels_in + ci) * taps + s];
  }
  double at(int co, int ci, int s) const {
    return w[(static_cast<std::size_t>(co) * channels_in + ci) * taps + s];
  }
};

enum class ForwardMode { linear, nonlinear_igcv2 };

FeatureMap grouped_pointwise(const FeatureMap& x, const GroupConvSpec& spec,
                             const FactorWeights& weights);
FeatureMap depthwise_spatial(const FeatureMap& x, const std::vector<double>& weights, int taps,
                             int stride);
FeatureMap group_spatial(const FeatureMap& x, const GroupConvSpec& spec,
                         const FactorWeights& weights, int stride);
FeatureMap permute_channels(const FeatureMap& x, const PermutationSpec& perm);
FeatureMap channel_affine(const FeatureMap& x, const AffineParams& affine);
FeatureMap relu(const FeatureMap& x);

/// Reference semantics for every oracle: naive direct convolution with same
/// padding and a fixed summation order (tap-major, input channel ascending).
FeatureMap dense_conv(const FeatureMap& x, const DenseKernel& kernel, int stride);

/// Multiplies out all factor and permutation matrices, spatial taps kept
/// per-tap. Linear composition only; affine scales are folded in as
/// diagonal matrices when fold_affine_scale is set.
DenseKernel compose_dense_kernel(const FactorChain& chain, const BlockWeights& weights,
                                 bool fold_affine_scale = false);

/// Runs the chain stage by stage. Linear mode applies only convolutions and
/// permutations and matches dense_conv(compose_dense_kernel(...)).
/// Nonlinear IGCV2 mode applies conv -> affine -> (relu) -> permutation per
/// stage with ReLU after the first and last factors.
FeatureMap forward_block(const FeatureMap& x, const FactorChain& chain,
                         const BlockWeights& weights, ForwardMode mode, int stride = 1);

struct Igcv3Spec {
  int channels_in = 0;
  int channels_out = 0;
  int expansion = 1;  // t
  int g1 = 1, g2 = 1; // branch counts of the two pointwise group convs
  int stride = 1;
  bool skip = true;   // identity skip when stride == 1 and widths match
};

struct Igcv3Weights {
  FactorWeights expand;     // group 1x1, C -> t*C
  FactorWeights depthwise;  // 3x3, t*C channels
  FactorWeights project;    // group 1x1, t*C -> C_out
};

FeatureMap forward_igcv3_block(const FeatureMap& x, const Igcv3Spec& spec,
                               const Igcv3Weights& weights);

struct BenchmarkResult {
  double factorized_ms = 0.0;
  double dense_ms = 0.0;
  double time_ratio = 0.0;
  std::uint64_t factorized_nonzeros = 0;
  std::uint64_t dense_nonzeros = 0;
  double theoretical_ratio = 0.0;  // factorized_nonzeros / dense_nonzeros
};

/// Median wall times over `repetitions` runs (plus one warmup) of the
/// factorized forward vs. the dense oracle, in single precision.
BenchmarkResult benchmark(const FactorChain& chain, const BlockWeights& weights, int batch,
                          int height, int width, int repetitions);

/// Per-chain weight sizes and deterministic random initialization.
std::size_t factor_weight_count(const GroupConvSpec& spec);
BlockWeights random_weights(const FactorChain& chain, std::uint64_t seed,
                            bool with_affine = false);

}  // namespace igc
