#pragma once

#include <string>

#include "igc/engine.hpp"
#include "igc/structure.hpp"
#include "igc/tensor.hpp"

namespace igc {

/// Kernel manifest: one JSON header line (chain document, dtype, per-factor
/// weight counts) followed by the raw little-endian weight bytes in factor
/// order, branches in order, rows row-major. Affine parameters, when
/// present, follow the convolution weights of their factor (scale then
/// shift).
struct KernelManifest {
  FactorChain chain;
  BlockWeights weights;
};

void write_kernel_manifest(const std::string& path, const KernelManifest& manifest,
                           bool as_float32 = false);
KernelManifest read_kernel_manifest(const std::string& path);

/// Dense kernels travel as single-factor manifests (g = 1).
KernelManifest dense_kernel_manifest(const DenseKernel& kernel);
DenseKernel dense_kernel_from_manifest(const KernelManifest& manifest);

void write_feature_map(const std::string& path, const FeatureMap& map, bool as_float32 = false);
FeatureMap read_feature_map(const std::string& path);

}  // namespace igc
