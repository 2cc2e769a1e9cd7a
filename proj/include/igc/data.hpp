#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "igc/tensor.hpp"

namespace igc {

/// A labeled image set, channel-normalized at load time.
struct Dataset {
  FeatureMap images;        // N x C x H x W
  std::vector<int> labels;  // length N
  int classes = 0;
  std::vector<double> channel_mean;  // statistics used for normalization
  std::vector<double> channel_std;
  bool augment = false;  // trainers crop/mirror each image per epoch

  int size() const { return images.n; }
};

/// Reads CIFAR-10 binary batches (3073-byte records: label byte + 3072
/// channel-planar RGB bytes). `path` may be one .bin file or a directory
/// holding data_batch_*.bin. Pixels are normalized by the channel means and
/// standard deviations of the loaded set.
Dataset load_cifar10(const std::string& path);

/// Keep only the listed labels (relabeled 0..k-1), at most per_class
/// images each (0 = no cap).
Dataset subset(const Dataset& data, const std::vector<int>& keep_labels, int per_class = 0);

/// Standard CIFAR augmentation: zero-pad 4 pixels per side, random 32x32
/// crop (general: random HxW crop of the padded image), mirror half of the
/// images horizontally.
FeatureMap augment(const FeatureMap& image, std::mt19937_64& rng);

/// Gaussian blobs around class-dependent unit-norm mean patterns; linearly
/// separable by construction and class-balanced.
Dataset synth_dataset(int classes, int count, std::uint64_t seed, int channels = 3, int height = 8,
                      int width = 8);

}  // namespace igc
