#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "igc/autograd.hpp"
#include "igc/data.hpp"
#include "igc/planner.hpp"

namespace igc {

/// One convolution unit of the runnable network: group conv, training-time
/// batch norm, optional ReLU, optional channel permutation after.
struct ConvUnit {
  GroupConvSpec spec;
  int stride = 1;
  int weight_param = -1;
  int gamma_param = -1, beta_param = -1;
  BatchNormState bn;
  bool relu = false;
  std::optional<PermutationSpec> perm_after;
};

struct NetBlock {
  std::vector<ConvUnit> units;
  bool skip = false;  // identity skip from block input to block output
};

/// A trainable network instantiated from a recipe: stem + blocks + global
/// average pool + fully connected head.
struct Network {
  NetworkRecipe recipe;
  ParamStore store;
  std::optional<ConvUnit> stem;
  std::vector<NetBlock> blocks;
  int fc_weight = -1, fc_bias = -1;
  int classes = 0;
  int input_channels = 3;

  /// Records the forward pass on `tape`; returns the logits variable.
  int forward(Tape& tape, FeatureMap batch, bool training);
};

/// Builds the network with fan-in-scaled Gaussian initialization
/// (variance 2/fan_in for the pre-ReLU convolutions, 1/fan_in for the head).
Network build_network(const NetworkRecipe& recipe, int input_channels, std::uint64_t seed);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double eval_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  bool diverged = false;
  std::string message;
};

/// SGD training loop; deterministic given the config seed. Emits one JSON
/// line per epoch to `metrics` when given. On divergence the last good
/// parameters are checkpointed (if a directory is set) and the result is
/// flagged.
TrainResult train(Network& net, const Dataset& train_set, const Dataset* eval_set,
                  const TrainConfig& config, std::ostream* metrics = nullptr,
                  const std::string& checkpoint_dir = "");

/// Kernel-manifest files per block plus an index document.
void write_checkpoint(const std::string& dir, const Network& net);

struct DatasetSpec {
  std::string kind = "synth";  // synth | cifar10
  int classes = 2;
  int count = 2000;
  int channels = 3, height = 8, width = 8;
  std::uint64_t seed = 7;
  std::vector<int> cifar_labels;  // empty: all ten classes
  int per_class = 0;
  bool augment = false;
};

struct TrainJob {
  TrainConfig config;
  DatasetSpec dataset;
};

TrainJob train_job_from_json(const std::string& text);
Dataset make_dataset(const DatasetSpec& spec, const std::string& data_dir);

}  // namespace igc
