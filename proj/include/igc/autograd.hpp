#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "igc/engine.hpp"
#include "igc/structure.hpp"
#include "igc/tensor.hpp"

namespace igc {

/// Learnable parameters as flat arrays plus SGD state.
struct ParamStore {
  struct Entry {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> velocity;
    bool decay = true;  // weight decay applies (off for affine/BN parameters)
  };
  std::vector<Entry> entries;

  int add(std::string name, std::vector<double> init, bool decay = true);
  void zero_grad();
  Entry& operator[](int id) { return entries[id]; }
  const Entry& operator[](int id) const { return entries[id]; }
};

/// Running statistics of a training-time batch normalization unit.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.9;

  explicit BatchNormState(int channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

/// Reverse-mode tape over the engine primitives. Records every application
/// with the saved values its vector-Jacobian product needs; replaying the
/// recorded program reproduces the outputs bit-exactly.
class Tape {
 public:
  explicit Tape(ParamStore& store) : store_(&store) {}

  int input(FeatureMap x);
  int group_conv(int x, int weight_param, const GroupConvSpec& spec, int stride = 1);
  int grouped_pointwise(int x, int weight_param, const GroupConvSpec& spec);
  int depthwise_spatial(int x, int weight_param, int channels, int taps, int stride = 1);
  int permute_channels(int x, PermutationSpec perm);
  int relu(int x);
  int channel_affine(int x, int scale_param, int shift_param);
  int batch_norm(int x, int gamma_param, int beta_param, BatchNormState* state, bool training);
  int global_average_pool(int x);
  int fully_connected(int x, int weight_param, int bias_param, int out_features);
  int softmax_cross_entropy(int logits, std::vector<int> labels);
  int add(int a, int b);
  /// Scalar inner product with a constant; handy readout for gradient tests.
  int dot(int x, FeatureMap constant);

  const FeatureMap& value(int var) const { return nodes_[var].out; }
  double scalar(int var) const { return nodes_[var].out.v[0]; }
  /// Softmax probabilities recorded by softmax_cross_entropy.
  const FeatureMap& probabilities(int loss_var) const { return nodes_[loss_var].saved; }

  /// Accumulates parameter and input cotangents of a scalar variable.
  void backward(int var);
  /// Cotangent of a non-parameter variable after backward().
  const FeatureMap& gradient(int var) const { return grads_[var]; }

  /// Re-executes the recorded program in place; outputs are bit-identical.
  void replay();

  std::size_t size() const { return nodes_.size(); }

 private:
  enum class Op {
    input,
    group_conv,
    permute,
    relu,
    affine,
    batch_norm,
    gap,
    fc,
    softmax_ce,
    add,
    dot
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    int p0 = -1, p1 = -1;
    GroupConvSpec spec;
    PermutationSpec perm;
    int stride = 1;
    bool training = false;
    BatchNormState* bn = nullptr;
    std::vector<int> labels;
    FeatureMap out;
    FeatureMap saved;               // xhat (batch_norm), probabilities (softmax_ce)
    std::vector<double> saved_vec;  // per-channel inv-std (batch_norm)
  };

  int push(Node node);
  void forward_node(Node& node);

  ParamStore* store_;
  std::vector<Node> nodes_;
  std::vector<FeatureMap> grads_;
};

struct TrainConfig {
  double lr = 0.1;
  double decay_factor = 0.1;
  std::vector<int> decay_epochs{200, 300, 350};
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch = 64;
  int epochs = 400;
  std::uint64_t seed = 1;

  void validate() const;
  double lr_at(int epoch) const;
};

/// Nesterov-momentum SGD update; weight decay is added to the gradient for
/// entries with decay enabled. Throws divergence_error on non-finite
/// gradients.
void sgd_step(ParamStore& store, const TrainConfig& config, int epoch);

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::string worst_param;
};

/// Central-difference check of every parameter of a scalar loss built by
/// `record` on a fresh tape; the analytic gradients come from one backward
/// pass.
FiniteDiffReport finite_diff_check(ParamStore& store, const std::function<int(Tape&)>& record,
                                   double tolerance, double step = 1e-5);

}  // namespace igc
