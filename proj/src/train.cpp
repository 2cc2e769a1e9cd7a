#include "igc/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "igc/interleave.hpp"
#include "igc/manifest.hpp"
#include "json.hpp"

namespace igc {

namespace {

std::vector<double> gaussian_init(std::size_t count, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, sigma);
  std::vector<double> v(count);
  for (double& x : v) x = dist(rng);
  return v;
}

struct Builder {
  Network& net;
  std::mt19937_64 rng;

  ConvUnit conv_unit(const GroupConvSpec& spec, int stride, bool with_relu,
                     const std::string& name) {
    ConvUnit u;
    u.spec = spec;
    u.stride = stride;
    u.relu = with_relu;
    const double fan_in = double(spec.branch_width_in) * spec.spatial_taps;
    u.weight_param = net.store.add(name + ".w",
                                   gaussian_init(factor_weight_count(spec),
                                                 std::sqrt(2.0 / fan_in), rng));
    u.gamma_param = net.store.add(name + ".gamma",
                                  std::vector<double>(spec.channels_out, 1.0), false);
    u.beta_param = net.store.add(name + ".beta",
                                 std::vector<double>(spec.channels_out, 0.0), false);
    u.bn = BatchNormState(spec.channels_out);
    return u;
  }
};

// Widens the last factor of a square chain so the block maps c_in -> c_out.
void widen_last_factor(FactorChain& chain, int c_out) {
  GroupConvSpec& last = chain.factors.back();
  if (c_out == last.channels_out) return;
  if (c_out % last.channels_out != 0)
    throw structural_error("stage transition: output width must be a multiple of the input");
  const int ratio = c_out / last.channels_out;
  last.branch_width_out *= ratio;
  last.channels_out = last.branches * last.branch_width_out;
}

NetBlock make_igcv2_block(Builder& b, int c_in, int c_out, int k, int depth, int stride,
                          const std::string& name) {
  FactorChain chain = build_loose_chain(c_in, 9, k, depth).chain;
  widen_last_factor(chain, c_out);
  NetBlock block;
  for (int l = 0; l < chain.depth(); ++l) {
    // ReLU after the first (spatial) and last factors only.
    const bool with_relu = l == 0 || l == chain.depth() - 1;
    ConvUnit u = b.conv_unit(chain.factors[l], l == 0 ? stride : 1, with_relu,
                             name + ".f" + std::to_string(l));
    if (l < chain.depth() - 1 && !chain.interleaves[l].is_identity())
      u.perm_after = chain.interleaves[l];
    block.units.push_back(std::move(u));
  }
  return block;
}

NetBlock make_xception_block(Builder& b, int c_in, int c_out, int stride,
                             const std::string& name) {
  NetBlock block;
  block.units.push_back(
      b.conv_unit(GroupConvSpec::square(c_in, 1, 9), stride, true, name + ".dw"));
  block.units.push_back(b.conv_unit(GroupConvSpec::grouped(c_in, c_out, c_in, c_out, 1), 1, true,
                                    name + ".pw"));
  return block;
}

NetBlock make_igcv1_block(Builder& b, int c_in, int c_out, int k, int stride,
                          const std::string& name) {
  if (k < 1 || c_in % k != 0)
    throw structural_error("igcv1 block: primary branch width must divide the channels");
  if (c_in % 2 != 0 || c_out % 2 != 0)
    throw structural_error("igcv1 block: secondary needs an even channel count");
  NetBlock block;
  ConvUnit primary =
      b.conv_unit(GroupConvSpec::square(c_in, k, 9), stride, true, name + ".primary");
  primary.perm_after = build_interleave({k, c_in / k}, 1);
  block.units.push_back(std::move(primary));
  block.units.push_back(b.conv_unit(
      GroupConvSpec::grouped(c_in, c_out, c_in / 2, c_out / 2, 1), 1, true, name + ".secondary"));
  return block;
}

NetBlock make_igcv3_block(Builder& b, int c_in, int c_out, double t, int g1, int g2, int stride,
                          const std::string& name) {
  const int expanded = static_cast<int>(std::llround(t * c_in));
  if (expanded % g1 || expanded % g2 || c_in % g1 || c_out % g2)
    throw structural_error("igcv3 block: branch counts must divide the widths");
  NetBlock block;
  ConvUnit expand = b.conv_unit(
      GroupConvSpec::grouped(c_in, expanded, c_in / g1, expanded / g1, 1), 1, true,
      name + ".expand");
  block.units.push_back(std::move(expand));
  ConvUnit dw = b.conv_unit(GroupConvSpec::square(expanded, 1, 9), stride, true, name + ".dw");
  dw.perm_after = branch_shuffle(expanded, g1);
  block.units.push_back(std::move(dw));
  // Linear bottleneck: no ReLU after the projection.
  block.units.push_back(b.conv_unit(
      GroupConvSpec::grouped(expanded, c_out, expanded / g2, c_out / g2, 1), 1, false,
      name + ".project"));
  block.skip = stride == 1 && c_in == c_out;
  return block;
}

}  // namespace

Network build_network(const NetworkRecipe& recipe, int input_channels, std::uint64_t seed) {
  recipe.validate();
  Network net;
  net.recipe = recipe;
  net.input_channels = input_channels;
  Builder b{net, std::mt19937_64(seed)};

  int channels = input_channels;
  if (recipe.stem) {
    net.stem = b.conv_unit(GroupConvSpec::grouped(channels, recipe.stem->width, channels,
                                                  recipe.stem->width, recipe.stem->spatial_taps),
                           recipe.stem->stride, true, "stem");
    channels = recipe.stem->width;
  }

  const int base = recipe.base_width();
  for (std::size_t s = 0; s < recipe.stages.size(); ++s) {
    const StageSpec& stage = recipe.stages[s];
    for (int i = 0; i < stage.blocks; ++i) {
      const int c_in = i == 0 && stage.channels_in > 0 ? stage.channels_in : channels;
      const int stride = i == 0 ? stage.stride : 1;
      const std::string name = "s" + std::to_string(s) + ".b" + std::to_string(i);
      switch (stage.kind) {
        case BlockKind::xception:
          net.blocks.push_back(make_xception_block(b, c_in, stage.width, stride, name));
          break;
        case BlockKind::igcv1:
          net.blocks.push_back(
              make_igcv1_block(b, c_in, stage.width, stage.k > 0 ? stage.k : 2, stride, name));
          break;
        case BlockKind::igcv2:
          net.blocks.push_back(make_igcv2_block(b, c_in, stage.width, stage.k > 0 ? stage.k : 8,
                                                stage.depth_L, stride, name));
          break;
        case BlockKind::igcv2_star:
          net.blocks.push_back(make_igcv2_block(b, c_in, stage.width, stage.k > 0 ? stage.k : 8,
                                                igcv2_star_depth(base, stage.k > 0 ? stage.k : 8),
                                                stride, name));
          break;
        case BlockKind::igcv3:
          net.blocks.push_back(make_igcv3_block(b, c_in, stage.width, stage.t, stage.g1, stage.g2,
                                                stride, name));
          break;
      }
      channels = stage.width;
    }
  }

  if (!recipe.head) throw usage_error("trainable networks need a classifier head");
  net.classes = recipe.head->classes;
  net.fc_weight = net.store.add(
      "fc.w", gaussian_init(static_cast<std::size_t>(channels) * net.classes,
                            std::sqrt(1.0 / channels), b.rng));
  net.fc_bias = net.store.add("fc.b", std::vector<double>(net.classes, 0.0), false);
  return net;
}

int Network::forward(Tape& tape, FeatureMap batch, bool training) {
  int var = tape.input(std::move(batch));
  auto run_unit = [&](ConvUnit& u, int x) {
    int y = tape.group_conv(x, u.weight_param, u.spec, u.stride);
    y = tape.batch_norm(y, u.gamma_param, u.beta_param, &u.bn, training);
    if (u.relu) y = tape.relu(y);
    if (u.perm_after) y = tape.permute_channels(y, *u.perm_after);
    return y;
  };
  if (stem) var = run_unit(*stem, var);
  for (auto& block : blocks) {
    const int block_in = var;
    for (auto& u : block.units) var = run_unit(u, var);
    if (block.skip) var = tape.add(var, block_in);
  }
  var = tape.global_average_pool(var);
  return tape.fully_connected(var, fc_weight, fc_bias, classes);
}

namespace {

int count_correct(const FeatureMap& probs_or_logits, const std::vector<int>& labels, int offset) {
  int correct = 0;
  for (int n = 0; n < probs_or_logits.n; ++n) {
    int best = 0;
    for (int c = 1; c < probs_or_logits.c; ++c)
      if (probs_or_logits.at(n, c, 0, 0) > probs_or_logits.at(n, best, 0, 0)) best = c;
    if (best == labels[offset + n]) ++correct;
  }
  return correct;
}

FeatureMap gather_batch(const Dataset& data, const std::vector<int>& order, int begin, int end,
                        std::vector<int>& labels, std::mt19937_64* aug_rng = nullptr) {
  const std::size_t image_size =
      static_cast<std::size_t>(data.images.c) * data.images.h * data.images.w;
  FeatureMap batch(end - begin, data.images.c, data.images.h, data.images.w);
  labels.clear();
  FeatureMap image(1, data.images.c, data.images.h, data.images.w);
  for (int i = begin; i < end; ++i) {
    double* slot = batch.v.data() + static_cast<std::size_t>(i - begin) * image_size;
    const double* src = data.images.v.data() + static_cast<std::size_t>(order[i]) * image_size;
    if (aug_rng && data.augment) {
      std::copy_n(src, image_size, image.v.data());
      FeatureMap cropped = augment(image, *aug_rng);
      std::copy_n(cropped.v.data(), image_size, slot);
    } else {
      std::copy_n(src, image_size, slot);
    }
    labels.push_back(data.labels[order[i]]);
  }
  return batch;
}

double evaluate(Network& net, const Dataset& data, int batch_size) {
  int correct = 0;
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;
  for (int begin = 0; begin < data.size(); begin += batch_size) {
    const int end = std::min(begin + batch_size, data.size());
    Tape tape(net.store);
    FeatureMap batch = gather_batch(data, order, begin, end, labels);
    int logits = net.forward(tape, std::move(batch), false);
    correct += count_correct(tape.value(logits), labels, 0);
  }
  return double(correct) / data.size();
}

void emit_metrics(std::ostream* out, const EpochMetrics& m) {
  if (!out) return;
  nlohmann::json line = {{"epoch", m.epoch},
                         {"lr", m.lr},
                         {"train_loss", m.train_loss},
                         {"train_acc", m.train_acc},
                         {"eval_acc", m.eval_acc}};
  (*out) << line.dump() << "\n" << std::flush;
}

std::vector<std::vector<double>> snapshot_params(const ParamStore& store) {
  std::vector<std::vector<double>> snap;
  snap.reserve(store.entries.size());
  for (const auto& e : store.entries) snap.push_back(e.value);
  return snap;
}

void restore_params(ParamStore& store, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < snap.size(); ++i) store.entries[i].value = snap[i];
}

}  // namespace

TrainResult train(Network& net, const Dataset& train_set, const Dataset* eval_set,
                  const TrainConfig& config, std::ostream* metrics,
                  const std::string& checkpoint_dir) {
  config.validate();
  if (train_set.size() < 1) throw usage_error("train: empty dataset");
  TrainResult result;
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  auto last_good = snapshot_params(net.store);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(config.seed * 0x9e3779b97f4a7c15ull + epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::mt19937_64 aug_rng(config.seed * 0x2545f4914f6cdd1dull + epoch);

    double loss_sum = 0.0;
    int correct = 0;
    std::vector<int> labels;
    try {
      for (int begin = 0; begin < train_set.size(); begin += config.batch) {
        const int end = std::min(begin + config.batch, train_set.size());
        Tape tape(net.store);
        FeatureMap batch = gather_batch(train_set, order, begin, end, labels, &aug_rng);
        net.store.zero_grad();
        int logits = net.forward(tape, std::move(batch), true);
        int loss = tape.softmax_cross_entropy(logits, labels);
        const double loss_value = tape.scalar(loss);
        if (!std::isfinite(loss_value)) throw divergence_error("non-finite training loss");
        tape.backward(loss);
        sgd_step(net.store, config, epoch);
        loss_sum += loss_value * (end - begin);
        correct += count_correct(tape.value(logits), labels, 0);
      }
    } catch (const divergence_error& e) {
      restore_params(net.store, last_good);
      if (!checkpoint_dir.empty()) write_checkpoint(checkpoint_dir, net);
      result.diverged = true;
      result.message = e.what();
      return result;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.lr = config.lr_at(epoch);
    m.train_loss = loss_sum / train_set.size();
    m.train_acc = double(correct) / train_set.size();
    m.eval_acc = eval_set ? evaluate(net, *eval_set, config.batch) : 0.0;
    emit_metrics(metrics, m);
    result.log.push_back(m);
    last_good = snapshot_params(net.store);
  }
  if (!checkpoint_dir.empty()) write_checkpoint(checkpoint_dir, net);
  return result;
}

namespace {

// A conv unit exports its convolution weights plus the batch norm folded to
// an inference-time affine pair.
KernelManifest unit_manifest(const ConvUnit& u, const ParamStore& store) {
  KernelManifest m;
  m.chain.factors.push_back(u.spec);
  FactorWeights fw;
  fw.w = store[u.weight_param].value;
  AffineParams a;
  a.scale.resize(u.spec.channels_out);
  a.shift.resize(u.spec.channels_out);
  const auto& gamma = store[u.gamma_param].value;
  const auto& beta = store[u.beta_param].value;
  for (int c = 0; c < u.spec.channels_out; ++c) {
    const double inv_std = 1.0 / std::sqrt(u.bn.running_var[c] + u.bn.eps);
    a.scale[c] = gamma[c] * inv_std;
    a.shift[c] = beta[c] - gamma[c] * u.bn.running_mean[c] * inv_std;
  }
  fw.affine = std::move(a);
  m.weights.factors.push_back(std::move(fw));
  return m;
}

}  // namespace

void write_checkpoint(const std::string& dir, const Network& net) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json index;
  index["classes"] = net.classes;
  if (net.stem) {
    write_kernel_manifest((fs::path(dir) / "stem.kernel").string(),
                          unit_manifest(*net.stem, net.store));
    index["stem"] = "stem.kernel";
  }
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
    nlohmann::json units = nlohmann::json::array();
    for (std::size_t ui = 0; ui < net.blocks[bi].units.size(); ++ui) {
      char name[64];
      std::snprintf(name, sizeof name, "block_%03zu_%02zu.kernel", bi, ui);
      write_kernel_manifest((fs::path(dir) / name).string(),
                            unit_manifest(net.blocks[bi].units[ui], net.store));
      units.push_back(name);
    }
    blocks.push_back({{"units", units}, {"skip", net.blocks[bi].skip}});
  }
  index["blocks"] = std::move(blocks);

  // Head: dense 1x1 kernel with the bias carried as an affine shift.
  {
    const auto& w = net.store[net.fc_weight].value;
    const int c_in = static_cast<int>(w.size()) / net.classes;
    DenseKernel kernel(net.classes, c_in, 1);
    kernel.w = w;
    KernelManifest m = dense_kernel_manifest(kernel);
    AffineParams a;
    a.scale.assign(net.classes, 1.0);
    a.shift = net.store[net.fc_bias].value;
    m.weights.factors[0].affine = std::move(a);
    write_kernel_manifest((fs::path(dir) / "head.kernel").string(), m);
    index["head"] = "head.kernel";
  }

  std::ofstream out(fs::path(dir) / "index.json");
  out << index.dump(2) << "\n";
}

TrainJob train_job_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("train config is not valid JSON: ") + e.what());
  }
  TrainJob job;
  job.config.lr = doc.value("lr", 0.1);
  job.config.decay_factor = doc.value("decay_factor", 0.1);
  job.config.decay_epochs = doc.value("decay_epochs", std::vector<int>{200, 300, 350});
  job.config.momentum = doc.value("momentum", 0.9);
  job.config.weight_decay = doc.value("weight_decay", 1e-4);
  job.config.batch = doc.value("batch", 64);
  job.config.epochs = doc.value("epochs", 400);
  job.config.seed = doc.value("seed", std::uint64_t(1));
  job.config.validate();
  if (doc.contains("dataset")) {
    const auto& ds = doc["dataset"];
    job.dataset.kind = ds.value("kind", "synth");
    job.dataset.classes = ds.value("classes", 2);
    job.dataset.count = ds.value("count", 2000);
    job.dataset.channels = ds.value("channels", 3);
    job.dataset.height = ds.value("height", 8);
    job.dataset.width = ds.value("width", 8);
    job.dataset.seed = ds.value("seed", std::uint64_t(7));
    job.dataset.cifar_labels = ds.value("labels", std::vector<int>{});
    job.dataset.per_class = ds.value("per_class", 0);
    job.dataset.augment = ds.value("augment", false);
  }
  return job;
}

Dataset make_dataset(const DatasetSpec& spec, const std::string& data_dir) {
  Dataset out;
  if (spec.kind == "synth") {
    out = synth_dataset(spec.classes, spec.count, spec.seed, spec.channels, spec.height,
                        spec.width);
  } else if (spec.kind == "cifar10") {
    out = load_cifar10(data_dir);
    if (!spec.cifar_labels.empty()) out = subset(out, spec.cifar_labels, spec.per_class);
  } else {
    throw usage_error("unknown dataset kind: " + spec.kind);
  }
  out.augment = spec.augment;
  return out;
}

}  // namespace igc
