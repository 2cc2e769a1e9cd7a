#include "igc/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "igc/parallel.hpp"

namespace igc {

int ParamStore::add(std::string name, std::vector<double> init, bool decay) {
  Entry e;
  e.name = std::move(name);
  e.grad.assign(init.size(), 0.0);
  e.velocity.assign(init.size(), 0.0);
  e.value = std::move(init);
  e.decay = decay;
  entries.push_back(std::move(e));
  return static_cast<int>(entries.size()) - 1;
}

void ParamStore::zero_grad() {
  for (auto& e : entries) std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

namespace {

int isqrt_taps(int taps) {
  int r = static_cast<int>(std::lround(std::sqrt(double(taps))));
  if (r * r != taps) throw structural_error("spatial_taps must be a perfect square");
  return r;
}

int out_extent(int in, int stride) { return (in + stride - 1) / stride; }

int pad_begin(int in, int stride, int window) {
  int out = out_extent(in, stride);
  int total = std::max((out - 1) * stride + window - in, 0);
  return total / 2;
}

std::vector<std::size_t> branch_offsets(const GroupConvSpec& spec) {
  std::vector<std::size_t> off(spec.branches + 1, 0);
  for (int g = 0; g < spec.branches; ++g)
    off[g + 1] = off[g] + static_cast<std::size_t>(spec.out_count(g)) * spec.in_count(g) *
                              spec.spatial_taps;
  return off;
}

FeatureMap group_conv_forward(const FeatureMap& x, const GroupConvSpec& spec,
                              const std::vector<double>& w, int stride) {
  FactorWeights fw;
  fw.w = w;
  return group_spatial(x, spec, fw, stride);
}

// dL/dx of the group convolution: gathered per input element so the
// reduction order is fixed regardless of parallelism.
FeatureMap group_conv_input_grad(const FeatureMap& dy, const FeatureMap& x,
                                 const GroupConvSpec& spec, const std::vector<double>& w,
                                 int stride) {
  const int r = isqrt_taps(spec.spatial_taps);
  const int ph = pad_begin(x.h, stride, r), pw = pad_begin(x.w, stride, r);
  const auto off = branch_offsets(spec);
  FeatureMap dx(x.n, x.c, x.h, x.w);
  parallel_for(static_cast<long long>(x.n) * x.c, [&](long long lo, long long hi) {
    for (long long it = lo; it < hi; ++it) {
      const int n = static_cast<int>(it / x.c);
      const int ci = static_cast<int>(it % x.c);
      const int g = std::min(ci / spec.branch_width_in, spec.branches - 1);
      const int ki = ci - spec.in_begin(g);
      const int ko_count = spec.out_count(g);
      for (int ih = 0; ih < x.h; ++ih)
        for (int iw = 0; iw < x.w; ++iw) {
          double acc = 0.0;
          for (int s = 0; s < spec.spatial_taps; ++s) {
            const int num_h = ih + ph - s / r;
            const int num_w = iw + pw - s % r;
            if (num_h < 0 || num_w < 0 || num_h % stride || num_w % stride) continue;
            const int oh = num_h / stride, ow = num_w / stride;
            if (oh >= dy.h || ow >= dy.w) continue;
            for (int ko = 0; ko < ko_count; ++ko) {
              const double wv =
                  w[off[g] + (static_cast<std::size_t>(ko) * spec.in_count(g) + ki) *
                                 spec.spatial_taps +
                    s];
              acc += wv * dy.at(n, spec.out_begin(g) + ko, oh, ow);
            }
          }
          dx.at(n, ci, ih, iw) = acc;
        }
    }
  });
  return dx;
}

// dL/dw of the group convolution: one weight per iteration, sequential
// reduction over batch and positions.
void group_conv_weight_grad(const FeatureMap& dy, const FeatureMap& x, const GroupConvSpec& spec,
                            int stride, std::vector<double>& dw) {
  const int r = isqrt_taps(spec.spatial_taps);
  const int ph = pad_begin(x.h, stride, r), pw = pad_begin(x.w, stride, r);
  const auto off = branch_offsets(spec);
  parallel_for(spec.branches, [&](long long glo, long long ghi) {
    for (long long g = glo; g < ghi; ++g) {
      const int gi = static_cast<int>(g);
      for (int ko = 0; ko < spec.out_count(gi); ++ko)
        for (int ki = 0; ki < spec.in_count(gi); ++ki)
          for (int s = 0; s < spec.spatial_taps; ++s) {
            double acc = 0.0;
            for (int n = 0; n < x.n; ++n)
              for (int oh = 0; oh < dy.h; ++oh) {
                const int ih = oh * stride + s / r - ph;
                if (ih < 0 || ih >= x.h) continue;
                for (int ow = 0; ow < dy.w; ++ow) {
                  const int iw = ow * stride + s % r - pw;
                  if (iw < 0 || iw >= x.w) continue;
                  acc += dy.at(n, spec.out_begin(gi) + ko, oh, ow) *
                         x.at(n, spec.in_begin(gi) + ki, ih, iw);
                }
              }
            dw[off[gi] +
               (static_cast<std::size_t>(ko) * spec.in_count(gi) + ki) * spec.spatial_taps + s] +=
                acc;
          }
    }
  });
}

}  // namespace

int Tape::push(Node node) {
  forward_node(node);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::forward_node(Node& node) {
  switch (node.op) {
    case Op::input:
      break;
    case Op::group_conv:
      node.out = group_conv_forward(nodes_[node.a].out, node.spec, (*store_)[node.p0].value,
                                    node.stride);
      break;
    case Op::permute:
      node.out = igc::permute_channels(nodes_[node.a].out, node.perm);
      break;
    case Op::relu:
      node.out = igc::relu(nodes_[node.a].out);
      break;
    case Op::affine: {
      AffineParams a;
      a.scale = (*store_)[node.p0].value;
      a.shift = (*store_)[node.p1].value;
      node.out = igc::channel_affine(nodes_[node.a].out, a);
      break;
    }
    case Op::batch_norm: {
      const FeatureMap& x = nodes_[node.a].out;
      const auto& gamma = (*store_)[node.p0].value;
      const auto& beta = (*store_)[node.p1].value;
      const double eps = node.bn->eps;
      node.out = FeatureMap(x.n, x.c, x.h, x.w);
      node.saved = FeatureMap(x.n, x.c, x.h, x.w);
      node.saved_vec.assign(x.c, 0.0);
      const double m = double(x.n) * x.h * x.w;
      for (int c = 0; c < x.c; ++c) {
        double mean, var;
        if (node.training) {
          double sum = 0.0, sq = 0.0;
          for (int n = 0; n < x.n; ++n)
            for (int i = 0; i < x.h; ++i)
              for (int j = 0; j < x.w; ++j) {
                double v = x.at(n, c, i, j);
                sum += v;
                sq += v * v;
              }
          mean = sum / m;
          var = std::max(sq / m - mean * mean, 0.0);
          node.bn->running_mean[c] =
              node.bn->momentum * node.bn->running_mean[c] + (1.0 - node.bn->momentum) * mean;
          node.bn->running_var[c] =
              node.bn->momentum * node.bn->running_var[c] + (1.0 - node.bn->momentum) * var;
        } else {
          mean = node.bn->running_mean[c];
          var = node.bn->running_var[c];
        }
        const double inv_std = 1.0 / std::sqrt(var + eps);
        node.saved_vec[c] = inv_std;
        for (int n = 0; n < x.n; ++n)
          for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) {
              double xhat = (x.at(n, c, i, j) - mean) * inv_std;
              node.saved.at(n, c, i, j) = xhat;
              node.out.at(n, c, i, j) = gamma[c] * xhat + beta[c];
            }
      }
      break;
    }
    case Op::gap: {
      const FeatureMap& x = nodes_[node.a].out;
      node.out = FeatureMap(x.n, x.c, 1, 1);
      const double scale = 1.0 / (double(x.h) * x.w);
      for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
          double sum = 0.0;
          for (int i = 0; i < x.h; ++i)
            for (int j = 0; j < x.w; ++j) sum += x.at(n, c, i, j);
          node.out.at(n, c, 0, 0) = sum * scale;
        }
      break;
    }
    case Op::fc: {
      const FeatureMap& x = nodes_[node.a].out;
      const auto& w = (*store_)[node.p0].value;
      const auto& b = (*store_)[node.p1].value;
      const int out_features = static_cast<int>(b.size());
      if (x.h != 1 || x.w != 1) throw structural_error("fully_connected: expects N x C x 1 x 1");
      if (w.size() != static_cast<std::size_t>(out_features) * x.c)
        throw structural_error("fully_connected: weight shape mismatch");
      node.out = FeatureMap(x.n, out_features, 1, 1);
      for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < out_features; ++o) {
          double acc = b[o];
          for (int c = 0; c < x.c; ++c)
            acc += w[static_cast<std::size_t>(o) * x.c + c] * x.at(n, c, 0, 0);
          node.out.at(n, o, 0, 0) = acc;
        }
      break;
    }
    case Op::softmax_ce: {
      const FeatureMap& logits = nodes_[node.a].out;
      if (static_cast<int>(node.labels.size()) != logits.n)
        throw structural_error("softmax_cross_entropy: one label per batch row");
      node.saved = FeatureMap(logits.n, logits.c, 1, 1);
      double loss = 0.0;
      for (int n = 0; n < logits.n; ++n) {
        double hi = logits.at(n, 0, 0, 0);
        for (int c = 1; c < logits.c; ++c) hi = std::max(hi, logits.at(n, c, 0, 0));
        double z = 0.0;
        for (int c = 0; c < logits.c; ++c) z += std::exp(logits.at(n, c, 0, 0) - hi);
        for (int c = 0; c < logits.c; ++c)
          node.saved.at(n, c, 0, 0) = std::exp(logits.at(n, c, 0, 0) - hi) / z;
        const int label = node.labels[n];
        if (label < 0 || label >= logits.c)
          throw structural_error("softmax_cross_entropy: label out of range");
        loss -= std::log(std::max(node.saved.at(n, label, 0, 0), 1e-300));
      }
      node.out = FeatureMap(1, 1, 1, 1);
      node.out.v[0] = loss / logits.n;
      break;
    }
    case Op::add: {
      const FeatureMap& a = nodes_[node.a].out;
      const FeatureMap& b = nodes_[node.b].out;
      if (!a.same_shape(b)) throw structural_error("add: shape mismatch");
      node.out = a;
      for (std::size_t i = 0; i < node.out.v.size(); ++i) node.out.v[i] += b.v[i];
      break;
    }
    case Op::dot: {
      const FeatureMap& x = nodes_[node.a].out;
      if (!x.same_shape(node.saved)) throw structural_error("dot: shape mismatch");
      double acc = 0.0;
      for (std::size_t i = 0; i < x.v.size(); ++i) acc += x.v[i] * node.saved.v[i];
      node.out = FeatureMap(1, 1, 1, 1);
      node.out.v[0] = acc;
      break;
    }
  }
}

int Tape::input(FeatureMap x) {
  Node n;
  n.op = Op::input;
  n.out = std::move(x);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::group_conv(int x, int weight_param, const GroupConvSpec& spec, int stride) {
  Node n;
  n.op = Op::group_conv;
  n.a = x;
  n.p0 = weight_param;
  n.spec = spec;
  n.stride = stride;
  return push(std::move(n));
}

int Tape::grouped_pointwise(int x, int weight_param, const GroupConvSpec& spec) {
  if (spec.spatial_taps != 1) throw usage_error("grouped_pointwise: spec must have 1 tap");
  return group_conv(x, weight_param, spec, 1);
}

int Tape::depthwise_spatial(int x, int weight_param, int channels, int taps, int stride) {
  return group_conv(x, weight_param, GroupConvSpec::square(channels, 1, taps), stride);
}

int Tape::permute_channels(int x, PermutationSpec perm) {
  Node n;
  n.op = Op::permute;
  n.a = x;
  n.perm = std::move(perm);
  return push(std::move(n));
}

int Tape::relu(int x) {
  Node n;
  n.op = Op::relu;
  n.a = x;
  return push(std::move(n));
}

int Tape::channel_affine(int x, int scale_param, int shift_param) {
  Node n;
  n.op = Op::affine;
  n.a = x;
  n.p0 = scale_param;
  n.p1 = shift_param;
  return push(std::move(n));
}

int Tape::batch_norm(int x, int gamma_param, int beta_param, BatchNormState* state,
                     bool training) {
  Node n;
  n.op = Op::batch_norm;
  n.a = x;
  n.p0 = gamma_param;
  n.p1 = beta_param;
  n.bn = state;
  n.training = training;
  return push(std::move(n));
}

int Tape::global_average_pool(int x) {
  Node n;
  n.op = Op::gap;
  n.a = x;
  return push(std::move(n));
}

int Tape::fully_connected(int x, int weight_param, int bias_param, int out_features) {
  if (static_cast<int>((*store_)[bias_param].value.size()) != out_features)
    throw structural_error("fully_connected: bias size mismatch");
  Node n;
  n.op = Op::fc;
  n.a = x;
  n.p0 = weight_param;
  n.p1 = bias_param;
  return push(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, std::vector<int> labels) {
  Node n;
  n.op = Op::softmax_ce;
  n.a = logits;
  n.labels = std::move(labels);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  return push(std::move(n));
}

int Tape::dot(int x, FeatureMap constant) {
  Node n;
  n.op = Op::dot;
  n.a = x;
  n.saved = std::move(constant);
  return push(std::move(n));
}

void Tape::backward(int var) {
  if (nodes_[var].out.size() != 1) throw usage_error("backward: variable must be scalar");
  grads_.assign(nodes_.size(), FeatureMap());
  auto grad_of = [&](int id) -> FeatureMap& {
    if (grads_[id].size() == 0) {
      const FeatureMap& o = nodes_[id].out;
      grads_[id] = FeatureMap(o.n, o.c, o.h, o.w);
    }
    return grads_[id];
  };
  grad_of(var).v[0] = 1.0;

  for (int id = var; id >= 0; --id) {
    Node& node = nodes_[id];
    if (grads_[id].size() == 0) continue;  // not on the path to the loss
    const FeatureMap& dy = grads_[id];
    switch (node.op) {
      case Op::input:
        break;
      case Op::group_conv: {
        const FeatureMap& x = nodes_[node.a].out;
        const auto& w = (*store_)[node.p0].value;
        FeatureMap dx = group_conv_input_grad(dy, x, node.spec, w, node.stride);
        FeatureMap& gx = grad_of(node.a);
        for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += dx.v[i];
        group_conv_weight_grad(dy, x, node.spec, node.stride, (*store_)[node.p0].grad);
        break;
      }
      case Op::permute: {
        FeatureMap dx = igc::permute_channels(dy, node.perm.inverse());
        FeatureMap& gx = grad_of(node.a);
        for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += dx.v[i];
        break;
      }
      case Op::relu: {
        const FeatureMap& x = nodes_[node.a].out;
        FeatureMap& gx = grad_of(node.a);
        for (std::size_t i = 0; i < gx.v.size(); ++i)
          if (x.v[i] > 0) gx.v[i] += dy.v[i];
        break;
      }
      case Op::affine: {
        const FeatureMap& x = nodes_[node.a].out;
        const auto& scale = (*store_)[node.p0].value;
        auto& dscale = (*store_)[node.p0].grad;
        auto& dshift = (*store_)[node.p1].grad;
        FeatureMap& gx = grad_of(node.a);
        for (int n = 0; n < x.n; ++n)
          for (int c = 0; c < x.c; ++c)
            for (int i = 0; i < x.h; ++i)
              for (int j = 0; j < x.w; ++j) {
                const double g = dy.at(n, c, i, j);
                gx.at(n, c, i, j) += g * scale[c];
                dscale[c] += g * x.at(n, c, i, j);
                dshift[c] += g;
              }
        break;
      }
      case Op::batch_norm: {
        const auto& gamma = (*store_)[node.p0].value;
        auto& dgamma = (*store_)[node.p0].grad;
        auto& dbeta = (*store_)[node.p1].grad;
        const FeatureMap& xhat = node.saved;
        FeatureMap& gx = grad_of(node.a);
        const double m = double(dy.n) * dy.h * dy.w;
        for (int c = 0; c < dy.c; ++c) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (int n = 0; n < dy.n; ++n)
            for (int i = 0; i < dy.h; ++i)
              for (int j = 0; j < dy.w; ++j) {
                const double g = dy.at(n, c, i, j);
                sum_dy += g;
                sum_dy_xhat += g * xhat.at(n, c, i, j);
              }
          dgamma[c] += sum_dy_xhat;
          dbeta[c] += sum_dy;
          const double inv_std = node.saved_vec[c];
          if (node.training) {
            for (int n = 0; n < dy.n; ++n)
              for (int i = 0; i < dy.h; ++i)
                for (int j = 0; j < dy.w; ++j)
                  gx.at(n, c, i, j) +=
                      gamma[c] * inv_std *
                      (dy.at(n, c, i, j) - sum_dy / m -
                       xhat.at(n, c, i, j) * sum_dy_xhat / m);
          } else {
            for (int n = 0; n < dy.n; ++n)
              for (int i = 0; i < dy.h; ++i)
                for (int j = 0; j < dy.w; ++j)
                  gx.at(n, c, i, j) += gamma[c] * inv_std * dy.at(n, c, i, j);
          }
        }
        break;
      }
      case Op::gap: {
        const FeatureMap& x = nodes_[node.a].out;
        FeatureMap& gx = grad_of(node.a);
        const double scale = 1.0 / (double(x.h) * x.w);
        for (int n = 0; n < x.n; ++n)
          for (int c = 0; c < x.c; ++c) {
            const double g = dy.at(n, c, 0, 0) * scale;
            for (int i = 0; i < x.h; ++i)
              for (int j = 0; j < x.w; ++j) gx.at(n, c, i, j) += g;
          }
        break;
      }
      case Op::fc: {
        const FeatureMap& x = nodes_[node.a].out;
        const auto& w = (*store_)[node.p0].value;
        auto& dw = (*store_)[node.p0].grad;
        auto& db = (*store_)[node.p1].grad;
        const int out_features = dy.c;
        FeatureMap& gx = grad_of(node.a);
        for (int n = 0; n < x.n; ++n)
          for (int o = 0; o < out_features; ++o) {
            const double g = dy.at(n, o, 0, 0);
            db[o] += g;
            for (int c = 0; c < x.c; ++c) {
              dw[static_cast<std::size_t>(o) * x.c + c] += g * x.at(n, c, 0, 0);
              gx.at(n, c, 0, 0) += g * w[static_cast<std::size_t>(o) * x.c + c];
            }
          }
        break;
      }
      case Op::softmax_ce: {
        const FeatureMap& probs = node.saved;
        FeatureMap& gx = grad_of(node.a);
        const double g = dy.v[0] / probs.n;
        for (int n = 0; n < probs.n; ++n)
          for (int c = 0; c < probs.c; ++c)
            gx.at(n, c, 0, 0) +=
                g * (probs.at(n, c, 0, 0) - (node.labels[n] == c ? 1.0 : 0.0));
        break;
      }
      case Op::add: {
        FeatureMap& ga = grad_of(node.a);
        for (std::size_t i = 0; i < ga.v.size(); ++i) ga.v[i] += dy.v[i];
        FeatureMap& gb = grad_of(node.b);
        for (std::size_t i = 0; i < gb.v.size(); ++i) gb.v[i] += dy.v[i];
        break;
      }
      case Op::dot: {
        FeatureMap& gx = grad_of(node.a);
        const double g = dy.v[0];
        for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += g * node.saved.v[i];
        break;
      }
    }
  }
}

void Tape::replay() {
  for (auto& node : nodes_) {
    if (node.op == Op::input) continue;
    // Batch-norm replay must not advance the running statistics again.
    BatchNormState snapshot;
    if (node.op == Op::batch_norm) snapshot = *node.bn;
    forward_node(node);
    if (node.op == Op::batch_norm) *node.bn = snapshot;
  }
}

void TrainConfig::validate() const {
  if (lr <= 0) throw usage_error("train config: learning rate must be > 0");
  if (decay_factor <= 0 || decay_factor > 1)
    throw usage_error("train config: decay factor must lie in (0, 1]");
  if (momentum < 0 || momentum >= 1) throw usage_error("train config: momentum must be in [0, 1)");
  if (weight_decay < 0) throw usage_error("train config: weight decay must be >= 0");
  if (batch < 1 || epochs < 1) throw usage_error("train config: batch and epochs must be >= 1");
}

double TrainConfig::lr_at(int epoch) const {
  double rate = lr;
  for (int e : decay_epochs)
    if (epoch >= e) rate *= decay_factor;
  return rate;
}

void sgd_step(ParamStore& store, const TrainConfig& config, int epoch) {
  const double rate = config.lr_at(epoch);
  for (auto& entry : store.entries) {
    for (std::size_t i = 0; i < entry.value.size(); ++i) {
      double g = entry.grad[i];
      if (!std::isfinite(g))
        throw divergence_error("non-finite gradient in parameter " + entry.name);
      if (entry.decay) g += config.weight_decay * entry.value[i];
      double v = config.momentum * entry.velocity[i] + g;
      entry.velocity[i] = v;
      entry.value[i] -= rate * (g + config.momentum * v);  // Nesterov look-ahead
    }
  }
}

FiniteDiffReport finite_diff_check(ParamStore& store, const std::function<int(Tape&)>& record,
                                   double tolerance, double step) {
  store.zero_grad();
  Tape tape(store);
  int loss_var = record(tape);
  tape.backward(loss_var);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(store.entries.size());
  for (const auto& e : store.entries) analytic.push_back(e.grad);

  auto eval = [&]() {
    Tape t(store);
    return t.scalar(record(t));
  };

  FiniteDiffReport report;
  for (std::size_t p = 0; p < store.entries.size(); ++p) {
    auto& value = store.entries[p].value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double keep = value[i];
      value[i] = keep + step;
      const double up = eval();
      value[i] = keep - step;
      const double down = eval();
      value[i] = keep;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = store.entries[p].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

}  // namespace igc
