#include "igc/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "igc/interleave.hpp"
#include "igc/parallel.hpp"

namespace igc {

namespace {

int isqrt_taps(int taps) {
  int r = static_cast<int>(std::lround(std::sqrt(double(taps))));
  if (r * r != taps) throw structural_error("spatial_taps must be a perfect square");
  return r;
}

int out_extent(int in, int stride) { return (in + stride - 1) / stride; }

// Same padding: out = ceil(in/stride), zeros split with the extra row/col at
// the bottom/right.
int pad_begin(int in, int stride, int window) {
  int out = out_extent(in, stride);
  int total = std::max((out - 1) * stride + window - in, 0);
  return total / 2;
}

// General grouped spatial convolution; the workhorse behind the public ops.
template <typename T>
Tensor4<T> group_conv_impl(const Tensor4<T>& x, const GroupConvSpec& spec,
                           const std::vector<T>& w, int stride) {
  spec.validate();
  if (x.c != spec.channels_in) throw structural_error("group conv: channel mismatch");
  if (stride < 1) throw usage_error("group conv: stride must be >= 1");
  const int r = isqrt_taps(spec.spatial_taps);
  const int oh = out_extent(x.h, stride), ow = out_extent(x.w, stride);
  const int ph = pad_begin(x.h, stride, r), pw = pad_begin(x.w, stride, r);
  Tensor4<T> y(x.n, spec.channels_out, oh, ow);

  // Branch block offsets into the flat weight array.
  std::vector<std::size_t> off(spec.branches + 1, 0);
  for (int g = 0; g < spec.branches; ++g)
    off[g + 1] = off[g] +
                 static_cast<std::size_t>(spec.out_count(g)) * spec.in_count(g) * spec.spatial_taps;
  if (w.size() != off[spec.branches]) throw structural_error("group conv: weight count mismatch");

  parallel_for(static_cast<long long>(x.n) * spec.channels_out, [&](long long lo, long long hi) {
    for (long long it = lo; it < hi; ++it) {
      const int n = static_cast<int>(it / spec.channels_out);
      const int co = static_cast<int>(it % spec.channels_out);
      const int g = std::min(co / spec.branch_width_out, spec.branches - 1);
      const int ko = co - spec.out_begin(g);
      const int ki_count = spec.in_count(g);
      const T* wg = w.data() + off[g] +
                    static_cast<std::size_t>(ko) * ki_count * spec.spatial_taps;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = 0;
          for (int s = 0; s < spec.spatial_taps; ++s) {
            const int ih = i * stride + s / r - ph;
            const int iw = j * stride + s % r - pw;
            if (ih < 0 || ih >= x.h || iw < 0 || iw >= x.w) continue;
            for (int ki = 0; ki < ki_count; ++ki)
              acc += wg[static_cast<std::size_t>(ki) * spec.spatial_taps + s] *
                     x.at(n, spec.in_begin(g) + ki, ih, iw);
          }
          y.at(n, co, i, j) = acc;
        }
    }
  });
  return y;
}

template <typename T>
Tensor4<T> dense_conv_impl(const Tensor4<T>& x, int co_count, int taps, const std::vector<T>& w,
                           int stride) {
  const int r = isqrt_taps(taps);
  const int oh = out_extent(x.h, stride), ow = out_extent(x.w, stride);
  const int ph = pad_begin(x.h, stride, r), pw = pad_begin(x.w, stride, r);
  Tensor4<T> y(x.n, co_count, oh, ow);
  parallel_for(static_cast<long long>(x.n) * co_count, [&](long long lo, long long hi) {
    for (long long it = lo; it < hi; ++it) {
      const int n = static_cast<int>(it / co_count);
      const int co = static_cast<int>(it % co_count);
      const T* wc = w.data() + static_cast<std::size_t>(co) * x.c * taps;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          T acc = 0;
          for (int s = 0; s < taps; ++s) {
            const int ih = i * stride + s / r - ph;
            const int iw = j * stride + s % r - pw;
            if (ih < 0 || ih >= x.h || iw < 0 || iw >= x.w) continue;
            for (int ci = 0; ci < x.c; ++ci)
              acc += wc[static_cast<std::size_t>(ci) * taps + s] * x.at(n, ci, ih, iw);
          }
          y.at(n, co, i, j) = acc;
        }
    }
  });
  return y;
}

template <typename T>
Tensor4<T> permute_impl(const Tensor4<T>& x, const PermutationSpec& perm) {
  if (perm.size() != x.c) throw structural_error("permute: length does not match channels");
  perm.validate();
  Tensor4<T> y(x.n, x.c, x.h, x.w);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      std::copy_n(x.v.data() + x.index(n, c, 0, 0), plane,
                  y.v.data() + y.index(n, perm.map[c], 0, 0));
  return y;
}

}  // namespace

std::size_t factor_weight_count(const GroupConvSpec& spec) {
  return static_cast<std::size_t>(spec.nonzeros());
}

FeatureMap grouped_pointwise(const FeatureMap& x, const GroupConvSpec& spec,
                             const FactorWeights& weights) {
  if (spec.spatial_taps != 1) throw usage_error("grouped_pointwise: spec must have 1 tap");
  return group_conv_impl(x, spec, weights.w, 1);
}

FeatureMap depthwise_spatial(const FeatureMap& x, const std::vector<double>& weights, int taps,
                             int stride) {
  GroupConvSpec spec = GroupConvSpec::square(x.c, 1, taps);
  if (weights.size() != static_cast<std::size_t>(x.c) * taps)
    throw structural_error("depthwise: need C*S weights");
  return group_conv_impl(x, spec, weights, stride);
}

FeatureMap group_spatial(const FeatureMap& x, const GroupConvSpec& spec,
                         const FactorWeights& weights, int stride) {
  return group_conv_impl(x, spec, weights.w, stride);
}

FeatureMap permute_channels(const FeatureMap& x, const PermutationSpec& perm) {
  return permute_impl(x, perm);
}

FeatureMap channel_affine(const FeatureMap& x, const AffineParams& affine) {
  if (static_cast<int>(affine.scale.size()) != x.c ||
      static_cast<int>(affine.shift.size()) != x.c)
    throw structural_error("affine: per-channel parameter count mismatch");
  FeatureMap y(x.n, x.c, x.h, x.w);
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c)
      for (int i = 0; i < x.h; ++i)
        for (int j = 0; j < x.w; ++j)
          y.at(n, c, i, j) = x.at(n, c, i, j) * affine.scale[c] + affine.shift[c];
  return y;
}

FeatureMap relu(const FeatureMap& x) {
  FeatureMap y = x;
  for (double& v : y.v) v = v > 0 ? v : 0;
  return y;
}

FeatureMap dense_conv(const FeatureMap& x, const DenseKernel& kernel, int stride) {
  if (kernel.channels_in != x.c) throw structural_error("dense_conv: channel mismatch");
  if (stride < 1) throw usage_error("dense_conv: stride must be >= 1");
  return dense_conv_impl(x, kernel.channels_out, kernel.taps, kernel.w, stride);
}

namespace {

// Row-major c_out x c_in matrix helper for kernel composition.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;
  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }
};

Mat factor_matrix(const GroupConvSpec& spec, const FactorWeights& fw, int tap) {
  Mat m(spec.channels_out, spec.channels_in);
  for (int g = 0; g < spec.branches; ++g)
    for (int ko = 0; ko < spec.out_count(g); ++ko)
      for (int ki = 0; ki < spec.in_count(g); ++ki)
        m.at(spec.out_begin(g) + ko, spec.in_begin(g) + ki) = fw.block(spec, g, ko, ki, tap);
  return m;
}

Mat mat_mul(const Mat& a, const Mat& b) {
  Mat out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  return out;
}

void permute_mat_rows(const PermutationSpec& perm, Mat& m) {
  Mat out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(perm.map[i], j) = m.at(i, j);
  m = std::move(out);
}

void scale_mat_rows(const AffineParams& affine, Mat& m) {
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) m.at(i, j) *= affine.scale[i];
}

}  // namespace

DenseKernel compose_dense_kernel(const FactorChain& chain, const BlockWeights& weights,
                                 bool fold_affine_scale) {
  chain.validate();
  if (weights.factors.size() != chain.factors.size())
    throw structural_error("compose: weight set does not match the chain");
  int spatial_factors = 0;
  for (const auto& f : chain.factors)
    if (f.spatial_taps > 1) ++spatial_factors;
  if (spatial_factors > 1)
    throw structural_error("compose: more than one spatial factor is unsupported");

  // One matrix per tap; starts as a single identity and fans out at the
  // spatial factor.
  std::vector<Mat> taps(1, Mat(chain.channels_in(), chain.channels_in()));
  for (int j = 0; j < chain.channels_in(); ++j) taps[0].at(j, j) = 1.0;

  for (int l = 0; l < chain.depth(); ++l) {
    const GroupConvSpec& spec = chain.factors[l];
    const FactorWeights& fw = weights.factors[l];
    if (fw.w.size() != factor_weight_count(spec))
      throw structural_error("compose: factor weight count mismatch");
    if (spec.spatial_taps > 1) {
      std::vector<Mat> fanned(spec.spatial_taps);
      for (int s = 0; s < spec.spatial_taps; ++s)
        fanned[s] = mat_mul(factor_matrix(spec, fw, s), taps[0]);
      taps = std::move(fanned);
    } else {
      Mat f = factor_matrix(spec, fw, 0);
      for (auto& m : taps) m = mat_mul(f, m);
    }
    if (fold_affine_scale && fw.affine)
      for (auto& m : taps) scale_mat_rows(*fw.affine, m);
    if (l < chain.depth() - 1)
      for (auto& m : taps) permute_mat_rows(chain.interleaves[l], m);
    else if (chain.trailing)
      for (auto& m : taps) permute_mat_rows(*chain.trailing, m);
  }

  DenseKernel kernel(chain.channels_out(), chain.channels_in(), static_cast<int>(taps.size()));
  for (int s = 0; s < kernel.taps; ++s)
    for (int co = 0; co < kernel.channels_out; ++co)
      for (int ci = 0; ci < kernel.channels_in; ++ci) kernel.at(co, ci, s) = taps[s].at(co, ci);
  return kernel;
}

namespace {

// ReLU after the first (spatial) and last stages, matching the nonlinear
// IGCV2 ordering; intermediate pointwise stages carry affine only.
bool default_relu_stage(int l, int depth) { return l == 0 || l == depth - 1; }

template <typename T>
Tensor4<T> forward_block_impl(const Tensor4<T>& x, const FactorChain& chain,
                              const BlockWeights& weights, ForwardMode mode, int stride) {
  chain.validate();
  if (weights.factors.size() != chain.factors.size())
    throw structural_error("forward_block: weight set does not match the chain");
  Tensor4<T> cur = x;
  for (int l = 0; l < chain.depth(); ++l) {
    const GroupConvSpec& spec = chain.factors[l];
    const FactorWeights& fw = weights.factors[l];
    if (fw.w.size() != factor_weight_count(spec))
      throw structural_error("forward_block: factor weight count mismatch");
    std::vector<T> w(fw.w.begin(), fw.w.end());
    cur = group_conv_impl(cur, spec, w, spec.spatial_taps > 1 ? stride : 1);
    if (mode == ForwardMode::nonlinear_igcv2) {
      if (!fw.affine) throw structural_error("forward_block: nonlinear mode needs affine params");
      for (int c = 0; c < cur.c; ++c) {
        T scale = static_cast<T>(fw.affine->scale[c]);
        T shift = static_cast<T>(fw.affine->shift[c]);
        for (int n = 0; n < cur.n; ++n)
          for (int i = 0; i < cur.h; ++i)
            for (int j = 0; j < cur.w; ++j) {
              T& v = cur.at(n, c, i, j);
              v = v * scale + shift;
            }
      }
      if (fw.relu || default_relu_stage(l, chain.depth()))
        for (T& v : cur.v) v = v > 0 ? v : 0;
    }
    if (l < chain.depth() - 1) cur = permute_impl(cur, chain.interleaves[l]);
  }
  if (chain.trailing) cur = permute_impl(cur, *chain.trailing);
  return cur;
}

}  // namespace

FeatureMap forward_block(const FeatureMap& x, const FactorChain& chain,
                         const BlockWeights& weights, ForwardMode mode, int stride) {
  return forward_block_impl(x, chain, weights, mode, stride);
}

FeatureMap forward_igcv3_block(const FeatureMap& x, const Igcv3Spec& spec,
                               const Igcv3Weights& weights) {
  if (x.c != spec.channels_in) throw structural_error("igcv3: input channel mismatch");
  if (spec.expansion < 1 || spec.g1 < 1 || spec.g2 < 1)
    throw usage_error("igcv3: expansion and branch counts must be >= 1");
  const int expanded = spec.channels_in * spec.expansion;
  if (expanded % spec.g1 || expanded % spec.g2)
    throw structural_error("igcv3: branch counts must divide the expanded width");
  const bool add_skip = spec.skip && spec.stride == 1 && spec.channels_in == spec.channels_out;

  auto affine_relu = [](FeatureMap m, const FactorWeights& fw, bool apply_relu) {
    if (fw.affine) m = channel_affine(m, *fw.affine);
    return apply_relu ? relu(m) : m;
  };

  GroupConvSpec expand = GroupConvSpec::grouped(spec.channels_in, expanded,
                                                spec.channels_in / spec.g1, expanded / spec.g1, 1);
  FeatureMap h = affine_relu(grouped_pointwise(x, expand, weights.expand), weights.expand, true);
  h = depthwise_spatial(h, weights.depthwise.w, 9, spec.stride);
  h = affine_relu(std::move(h), weights.depthwise, true);

  // Round-robin interleave so each projection branch draws from every
  // expansion branch.
  h = permute_channels(h, branch_shuffle(expanded, spec.g1));

  GroupConvSpec project = GroupConvSpec::grouped(expanded, spec.channels_out, expanded / spec.g2,
                                                 spec.channels_out / spec.g2, 1);
  if (spec.channels_out % spec.g2) throw structural_error("igcv3: g2 must divide channels_out");
  h = grouped_pointwise(h, project, weights.project);
  if (weights.project.affine) h = channel_affine(h, *weights.project.affine);

  if (add_skip)
    for (std::size_t i = 0; i < h.v.size(); ++i) h.v[i] += x.v[i];
  return h;
}

BlockWeights random_weights(const FactorChain& chain, std::uint64_t seed, bool with_affine) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  BlockWeights bw;
  for (const auto& spec : chain.factors) {
    FactorWeights fw;
    fw.w.resize(factor_weight_count(spec));
    const double sigma = std::sqrt(2.0 / (double(spec.branch_width_in) * spec.spatial_taps));
    for (double& v : fw.w) v = dist(rng) * sigma;
    if (with_affine) {
      AffineParams a;
      a.scale.assign(spec.channels_out, 1.0);
      a.shift.assign(spec.channels_out, 0.0);
      fw.affine = std::move(a);
    }
    bw.factors.push_back(std::move(fw));
  }
  return bw;
}

namespace {

template <typename F>
double median_time_ms(int repetitions, F&& run) {
  run();  // warmup
  std::vector<double> times;
  times.reserve(repetitions);
  for (int i = 0; i < repetitions; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    run();
    auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

BenchmarkResult benchmark(const FactorChain& chain, const BlockWeights& weights, int batch,
                          int height, int width, int repetitions) {
  if (repetitions < 3) throw usage_error("benchmark: need at least 3 repetitions");
  chain.validate();
  BenchmarkResult result;
  result.factorized_nonzeros = chain.nonzeros();
  result.dense_nonzeros = static_cast<std::uint64_t>(chain.channels_out()) *
                          chain.channels_in() * chain.spatial_taps();
  result.theoretical_ratio =
      double(result.factorized_nonzeros) / double(result.dense_nonzeros);

  DenseKernel dense = compose_dense_kernel(chain, weights);
  Tensor4<float> xf(batch, chain.channels_in(), height, width);
  std::mt19937_64 rng(12u);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (float& v : xf.v) v = dist(rng);

  std::vector<std::vector<float>> factor_w;
  for (const auto& fw : weights.factors)
    factor_w.emplace_back(fw.w.begin(), fw.w.end());
  std::vector<float> dense_w(dense.w.begin(), dense.w.end());

  volatile float sink = 0;
  result.factorized_ms = median_time_ms(repetitions, [&] {
    Tensor4<float> cur = xf;
    for (int l = 0; l < chain.depth(); ++l) {
      cur = group_conv_impl(cur, chain.factors[l], factor_w[l], 1);
      if (l < chain.depth() - 1) cur = permute_impl(cur, chain.interleaves[l]);
    }
    if (chain.trailing) cur = permute_impl(cur, *chain.trailing);
    sink = sink + cur.v[0];
  });
  result.dense_ms = median_time_ms(repetitions, [&] {
    Tensor4<float> out = dense_conv_impl(xf, dense.channels_out, dense.taps, dense_w, 1);
    sink = sink + out.v[0];
  });
  result.time_ratio = result.dense_ms > 0 ? result.factorized_ms / result.dense_ms : 0.0;
  return result;
}

}  // namespace igc
