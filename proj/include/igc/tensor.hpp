#pragma once

#include <cstddef>
#include <vector>

#include "igc/error.hpp"

namespace igc {

/// Dense rank-4 tensor in (batch, channel, row, column) order, row-major.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) throw usage_error("Tensor4: all dims must be >= 1");
  }

  std::size_t size() const { return v.size(); }

  std::size_t index(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
  }
  T& at(int in, int ic, int ih, int iw) { return v[index(in, ic, ih, iw)]; }
  T at(int in, int ic, int ih, int iw) const { return v[index(in, ic, ih, iw)]; }

  bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out(n, c, h, w);
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

using FeatureMap = Tensor4<double>;

}  // namespace igc
