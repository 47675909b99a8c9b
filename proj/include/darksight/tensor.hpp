#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "darksight/error.hpp"
#include "darksight/rng.hpp"

namespace darksight {

// Dense row-major tensor, rank 1-4. float carries the forward pass,
// double the oracle and gradient paths. Feature maps are rank-3 (C,H,W),
// frame stacks rank-4 (T,C,H,W).
template <class T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape, T fill = T{}) : shape_(std::move(shape)) {
    validate_shape();
    data_.assign(static_cast<std::size_t>(numel_), fill);
  }

  TensorT(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape();
    if (static_cast<std::int64_t>(data_.size()) != numel_) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape volume " + std::to_string(numel_));
    }
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t numel() const { return numel_; }
  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(int i) {
    assert(rank() == 1);
    return data_[static_cast<std::size_t>(i)];
  }
  const T& at(int i) const {
    assert(rank() == 1);
    return data_[static_cast<std::size_t>(i)];
  }
  T& at(int i, int j) {
    assert(rank() == 2);
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  const T& at(int i, int j) const {
    assert(rank() == 2);
    return data_[static_cast<std::size_t>(i) * shape_[1] + j];
  }
  T& at(int i, int j, int k) {
    assert(rank() == 3);
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(int i, int j, int k) const {
    assert(rank() == 3);
    return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  T& at(int i, int j, int k, int l) {
    assert(rank() == 4);
    return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& at(int i, int j, int k, int l) const {
    assert(rank() == 4);
    return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  template <class U>
  TensorT<U> cast() const {
    std::vector<U> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(out));
  }

 private:
  void validate_shape() {
    if (shape_.empty() || shape_.size() > 4) {
      throw ShapeError("tensor rank must be 1-4, got " + std::to_string(shape_.size()));
    }
    numel_ = 1;
    for (int e : shape_) {
      if (e <= 0) throw ShapeError("tensor extent must be positive, got " + std::to_string(e));
      numel_ *= e;
    }
  }

  std::vector<int> shape_;
  std::vector<T> data_;
  std::int64_t numel_ = 0;
};

using Tensor = TensorT<float>;
using DTensor = TensorT<double>;

template <class T>
void check_finite(const TensorT<T>& x, const char* op) {
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (!std::isfinite(static_cast<double>(x[i]))) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

template <class T, class F>
TensorT<T> map(const TensorT<T>& x, F&& f) {
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

template <class T, class F>
TensorT<T> zip(const TensorT<T>& a, const TensorT<T>& b, F&& f) {
  if (!a.same_shape(b)) throw ShapeError("zip: operand shapes differ");
  TensorT<T> out(a.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class T>
double mean_value(const TensorT<T>& x) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(x[i]);
  return acc / static_cast<double>(x.numel());
}

// ---------------------------------------------------------------------------
// Convolution

template <class T>
struct ConvSpecT {
  int kernel_size = 3;
  int stride = 1;
  int padding = 1;
  int in_channels = 0;
  int out_channels = 0;
  TensorT<T> weights;  // out x in x k x k
  TensorT<T> bias;     // out
};

using ConvSpec = ConvSpecT<float>;

template <class T>
ConvSpecT<T> make_zero_conv(int in_channels, int out_channels, int kernel_size = 3,
                            int stride = 1, int padding = 1) {
  ConvSpecT<T> spec;
  spec.kernel_size = kernel_size;
  spec.stride = stride;
  spec.padding = padding;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.weights = TensorT<T>({out_channels, in_channels, kernel_size, kernel_size});
  spec.bias = TensorT<T>({out_channels});
  return spec;
}

// Draw order: weights row-major (out, in, ky, kx), then bias.
template <class T>
ConvSpecT<T> make_conv(int in_channels, int out_channels, Rng& rng, int kernel_size = 3,
                       int stride = 1, int padding = 1) {
  ConvSpecT<T> spec = make_zero_conv<T>(in_channels, out_channels, kernel_size, stride, padding);
  const double b = fan_in_bound(in_channels * kernel_size * kernel_size);
  for (std::int64_t i = 0; i < spec.weights.numel(); ++i) {
    spec.weights[i] = static_cast<T>(rng.uniform(-b, b));
  }
  for (std::int64_t i = 0; i < spec.bias.numel(); ++i) {
    spec.bias[i] = static_cast<T>(rng.uniform(-b, b));
  }
  return spec;
}

template <class T>
std::int64_t param_count(const ConvSpecT<T>& spec) {
  return spec.weights.numel() + spec.bias.numel();
}

// Direct convolution (cross-correlation, NN convention) with zero padding.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvSpecT<T>& spec) {
  if (x.rank() != 3) throw ShapeError("conv2d: input must be rank-3 (C,H,W)");
  const int c_in = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (c_in != spec.in_channels) {
    throw ShapeError("conv2d: channel axis mismatch, input has " + std::to_string(c_in) +
                     " channels but spec expects " + std::to_string(spec.in_channels));
  }
  const int k = spec.kernel_size, s = spec.stride, p = spec.padding;
  if (spec.weights.rank() != 4 || spec.weights.extent(0) != spec.out_channels ||
      spec.weights.extent(1) != spec.in_channels || spec.weights.extent(2) != k ||
      spec.weights.extent(3) != k) {
    throw ShapeError("conv2d: weight tensor is not out x in x k x k");
  }
  if (spec.bias.numel() != spec.out_channels) {
    throw ShapeError("conv2d: bias length does not match out_channels");
  }
  if (h + 2 * p < k) throw ShapeError("conv2d: height axis too small for kernel reach");
  if (w + 2 * p < k) throw ShapeError("conv2d: width axis too small for kernel reach");

  const int ho = (h + 2 * p - k) / s + 1;
  const int wo = (w + 2 * p - k) / s + 1;
  TensorT<T> out({spec.out_channels, ho, wo});
  for (int oc = 0; oc < spec.out_channels; ++oc) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = static_cast<double>(spec.bias.at(oc));
        for (int ic = 0; ic < c_in; ++ic) {
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * s + ky - p;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * s + kx - p;
              if (ix < 0 || ix >= w) continue;
              acc += static_cast<double>(spec.weights.at(oc, ic, ky, kx)) *
                     static_cast<double>(x.at(ic, iy, ix));
            }
          }
        }
        out.at(oc, oy, ox) = static_cast<T>(acc);
      }
    }
  }
  check_finite(out, "conv2d");
  return out;
}

// ---------------------------------------------------------------------------
// Pooling

enum class PoolKind { kAvg, kMax };

template <class T>
TensorT<T> pool2d(const TensorT<T>& x, PoolKind kind, int window, int stride) {
  if (x.rank() != 3) throw ShapeError("pool2d: input must be rank-3 (C,H,W)");
  if (window < 1 || stride < 1) throw ValueError("pool2d: window and stride must be >= 1");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (window > h || window > w) {
    throw ShapeError("pool2d: window " + std::to_string(window) + " exceeds spatial extent " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const int ho = (h - window) / stride + 1;
  const int wo = (w - window) / stride + 1;
  TensorT<T> out({c, ho, wo});
  for (int ch = 0; ch < c; ++ch) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        if (kind == PoolKind::kMax) {
          T best = x.at(ch, oy * stride, ox * stride);
          for (int dy = 0; dy < window; ++dy) {
            for (int dx = 0; dx < window; ++dx) {
              best = std::max(best, x.at(ch, oy * stride + dy, ox * stride + dx));
            }
          }
          out.at(ch, oy, ox) = best;
        } else {
          double acc = 0.0;
          for (int dy = 0; dy < window; ++dy) {
            for (int dx = 0; dx < window; ++dx) {
              acc += static_cast<double>(x.at(ch, oy * stride + dy, ox * stride + dx));
            }
          }
          out.at(ch, oy, ox) = static_cast<T>(acc / (window * window));
        }
      }
    }
  }
  check_finite(out, "pool2d");
  return out;
}

// ---------------------------------------------------------------------------
// Activations

enum class Activation { kSigmoid, kRelu };

template <class T>
T sigmoid_scalar(T x) {
  // split by sign so exp never overflows
  if (x >= T{0}) {
    const T e = std::exp(-x);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
TensorT<T> activate(const TensorT<T>& x, Activation kind) {
  TensorT<T> out = kind == Activation::kSigmoid
                       ? map(x, [](T v) { return sigmoid_scalar(v); })
                       : map(x, [](T v) { return v > T{0} ? v : T{0}; });
  check_finite(out, "activate");
  return out;
}

// ---------------------------------------------------------------------------
// Normalization (per-channel, layer style: statistics over H*W)

template <class T>
struct NormAffineT {
  TensorT<T> scale;  // per channel, identity-initialized to 1
  TensorT<T> shift;  // per channel, identity-initialized to 0
};

using NormAffine = NormAffineT<float>;

template <class T>
NormAffineT<T> make_identity_affine(int channels) {
  NormAffineT<T> a;
  a.scale = TensorT<T>({channels}, T{1});
  a.shift = TensorT<T>({channels}, T{0});
  return a;
}

template <class T>
std::int64_t param_count(const NormAffineT<T>& a) {
  return a.scale.numel() + a.shift.numel();
}

// Zero mean, unit variance per channel (epsilon-guarded), then affine.
// A constant channel (including the 1-element case) maps to the shift value.
template <class T>
TensorT<T> normalize_layer(const TensorT<T>& x, const NormAffineT<T>& affine) {
  if (x.rank() != 3) throw ShapeError("normalize_layer: input must be rank-3 (C,H,W)");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (affine.scale.numel() != c || affine.shift.numel() != c) {
    throw ShapeError("normalize_layer: affine parameter length does not match channels");
  }
  const double eps = 1e-6;
  const std::int64_t n = static_cast<std::int64_t>(h) * w;
  TensorT<T> out(x.shape());
  for (int ch = 0; ch < c; ++ch) {
    double mean = 0.0;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) mean += static_cast<double>(x.at(ch, y, xx));
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const double d = static_cast<double>(x.at(ch, y, xx)) - mean;
        var += d * d;
      }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    const double g = static_cast<double>(affine.scale.at(ch));
    const double b = static_cast<double>(affine.shift.at(ch));
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        out.at(ch, y, xx) =
            static_cast<T>((static_cast<double>(x.at(ch, y, xx)) - mean) * inv * g + b);
      }
  }
  check_finite(out, "normalize_layer");
  return out;
}

template <class T>
TensorT<T> normalize_layer(const TensorT<T>& x) {
  if (x.rank() != 3) throw ShapeError("normalize_layer: input must be rank-3 (C,H,W)");
  return normalize_layer(x, make_identity_affine<T>(x.extent(0)));
}

// ---------------------------------------------------------------------------
// Bilinear resampling (align-corners-false convention:
// source = (dst + 0.5) * in/out - 0.5, clamped, then 2x2 lerp)

template <class T>
TensorT<T> resize_bilinear(const TensorT<T>& x, int h_out, int w_out) {
  if (x.rank() != 3) throw ShapeError("resize_bilinear: input must be rank-3 (C,H,W)");
  if (h_out < 1 || w_out < 1) throw ValueError("resize_bilinear: output extents must be >= 1");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  TensorT<T> out({c, h_out, w_out});
  const double sy = static_cast<double>(h) / h_out;
  const double sx = static_cast<double>(w) / w_out;
  for (int oy = 0; oy < h_out; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < w_out; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < c; ++ch) {
        const double v00 = static_cast<double>(x.at(ch, y0, x0));
        const double v01 = static_cast<double>(x.at(ch, y0, x1));
        const double v10 = static_cast<double>(x.at(ch, y1, x0));
        const double v11 = static_cast<double>(x.at(ch, y1, x1));
        const double top = v00 * (1.0 - wx) + v01 * wx;
        const double bot = v10 * (1.0 - wx) + v11 * wx;
        out.at(ch, oy, ox) = static_cast<T>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  check_finite(out, "resize_bilinear");
  return out;
}

template <class T>
TensorT<T> upsample_bilinear(const TensorT<T>& x, int factor) {
  if (factor < 1) throw ValueError("upsample_bilinear: factor must be >= 1");
  if (x.rank() != 3) throw ShapeError("upsample_bilinear: input must be rank-3 (C,H,W)");
  return resize_bilinear(x, x.extent(1) * factor, x.extent(2) * factor);
}

// ---------------------------------------------------------------------------
// Channel plumbing

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 3 || b.rank() != 3) throw ShapeError("concat_channels: inputs must be rank-3");
  if (a.extent(1) != b.extent(1) || a.extent(2) != b.extent(2)) {
    throw ShapeError("concat_channels: spatial extents differ");
  }
  TensorT<T> out({a.extent(0) + b.extent(0), a.extent(1), a.extent(2)});
  std::copy(a.data(), a.data() + a.numel(), out.data());
  std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
  return out;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, int c0, int c1) {
  if (x.rank() != 3) throw ShapeError("slice_channels: input must be rank-3");
  if (c0 < 0 || c1 > x.extent(0) || c0 >= c1) throw ShapeError("slice_channels: bad channel range");
  const std::int64_t plane = static_cast<std::int64_t>(x.extent(1)) * x.extent(2);
  TensorT<T> out({c1 - c0, x.extent(1), x.extent(2)});
  std::copy(x.data() + c0 * plane, x.data() + c1 * plane, out.data());
  return out;
}

// Mean across the channel axis: (C,H,W) -> (H,W).
template <class T>
TensorT<T> channel_mean(const TensorT<T>& x) {
  if (x.rank() != 3) throw ShapeError("channel_mean: input must be rank-3");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  TensorT<T> out({h, w});
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) acc += static_cast<double>(x.at(ch, y, xx));
      out.at(y, xx) = static_cast<T>(acc / c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Central-difference gradient oracle (64-bit only).
// Returns max over coordinates of |analytic - numeric| / max(1, |a|, |n|).

inline double grad_check(const std::function<double(const DTensor&)>& f, const DTensor& x,
                         const DTensor& analytic, double step = 1e-5) {
  if (!x.same_shape(analytic)) throw ShapeError("grad_check: gradient shape differs from input");
  DTensor probe = x;
  double worst = 0.0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    probe[i] = v + step;
    const double fp = f(probe);
    probe[i] = v - step;
    const double fm = f(probe);
    probe[i] = v;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("grad_check: objective returned a non-finite value");
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace darksight
