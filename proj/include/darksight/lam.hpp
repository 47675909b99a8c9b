#pragma once

#include <algorithm>
#include <cmath>

#include "darksight/error.hpp"
#include "darksight/tensor.hpp"

namespace darksight::lam {

constexpr double kDefaultMuOut = 0.5;  // best-accuracy target luminance mean
constexpr double kBeta = 0.7;          // contrast scaling factor of the pixel loss
constexpr double kYHigh = 0.5;         // reference normal-light luminance mean

struct GammaParams {
  double mu_out = kDefaultMuOut;
  double mu_in = 0.5;   // mean of the min-max normalized input, clamped
  double gamma = 1.0;   // log(mu_out) / log(mu_in)
};

inline double gamma_from_means(double mu_in, double mu_out) {
  if (mu_out <= 0.0 || mu_out >= 1.0) throw ValueError("gamma: mu_out must lie in (0,1)");
  const double clamped = std::clamp(mu_in, 1e-3, 1.0 - 1e-3);
  return std::log(mu_out) / std::log(clamped);
}

// Min-max normalization to [0,1]; a constant map is defined as 0.5
// everywhere so downstream gamma estimation stays total.
template <class T>
TensorT<T> minmax_normalize(const TensorT<T>& x) {
  T lo = x[0], hi = x[0];
  for (std::int64_t i = 1; i < x.numel(); ++i) {
    lo = std::min(lo, x[i]);
    hi = std::max(hi, x[i]);
  }
  const double range = static_cast<double>(hi) - static_cast<double>(lo);
  if (range < 1e-12) return TensorT<T>(x.shape(), static_cast<T>(0.5));
  TensorT<T> out(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    out[i] = static_cast<T>((static_cast<double>(x[i]) - static_cast<double>(lo)) / range);
  }
  return out;
}

template <class T>
GammaParams estimate_gamma(const TensorT<T>& x, double mu_out = kDefaultMuOut) {
  if (mu_out <= 0.0 || mu_out >= 1.0) throw ValueError("estimate_gamma: mu_out must lie in (0,1)");
  TensorT<T> normalized = minmax_normalize(x);
  GammaParams params;
  params.mu_out = mu_out;
  params.mu_in = std::clamp(mean_value(normalized), 1e-3, 1.0 - 1e-3);
  params.gamma = gamma_from_means(params.mu_in, mu_out);
  return params;
}

// Elementwise power of a [0,1] map; 0^gamma is 0. Monotone nondecreasing.
template <class T>
TensorT<T> gamma_transform(const TensorT<T>& x_normalized, double gamma) {
  if (gamma <= 0.0) throw ValueError("gamma_transform: gamma must be positive");
  TensorT<T> out(x_normalized.shape());
  for (std::int64_t i = 0; i < x_normalized.numel(); ++i) {
    const double v = static_cast<double>(x_normalized[i]);
    if (v < -1e-6 || v > 1.0 + 1e-6) {
      throw ValueError("gamma_transform: input values must lie in [0,1]");
    }
    out[i] = static_cast<T>(std::pow(std::clamp(v, 0.0, 1.0), gamma));
  }
  check_finite(out, "gamma_transform");
  return out;
}

// ---------------------------------------------------------------------------
// Pixel-adaptive filter bank

// Per-pixel u_p x u_p kernels stored as (u_p^2, H, W); in the default
// softmax mode each per-pixel kernel sums to 1.
template <class T>
struct FilterBankT {
  int u_p = 5;
  TensorT<T> kernels;
  bool normalized = true;
};

using FilterBank = FilterBankT<float>;

// Filter-generator parameters: two residual blocks plus a 1x1 projection
// emitting one channel per kernel tap.
template <class T>
struct LamParamsT {
  int in_channels = 0;
  int u_p = 5;
  ConvSpecT<T> res1_a, res1_b, res2_a, res2_b;
  NormAffineT<T> norm1_a, norm1_b, norm2_a, norm2_b;
  ConvSpecT<T> proj;  // 1x1, in_channels -> u_p^2
};

using LamParams = LamParamsT<float>;

// Draw order: res1_a, res1_b, res2_a, res2_b, proj.
template <class T>
LamParamsT<T> make_lam_params(int in_channels, int u_p, Rng& rng) {
  if (u_p < 1 || u_p % 2 == 0) throw ValueError("lam: u_p must be odd and >= 1");
  LamParamsT<T> p;
  p.in_channels = in_channels;
  p.u_p = u_p;
  p.res1_a = make_conv<T>(in_channels, in_channels, rng);
  p.res1_b = make_conv<T>(in_channels, in_channels, rng);
  p.res2_a = make_conv<T>(in_channels, in_channels, rng);
  p.res2_b = make_conv<T>(in_channels, in_channels, rng);
  p.norm1_a = make_identity_affine<T>(in_channels);
  p.norm1_b = make_identity_affine<T>(in_channels);
  p.norm2_a = make_identity_affine<T>(in_channels);
  p.norm2_b = make_identity_affine<T>(in_channels);
  p.proj = make_conv<T>(in_channels, u_p * u_p, rng, 1, 1, 0);
  return p;
}

template <class T>
std::int64_t param_count(const LamParamsT<T>& p) {
  return param_count(p.res1_a) + param_count(p.res1_b) + param_count(p.res2_a) +
         param_count(p.res2_b) + param_count(p.norm1_a) + param_count(p.norm1_b) +
         param_count(p.norm2_a) + param_count(p.norm2_b) + param_count(p.proj);
}

namespace detail {

template <class T>
TensorT<T> residual_block(const TensorT<T>& x, const ConvSpecT<T>& conv_a,
                          const NormAffineT<T>& norm_a, const ConvSpecT<T>& conv_b,
                          const NormAffineT<T>& norm_b) {
  TensorT<T> h = activate(normalize_layer(conv2d(x, conv_a), norm_a), Activation::kRelu);
  h = normalize_layer(conv2d(h, conv_b), norm_b);
  return activate(zip(h, x, [](T a, T b) { return a + b; }), Activation::kRelu);
}

}  // namespace detail

// Y -> avgpool(2,2) -> maxpool(2,2) -> two residual blocks -> 1x1 conv to
// u_p^2 channels -> bilinear restore to H x W -> per-pixel softmax over the
// kernel taps (skipped when normalize is false, the --raw-kernels knob).
template <class T>
FilterBankT<T> build_filter_bank(const TensorT<T>& y, const LamParamsT<T>& params,
                                 bool normalize = true) {
  if (y.rank() != 3) throw ShapeError("build_filter_bank: input must be rank-3 (C,H,W)");
  const int h = y.extent(1), w = y.extent(2);
  if (h < 4 || w < 4) {
    throw ShapeError("build_filter_bank: pooling underflow, spatial extent must be >= 4");
  }
  if (y.extent(0) != params.in_channels) {
    throw ShapeError("build_filter_bank: channel axis mismatch");
  }
  TensorT<T> f = pool2d(y, PoolKind::kAvg, 2, 2);
  f = pool2d(f, PoolKind::kMax, 2, 2);
  f = detail::residual_block(f, params.res1_a, params.norm1_a, params.res1_b, params.norm1_b);
  f = detail::residual_block(f, params.res2_a, params.norm2_a, params.res2_b, params.norm2_b);
  f = conv2d(f, params.proj);
  f = resize_bilinear(f, h, w);

  FilterBankT<T> bank;
  bank.u_p = params.u_p;
  bank.normalized = normalize;
  if (!normalize) {
    bank.kernels = std::move(f);
    return bank;
  }
  const int taps = params.u_p * params.u_p;
  bank.kernels = TensorT<T>(f.shape());
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      double hi = static_cast<double>(f.at(0, yy, xx));
      for (int t = 1; t < taps; ++t) hi = std::max(hi, static_cast<double>(f.at(t, yy, xx)));
      double sum = 0.0;
      for (int t = 0; t < taps; ++t) {
        const double e = std::exp(static_cast<double>(f.at(t, yy, xx)) - hi);
        bank.kernels.at(t, yy, xx) = static_cast<T>(e);
        sum += e;
      }
      for (int t = 0; t < taps; ++t) {
        bank.kernels.at(t, yy, xx) = static_cast<T>(bank.kernels.at(t, yy, xx) / sum);
      }
    }
  }
  check_finite(bank.kernels, "build_filter_bank");
  return bank;
}

// X_hat(x) = sum over the zero-padded u_p x u_p patch of kernel * patch,
// the per-pixel kernel shared across channels.
template <class T>
TensorT<T> apply_filter_bank(const TensorT<T>& x, const FilterBankT<T>& bank) {
  if (x.rank() != 3) throw ShapeError("apply_filter_bank: input must be rank-3 (C,H,W)");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  if (bank.kernels.extent(1) != h || bank.kernels.extent(2) != w) {
    throw ShapeError("apply_filter_bank: bank spatial extent does not match input");
  }
  if (bank.kernels.extent(0) != bank.u_p * bank.u_p) {
    throw ShapeError("apply_filter_bank: kernel tap count does not match u_p");
  }
  const int r = bank.u_p / 2;
  TensorT<T> out({c, h, w});
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          const int iy = y + dy;
          if (iy < 0 || iy >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            const int ix = xx + dx;
            if (ix < 0 || ix >= w) continue;
            const int tap = (dy + r) * bank.u_p + (dx + r);
            acc += static_cast<double>(bank.kernels.at(tap, y, xx)) *
                   static_cast<double>(x.at(ch, iy, ix));
          }
        }
        out.at(ch, y, xx) = static_cast<T>(acc);
      }
    }
  }
  check_finite(out, "apply_filter_bank");
  return out;
}

// ---------------------------------------------------------------------------
// Illumination map and adjustment losses

// S relates input to enhanced luminance per pixel; alpha = Y_H / Y_L with
// Y_H the 0.5 normal-light reference and Y_L the input luminance mean.
template <class T>
struct IlluminationMapT {
  TensorT<T> s;
  double alpha = 1.0;
  double beta = kBeta;
  double y_high = kYHigh;
  double y_low = 0.5;
  bool clamped = false;  // any pixel hit the [1e-3, 1e3] clamp
};

using IlluminationMap = IlluminationMapT<float>;

// S(x) = I_lum(x) / (E_lum(x) + 1e-6), clamped to [1e-3, 1e3].
template <class T>
IlluminationMapT<T> derive_illumination(const TensorT<T>& input_lum,
                                        const TensorT<T>& enhanced_lum) {
  if (input_lum.rank() != 2 || enhanced_lum.rank() != 2) {
    throw ShapeError("derive_illumination: luminance maps must be rank-2 (H,W)");
  }
  if (!input_lum.same_shape(enhanced_lum)) {
    throw ShapeError("derive_illumination: map extents differ");
  }
  IlluminationMapT<T> illum;
  illum.s = TensorT<T>(input_lum.shape());
  for (std::int64_t i = 0; i < input_lum.numel(); ++i) {
    const double raw =
        static_cast<double>(input_lum[i]) / (static_cast<double>(enhanced_lum[i]) + 1e-6);
    const double clamped = std::clamp(raw, 1e-3, 1e3);
    if (clamped != raw) illum.clamped = true;
    illum.s[i] = static_cast<T>(clamped);
  }
  illum.y_low = mean_value(input_lum);
  illum.alpha = illum.y_high / std::max(illum.y_low, 1e-9);
  return illum;
}

template <class T>
struct IllumLossT {
  T loss = T{0};
  TensorT<T> grad;  // d loss / d S
};

// Overall adjustment loss: mean over pixels of (S - alpha^-1)^2.
template <class T>
IllumLossT<T> l_over(const IlluminationMapT<T>& illum) {
  if (illum.y_low <= 0.0) throw ValueError("l_over: input luminance mean must be positive");
  const double alpha_inv = illum.y_low / illum.y_high;
  const double n = static_cast<double>(illum.s.numel());
  IllumLossT<T> out;
  out.grad = TensorT<T>(illum.s.shape());
  double acc = 0.0;
  for (std::int64_t i = 0; i < illum.s.numel(); ++i) {
    const double d = static_cast<double>(illum.s[i]) - alpha_inv;
    acc += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.loss = static_cast<T>(acc / n);
  return out;
}

// Pixel-by-pixel adjustment loss: mean over pixels of
// (S - beta * (alpha * I)^alpha)^2, with beta = 0.7 and exponent alpha.
template <class T>
IllumLossT<T> l_pix(const IlluminationMapT<T>& illum, const TensorT<T>& input_lum) {
  if (input_lum.rank() != 2) throw ShapeError("l_pix: luminance map must be rank-2 (H,W)");
  if (!illum.s.same_shape(input_lum)) throw ShapeError("l_pix: map extents differ");
  const double n = static_cast<double>(illum.s.numel());
  IllumLossT<T> out;
  out.grad = TensorT<T>(illum.s.shape());
  double acc = 0.0;
  for (std::int64_t i = 0; i < illum.s.numel(); ++i) {
    const double scaled = illum.alpha * static_cast<double>(input_lum[i]);
    if (scaled <= 0.0) throw ValueError("l_pix: alpha * I must be positive at every pixel");
    const double target = illum.beta * std::pow(scaled, illum.alpha);
    const double d = static_cast<double>(illum.s[i]) - target;
    acc += d * d;
    out.grad[i] = static_cast<T>(2.0 * d / n);
  }
  out.loss = static_cast<T>(acc / n);
  if (!std::isfinite(static_cast<double>(out.loss))) throw NumericError("l_pix: non-finite loss");
  return out;
}

}  // namespace darksight::lam
