#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "darksight/error.hpp"
#include "darksight/tensor.hpp"

namespace darksight::tcm {

// Paired-frame shallow encoder. The pre-split stack maps the 6-channel
// frame pair to 2C channels over three conv/norm/relu stages; the two
// gate convolutions preserve C channels each; the post-fusion stack mixes
// the fused C-channel features with conv+norm three times.
template <class T>
struct TcmParamsT {
  int base_channels = 16;  // C
  std::array<ConvSpecT<T>, 3> pre;
  std::array<NormAffineT<T>, 3> pre_norm;
  ConvSpecT<T> gate1, gate2;
  std::array<ConvSpecT<T>, 3> post;
  std::array<NormAffineT<T>, 3> post_norm;
};

using TcmParams = TcmParamsT<float>;

// Draw order: pre[0..2], gate1, gate2, post[0..2]; norm affines are
// identity-initialized and consume no draws.
template <class T>
TcmParamsT<T> make_tcm_params(int base_channels, Rng& rng) {
  if (base_channels < 1) throw ValueError("tcm: base_channels must be >= 1");
  const int c = base_channels;
  TcmParamsT<T> p;
  p.base_channels = c;
  p.pre[0] = make_conv<T>(6, c, rng);
  p.pre[1] = make_conv<T>(c, 2 * c, rng);
  p.pre[2] = make_conv<T>(2 * c, 2 * c, rng);
  p.pre_norm[0] = make_identity_affine<T>(c);
  p.pre_norm[1] = make_identity_affine<T>(2 * c);
  p.pre_norm[2] = make_identity_affine<T>(2 * c);
  p.gate1 = make_conv<T>(c, c, rng);
  p.gate2 = make_conv<T>(c, c, rng);
  for (int i = 0; i < 3; ++i) {
    p.post[static_cast<std::size_t>(i)] = make_conv<T>(c, c, rng);
    p.post_norm[static_cast<std::size_t>(i)] = make_identity_affine<T>(c);
  }
  return p;
}

template <class T>
std::int64_t param_count(const TcmParamsT<T>& p) {
  std::int64_t n = 0;
  for (const auto& c : p.pre) n += param_count(c);
  for (const auto& a : p.pre_norm) n += param_count(a);
  n += param_count(p.gate1) + param_count(p.gate2);
  for (const auto& c : p.post) n += param_count(c);
  for (const auto& a : p.post_norm) n += param_count(a);
  return n;
}

// z = F1 * sigmoid(conv(F1)) + F2 * sigmoid(conv(F2)), where F1/F2 are the
// even channel split of the pre-split features.
template <class T>
TensorT<T> gated_split_fusion(const TensorT<T>& f_tilde, const ConvSpecT<T>& gate1,
                              const ConvSpecT<T>& gate2) {
  if (f_tilde.rank() != 3) throw ShapeError("gated_split_fusion: input must be rank-3");
  const int channels = f_tilde.extent(0);
  if (channels % 2 != 0) throw ShapeError("gated_split_fusion: channel count must be even");
  const int half = channels / 2;
  TensorT<T> f1 = slice_channels(f_tilde, 0, half);
  TensorT<T> f2 = slice_channels(f_tilde, half, channels);
  TensorT<T> g1 = activate(conv2d(f1, gate1), Activation::kSigmoid);
  TensorT<T> g2 = activate(conv2d(f2, gate2), Activation::kSigmoid);
  TensorT<T> z = zip(f1, g1, [](T a, T b) { return a * b; });
  TensorT<T> z2 = zip(f2, g2, [](T a, T b) { return a * b; });
  return zip(z, z2, [](T a, T b) { return a + b; });
}

// Forward pass over a [0,1]-normalized frame stack (T,3,H,W). Emits one
// C-channel feature map per adjacent frame pair, spatial extent preserved.
template <class T>
std::vector<TensorT<T>> tcm_forward(const TensorT<T>& frames, const TcmParamsT<T>& params) {
  if (frames.rank() != 4) throw ShapeError("tcm_forward: frames must be rank-4 (T,C,H,W)");
  const int t_count = frames.extent(0);
  if (t_count < 2) throw ShapeError("tcm_forward: need at least 2 frames");
  const int c = frames.extent(1), h = frames.extent(2), w = frames.extent(3);
  if (c != 3) throw ShapeError("tcm_forward: frames must have 3 channels");

  std::vector<TensorT<T>> features;
  features.reserve(static_cast<std::size_t>(t_count - 1));
  for (int t = 0; t + 1 < t_count; ++t) {
    TensorT<T> pair({6, h, w});
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          pair.at(ch, y, x) = frames.at(t, ch, y, x);
          pair.at(ch + 3, y, x) = frames.at(t + 1, ch, y, x);
        }
    TensorT<T> f = pair;
    for (std::size_t s = 0; s < 3; ++s) {
      f = activate(normalize_layer(conv2d(f, params.pre[s]), params.pre_norm[s]),
                   Activation::kRelu);
    }
    TensorT<T> z = gated_split_fusion(f, params.gate1, params.gate2);
    for (std::size_t s = 0; s < 3; ++s) {
      z = normalize_layer(conv2d(z, params.post[s]), params.post_norm[s]);
    }
    features.push_back(std::move(z));
  }
  return features;
}

// ---------------------------------------------------------------------------
// RGB difference: per-pixel channel-mean absolute difference, (C,H,W) -> (H,W).

template <class T>
TensorT<T> rgb_diff(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 3 || b.rank() != 3) throw ShapeError("rgb_diff: frames must be rank-3");
  if (!a.same_shape(b)) throw ShapeError("rgb_diff: frame shapes differ");
  const int c = a.extent(0), h = a.extent(1), w = a.extent(2);
  TensorT<T> out({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        acc += std::abs(static_cast<double>(b.at(ch, y, x)) - static_cast<double>(a.at(ch, y, x)));
      }
      out.at(y, x) = static_cast<T>(acc / c);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spatial consistency loss over pooled region means.
//
// Both maps are average-pooled to a grid of region means; the loss is
// (1/K) * sum_i sum_{j in Omega(i)} (|Y_i - Y_j| - |P_i - P_j|)^2 with
// Omega(i) the existing 8-neighbors and K the region count. The returned
// gradient is with respect to the first (Y) map; |.| kinks use subgradient 0.

template <class T>
struct ScfResultT {
  T loss = T{0};
  TensorT<T> grad;  // d loss / d Y, same shape as Y
};

namespace detail {

inline double sign_or_zero(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Region row/col boundaries of an adaptive average pool.
inline int region_lo(int index, int extent, int cells) {
  return static_cast<int>((static_cast<std::int64_t>(index) * extent) / cells);
}
inline int region_hi(int index, int extent, int cells) {
  return static_cast<int>((static_cast<std::int64_t>(index + 1) * extent) / cells);
}

}  // namespace detail

template <class T>
ScfResultT<T> l_scf_grid(const TensorT<T>& y, const TensorT<T>& p, int grid_h, int grid_w) {
  if (y.rank() != 2 || p.rank() != 2) throw ShapeError("l_scf: maps must be rank-2 (H,W)");
  if (!y.same_shape(p)) throw ShapeError("l_scf: map shapes differ");
  if (grid_h < 1 || grid_w < 1) throw ValueError("l_scf: grid must be >= 1");
  const int h = y.extent(0), w = y.extent(1);
  if (grid_h > h || grid_w > w) {
    throw ShapeError("l_scf: grid exceeds map extent " + std::to_string(h) + "x" +
                     std::to_string(w));
  }

  const int k = grid_h * grid_w;
  std::vector<double> ym(static_cast<std::size_t>(k)), pm(static_cast<std::size_t>(k));
  std::vector<double> region_n(static_cast<std::size_t>(k));
  for (int a = 0; a < grid_h; ++a) {
    for (int b = 0; b < grid_w; ++b) {
      const int r0 = detail::region_lo(a, h, grid_h), r1 = detail::region_hi(a, h, grid_h);
      const int c0 = detail::region_lo(b, w, grid_w), c1 = detail::region_hi(b, w, grid_w);
      double sy = 0.0, sp = 0.0;
      for (int yy = r0; yy < r1; ++yy)
        for (int xx = c0; xx < c1; ++xx) {
          sy += static_cast<double>(y.at(yy, xx));
          sp += static_cast<double>(p.at(yy, xx));
        }
      const double n = static_cast<double>((r1 - r0) * (c1 - c0));
      const std::size_t idx = static_cast<std::size_t>(a * grid_w + b);
      ym[idx] = sy / n;
      pm[idx] = sp / n;
      region_n[idx] = n;
    }
  }

  double loss = 0.0;
  std::vector<double> dym(static_cast<std::size_t>(k), 0.0);
  for (int a = 0; a < grid_h; ++a) {
    for (int b = 0; b < grid_w; ++b) {
      const std::size_t i = static_cast<std::size_t>(a * grid_w + b);
      for (int da = -1; da <= 1; ++da) {
        for (int db = -1; db <= 1; ++db) {
          if (da == 0 && db == 0) continue;
          const int na = a + da, nb = b + db;
          if (na < 0 || na >= grid_h || nb < 0 || nb >= grid_w) continue;
          const std::size_t j = static_cast<std::size_t>(na * grid_w + nb);
          const double dy = std::abs(ym[i] - ym[j]);
          const double dp = std::abs(pm[i] - pm[j]);
          const double diff = dy - dp;
          loss += diff * diff;
          const double s = detail::sign_or_zero(ym[i] - ym[j]);
          dym[i] += 2.0 * diff * s;
          dym[j] -= 2.0 * diff * s;
        }
      }
    }
  }
  loss /= static_cast<double>(k);

  ScfResultT<T> result;
  result.loss = static_cast<T>(loss);
  result.grad = TensorT<T>(y.shape());
  for (int a = 0; a < grid_h; ++a) {
    for (int b = 0; b < grid_w; ++b) {
      const std::size_t i = static_cast<std::size_t>(a * grid_w + b);
      const double g = dym[i] / static_cast<double>(k) / region_n[i];
      const int r0 = detail::region_lo(a, h, grid_h), r1 = detail::region_hi(a, h, grid_h);
      const int c0 = detail::region_lo(b, w, grid_w), c1 = detail::region_hi(b, w, grid_w);
      for (int yy = r0; yy < r1; ++yy)
        for (int xx = c0; xx < c1; ++xx) result.grad.at(yy, xx) = static_cast<T>(g);
    }
  }
  return result;
}

template <class T>
ScfResultT<T> l_scf(const TensorT<T>& y, const TensorT<T>& p, int grid) {
  return l_scf_grid(y, p, grid, grid);
}

// ---------------------------------------------------------------------------
// Temporal consistency loss.
//
// With R_t the rgb_diff map of frames (t, t+1), each l_scf argument is the
// absolute difference of consecutive R maps, |R_{t+1} - R_t|, compared
// between the enhanced and input stacks. The sum over the available
// double-difference terms is normalized by 1/(T-1); a two-frame stack has
// no such term and scores 0.

template <class T>
struct TcResultT {
  T loss = T{0};
  TensorT<T> grad;  // d loss / d enhanced, same shape as the enhanced stack
};

template <class T>
TcResultT<T> l_tc(const TensorT<T>& enhanced, const TensorT<T>& input, int grid) {
  if (enhanced.rank() != 4 || input.rank() != 4) {
    throw ShapeError("l_tc: stacks must be rank-4 (T,C,H,W)");
  }
  if (!enhanced.same_shape(input)) throw ShapeError("l_tc: stack shapes differ");
  const int t_count = enhanced.extent(0);
  if (t_count < 2) throw ShapeError("l_tc: need at least 2 frames");
  const int c = enhanced.extent(1), h = enhanced.extent(2), w = enhanced.extent(3);

  auto frame = [&](const TensorT<T>& stack, int t) {
    TensorT<T> f({c, h, w});
    const std::int64_t sz = static_cast<std::int64_t>(c) * h * w;
    std::copy(stack.data() + t * sz, stack.data() + (t + 1) * sz, f.data());
    return f;
  };

  std::vector<TensorT<T>> ry, ri;  // rgb_diff maps per adjacent pair
  ry.reserve(static_cast<std::size_t>(t_count - 1));
  ri.reserve(static_cast<std::size_t>(t_count - 1));
  for (int t = 0; t + 1 < t_count; ++t) {
    ry.push_back(rgb_diff(frame(enhanced, t), frame(enhanced, t + 1)));
    ri.push_back(rgb_diff(frame(input, t), frame(input, t + 1)));
  }

  const double norm = 1.0 / static_cast<double>(t_count - 1);
  double loss = 0.0;
  std::vector<TensorT<T>> d_ry(ry.size(), TensorT<T>({h, w}));

  for (std::size_t t = 0; t + 1 < ry.size(); ++t) {
    TensorT<T> a = zip(ry[t + 1], ry[t], [](T u, T v) { return static_cast<T>(std::abs(u - v)); });
    TensorT<T> b = zip(ri[t + 1], ri[t], [](T u, T v) { return static_cast<T>(std::abs(u - v)); });
    ScfResultT<T> scf = l_scf(a, b, grid);
    loss += static_cast<double>(scf.loss);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double s = detail::sign_or_zero(static_cast<double>(ry[t + 1].at(y, x)) -
                                              static_cast<double>(ry[t].at(y, x)));
        const double g = static_cast<double>(scf.grad.at(y, x)) * s;
        d_ry[t + 1].at(y, x) += static_cast<T>(g);
        d_ry[t].at(y, x) -= static_cast<T>(g);
      }
    }
  }

  TcResultT<T> result;
  result.loss = static_cast<T>(loss * norm);
  result.grad = TensorT<T>(enhanced.shape());
  for (std::size_t t = 0; t < ry.size(); ++t) {
    const int ti = static_cast<int>(t);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gr = static_cast<double>(d_ry[t].at(y, x)) * norm;
        if (gr == 0.0) continue;
        for (int ch = 0; ch < c; ++ch) {
          const double s = detail::sign_or_zero(
              static_cast<double>(enhanced.at(ti + 1, ch, y, x)) -
              static_cast<double>(enhanced.at(ti, ch, y, x)));
          const double g = gr * s / c;
          result.grad.at(ti + 1, ch, y, x) += static_cast<T>(g);
          result.grad.at(ti, ch, y, x) -= static_cast<T>(g);
        }
      }
    }
  }
  return result;
}

}  // namespace darksight::tcm
