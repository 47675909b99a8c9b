#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "darksight/error.hpp"
#include "darksight/tensor.hpp"

namespace darksight::ram {

// ---------------------------------------------------------------------------
// Linear layer and transformer block primitives

template <class T>
struct LinearT {
  TensorT<T> weight;  // out x in
  TensorT<T> bias;    // out
};

using Linear = LinearT<float>;

template <class T>
LinearT<T> make_zero_linear(int in_features, int out_features) {
  LinearT<T> l;
  l.weight = TensorT<T>({out_features, in_features});
  l.bias = TensorT<T>({out_features});
  return l;
}

template <class T>
LinearT<T> make_linear(int in_features, int out_features, Rng& rng) {
  LinearT<T> l = make_zero_linear<T>(in_features, out_features);
  const double b = fan_in_bound(in_features);
  for (std::int64_t i = 0; i < l.weight.numel(); ++i) l.weight[i] = static_cast<T>(rng.uniform(-b, b));
  for (std::int64_t i = 0; i < l.bias.numel(); ++i) l.bias[i] = static_cast<T>(rng.uniform(-b, b));
  return l;
}

template <class T>
std::int64_t param_count(const LinearT<T>& l) {
  return l.weight.numel() + l.bias.numel();
}

// tokens: N x in -> N x out
template <class T>
TensorT<T> linear_tokens(const TensorT<T>& tokens, const LinearT<T>& l) {
  if (tokens.rank() != 2) throw ShapeError("linear: tokens must be rank-2 (N,C)");
  const int n = tokens.extent(0), in = tokens.extent(1);
  if (l.weight.extent(1) != in) throw ShapeError("linear: feature axis mismatch");
  const int out_f = l.weight.extent(0);
  TensorT<T> out({n, out_f});
  for (int i = 0; i < n; ++i) {
    for (int o = 0; o < out_f; ++o) {
      double acc = static_cast<double>(l.bias.at(o));
      for (int j = 0; j < in; ++j) {
        acc += static_cast<double>(tokens.at(i, j)) * static_cast<double>(l.weight.at(o, j));
      }
      out.at(i, o) = static_cast<T>(acc);
    }
  }
  return out;
}

// Per-token normalization across the channel axis (classic pre-norm LN).
template <class T>
TensorT<T> layer_norm_tokens(const TensorT<T>& tokens, const NormAffineT<T>& affine) {
  if (tokens.rank() != 2) throw ShapeError("layer_norm: tokens must be rank-2 (N,C)");
  const int n = tokens.extent(0), c = tokens.extent(1);
  if (affine.scale.numel() != c) throw ShapeError("layer_norm: affine length mismatch");
  const double eps = 1e-6;
  TensorT<T> out(tokens.shape());
  for (int i = 0; i < n; ++i) {
    double mean = 0.0;
    for (int j = 0; j < c; ++j) mean += static_cast<double>(tokens.at(i, j));
    mean /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      const double d = static_cast<double>(tokens.at(i, j)) - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < c; ++j) {
      out.at(i, j) = static_cast<T>((static_cast<double>(tokens.at(i, j)) - mean) * inv *
                                        static_cast<double>(affine.scale.at(j)) +
                                    static_cast<double>(affine.shift.at(j)));
    }
  }
  return out;
}

// Single-head scaled dot-product self-attention over tokens.
template <class T>
TensorT<T> self_attention(const TensorT<T>& tokens, const LinearT<T>& wq, const LinearT<T>& wk,
                          const LinearT<T>& wv, const LinearT<T>& wo) {
  const int n = tokens.extent(0), c = tokens.extent(1);
  TensorT<T> q = linear_tokens(tokens, wq);
  TensorT<T> k = linear_tokens(tokens, wk);
  TensorT<T> v = linear_tokens(tokens, wv);
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  TensorT<T> ctx({n, c});
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double hi = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int d = 0; d < c; ++d) {
        acc += static_cast<double>(q.at(i, d)) * static_cast<double>(k.at(j, d));
      }
      row[static_cast<std::size_t>(j)] = acc * scale;
      hi = std::max(hi, row[static_cast<std::size_t>(j)]);
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - hi);
      sum += row[static_cast<std::size_t>(j)];
    }
    for (int d = 0; d < c; ++d) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        acc += row[static_cast<std::size_t>(j)] / sum * static_cast<double>(v.at(j, d));
      }
      ctx.at(i, d) = static_cast<T>(acc);
    }
  }
  return linear_tokens(ctx, wo);
}

// Pre-norm block: x += Attn(LN(x)); x += MLP(LN(x)). With every linear
// zeroed the block is exactly the identity.
template <class T>
struct BlockParamsT {
  NormAffineT<T> ln1, ln2;
  LinearT<T> wq, wk, wv, wo;
  LinearT<T> mlp_in, mlp_out;  // C -> ratio*C -> C
};

using BlockParams = BlockParamsT<float>;

template <class T>
BlockParamsT<T> make_zero_block(int channels, int mlp_ratio = 2) {
  BlockParamsT<T> b;
  b.ln1 = make_identity_affine<T>(channels);
  b.ln2 = make_identity_affine<T>(channels);
  b.wq = make_zero_linear<T>(channels, channels);
  b.wk = make_zero_linear<T>(channels, channels);
  b.wv = make_zero_linear<T>(channels, channels);
  b.wo = make_zero_linear<T>(channels, channels);
  b.mlp_in = make_zero_linear<T>(channels, mlp_ratio * channels);
  b.mlp_out = make_zero_linear<T>(mlp_ratio * channels, channels);
  return b;
}

// Draw order: wq, wk, wv, wo, mlp_in, mlp_out; LN affines identity.
template <class T>
BlockParamsT<T> make_block(int channels, Rng& rng, int mlp_ratio = 2) {
  BlockParamsT<T> b;
  b.ln1 = make_identity_affine<T>(channels);
  b.ln2 = make_identity_affine<T>(channels);
  b.wq = make_linear<T>(channels, channels, rng);
  b.wk = make_linear<T>(channels, channels, rng);
  b.wv = make_linear<T>(channels, channels, rng);
  b.wo = make_linear<T>(channels, channels, rng);
  b.mlp_in = make_linear<T>(channels, mlp_ratio * channels, rng);
  b.mlp_out = make_linear<T>(mlp_ratio * channels, channels, rng);
  return b;
}

template <class T>
std::int64_t param_count(const BlockParamsT<T>& b) {
  return param_count(b.ln1) + param_count(b.ln2) + param_count(b.wq) + param_count(b.wk) +
         param_count(b.wv) + param_count(b.wo) + param_count(b.mlp_in) + param_count(b.mlp_out);
}

namespace detail {

template <class T>
TensorT<T> to_tokens(const TensorT<T>& x) {
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  TensorT<T> tokens({h * w, c});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) tokens.at(y * w + xx, ch) = x.at(ch, y, xx);
  return tokens;
}

template <class T>
TensorT<T> from_tokens(const TensorT<T>& tokens, int c, int h, int w) {
  TensorT<T> x({c, h, w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) x.at(ch, y, xx) = tokens.at(y * w + xx, ch);
  return x;
}

}  // namespace detail

template <class T>
TensorT<T> transformer_block(const TensorT<T>& x, const BlockParamsT<T>& block) {
  if (x.rank() != 3) throw ShapeError("transformer_block: input must be rank-3 (C,H,W)");
  const int c = x.extent(0), h = x.extent(1), w = x.extent(2);
  TensorT<T> tokens = detail::to_tokens(x);
  TensorT<T> attn = self_attention(layer_norm_tokens(tokens, block.ln1), block.wq, block.wk,
                                   block.wv, block.wo);
  tokens = zip(tokens, attn, [](T a, T b) { return a + b; });
  TensorT<T> hidden = activate(linear_tokens(layer_norm_tokens(tokens, block.ln2), block.mlp_in),
                               Activation::kRelu);
  TensorT<T> mlp = linear_tokens(hidden, block.mlp_out);
  tokens = zip(tokens, mlp, [](T a, T b) { return a + b; });
  TensorT<T> out = detail::from_tokens(tokens, c, h, w);
  check_finite(out, "transformer_block");
  return out;
}

// ---------------------------------------------------------------------------
// Backbone

// The main pathway runs several blocks per stage while the reflected
// pathway keeps a single block, so the reflected parameter overhead stays
// small relative to the backbone.
struct BackboneConfig {
  int input_channels = 16;
  std::vector<int> stage_channels{16, 32, 64};
  int main_blocks_per_stage = 8;
  int mlp_ratio = 2;
  int attention_heads = 1;  // single head keeps the zero-weight identity exact
  int num_classes = 101;
};

template <class T>
struct StageParamsT {
  ConvSpecT<T> down;  // 3x3 stride-2
  std::vector<BlockParamsT<T>> main_blocks;
  BlockParamsT<T> reflected;
  ConvSpecT<T> fuse;  // 1x1, 2C -> C
};

template <class T>
struct RamParamsT {
  BackboneConfig config;
  std::vector<StageParamsT<T>> stages;
  LinearT<T> head;
};

using RamParams = RamParamsT<float>;

// Draw order per stage: down conv, main blocks in order, reflected block,
// fuse conv; head last.
template <class T>
RamParamsT<T> make_ram_params(const BackboneConfig& config, Rng& rng) {
  if (config.stage_channels.empty()) throw ValueError("ram: need at least one stage");
  for (std::size_t i = 1; i < config.stage_channels.size(); ++i) {
    if (config.stage_channels[i] <= config.stage_channels[i - 1]) {
      throw ValueError("ram: stage channel list must be strictly increasing");
    }
  }
  if (config.attention_heads != 1) throw ValueError("ram: only single-head attention is built");
  RamParamsT<T> p;
  p.config = config;
  int in_ch = config.input_channels;
  for (int out_ch : config.stage_channels) {
    StageParamsT<T> stage;
    stage.down = make_conv<T>(in_ch, out_ch, rng, 3, 2, 1);
    stage.main_blocks.reserve(static_cast<std::size_t>(config.main_blocks_per_stage));
    for (int b = 0; b < config.main_blocks_per_stage; ++b) {
      stage.main_blocks.push_back(make_block<T>(out_ch, rng, config.mlp_ratio));
    }
    stage.reflected = make_block<T>(out_ch, rng, config.mlp_ratio);
    stage.fuse = make_conv<T>(2 * out_ch, out_ch, rng, 1, 1, 0);
    p.stages.push_back(std::move(stage));
    in_ch = out_ch;
  }
  p.head = make_linear<T>(config.stage_channels.back(), config.num_classes, rng);
  return p;
}

template <class T>
struct StageOutputT {
  TensorT<T> main;       // f1 output
  TensorT<T> reflected;  // f2(f1) output, same shape
  TensorT<T> fused;      // projection of concat(reflected, main)
};

// X_{i+1} = proj( f2(f1(X)) (c) f1(X) ), halving each spatial axis.
template <class T>
StageOutputT<T> stage_forward(const TensorT<T>& x, const StageParamsT<T>& stage) {
  StageOutputT<T> out;
  TensorT<T> main = conv2d(x, stage.down);
  for (const auto& block : stage.main_blocks) main = transformer_block(main, block);
  out.main = main;
  out.reflected = transformer_block(main, stage.reflected);
  out.fused = conv2d(concat_channels(out.reflected, out.main), stage.fuse);
  return out;
}

template <class T>
TensorT<T> backbone_forward(const TensorT<T>& x, const RamParamsT<T>& params) {
  TensorT<T> f = x;
  for (const auto& stage : params.stages) f = stage_forward(f, stage).fused;
  return f;
}

// ---------------------------------------------------------------------------
// Classification head

template <class T>
struct PredictionT {
  TensorT<T> logits;
  TensorT<T> probs;
  int top1 = 0;
};

using Prediction = PredictionT<float>;

template <class T>
TensorT<T> softmax_vector(const TensorT<T>& logits) {
  if (logits.rank() != 1) throw ShapeError("softmax: logits must be rank-1");
  double hi = static_cast<double>(logits[0]);
  for (std::int64_t i = 1; i < logits.numel(); ++i) {
    hi = std::max(hi, static_cast<double>(logits[i]));
  }
  TensorT<T> probs(logits.shape());
  double sum = 0.0;
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - hi);
    probs[i] = static_cast<T>(e);
    sum += e;
  }
  for (std::int64_t i = 0; i < probs.numel(); ++i) {
    probs[i] = static_cast<T>(static_cast<double>(probs[i]) / sum);
  }
  return probs;
}

template <class T>
PredictionT<T> predict_from_logits(TensorT<T> logits) {
  PredictionT<T> pred;
  pred.probs = softmax_vector(logits);
  pred.logits = std::move(logits);
  pred.top1 = 0;
  for (std::int64_t i = 1; i < pred.logits.numel(); ++i) {
    if (pred.logits[i] > pred.logits[pred.top1]) pred.top1 = static_cast<int>(i);
  }
  return pred;
}

// Temporal mean over the per-pair feature maps, then stages, global average
// pool, linear head, softmax.
template <class T>
PredictionT<T> classify_clip(const std::vector<TensorT<T>>& features, const RamParamsT<T>& params) {
  if (features.empty()) throw ValueError("classify_clip: need at least one feature map");
  TensorT<T> mean = features[0];
  for (std::size_t i = 1; i < features.size(); ++i) {
    if (!features[i].same_shape(mean)) throw ShapeError("classify_clip: feature shapes differ");
    mean = zip(mean, features[i], [](T a, T b) { return a + b; });
  }
  const T inv = static_cast<T>(1.0 / static_cast<double>(features.size()));
  mean = map(mean, [inv](T v) { return v * inv; });

  TensorT<T> f = backbone_forward(mean, params);
  const int c = f.extent(0);
  TensorT<T> pooled({c});
  const std::int64_t plane = static_cast<std::int64_t>(f.extent(1)) * f.extent(2);
  for (int ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(f.data()[ch * plane + i]);
    pooled.at(ch) = static_cast<T>(acc / static_cast<double>(plane));
  }
  TensorT<T> pooled_row({1, c});
  std::copy(pooled.data(), pooled.data() + c, pooled_row.data());
  TensorT<T> logits_row = linear_tokens(pooled_row, params.head);
  TensorT<T> logits({params.config.num_classes});
  std::copy(logits_row.data(), logits_row.data() + logits_row.numel(), logits.data());
  check_finite(logits, "classify_clip");
  return predict_from_logits(std::move(logits));
}

// ---------------------------------------------------------------------------
// Losses

template <class T>
struct CeResultT {
  T loss = T{0};
  TensorT<T> dlogits;  // probs - onehot(y)
  bool clamped = false;
};

// loss = -log(probs[y]); probs[y] floored at 1e-12 with a flag.
template <class T>
CeResultT<T> cross_entropy(const PredictionT<T>& pred, int y) {
  if (y < 0 || y >= pred.probs.numel()) throw ValueError("cross_entropy: class index out of range");
  CeResultT<T> out;
  double p = static_cast<double>(pred.probs[y]);
  if (p < 1e-12) {
    p = 1e-12;
    out.clamped = true;
  }
  out.loss = static_cast<T>(-std::log(p));
  out.dlogits = pred.probs;
  out.dlogits[y] = static_cast<T>(static_cast<double>(out.dlogits[y]) - 1.0);
  return out;
}

// L_total = L_TC + (L_over + L_pix) + L_CE, unit weights.
template <class T>
T total_loss(T l_tc, T l_over, T l_pix, T l_ce) {
  for (T v : {l_tc, l_over, l_pix, l_ce}) {
    if (!std::isfinite(static_cast<double>(v))) {
      throw NumericError("total_loss: non-finite component");
    }
  }
  return l_tc + (l_over + l_pix) + l_ce;
}

// ---------------------------------------------------------------------------
// Parameter accounting

struct ParamCounts {
  std::int64_t downsample = 0;
  std::int64_t main_blocks = 0;
  std::int64_t reflected = 0;
  std::int64_t fuse = 0;
  std::int64_t head = 0;

  std::int64_t backbone_without_reflected() const {
    return downsample + main_blocks + fuse + head;
  }
  std::int64_t total() const { return backbone_without_reflected() + reflected; }
  double reflected_overhead() const {
    return static_cast<double>(reflected) / static_cast<double>(backbone_without_reflected());
  }
};

template <class T>
ParamCounts count_params(const RamParamsT<T>& params) {
  ParamCounts counts;
  for (const auto& stage : params.stages) {
    counts.downsample += param_count(stage.down);
    for (const auto& b : stage.main_blocks) counts.main_blocks += param_count(b);
    counts.reflected += param_count(stage.reflected);
    counts.fuse += param_count(stage.fuse);
  }
  counts.head = param_count(params.head);
  return counts;
}

}  // namespace darksight::ram
