#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "darksight/config.hpp"
#include "darksight/gdq.hpp"
#include "darksight/lam.hpp"
#include "darksight/ram.hpp"
#include "darksight/tcm.hpp"
#include "darksight/tensor.hpp"
#include "darksight/video_io.hpp"

namespace darksight::pipeline {

// Parameter draw order for one seed: tcm, lam, ram. Standalone commands
// that build a subset (e.g. enhance) seed a fresh stream of their own.
template <class T>
struct ModelParamsT {
  tcm::TcmParamsT<T> tcm_params;
  lam::LamParamsT<T> lam_params;
  ram::RamParamsT<T> ram_params;
};

template <class T>
ModelParamsT<T> make_model_params(const RunConfig& config) {
  Rng rng(config.seed);
  ModelParamsT<T> model;
  model.tcm_params = tcm::make_tcm_params<T>(config.base_channels, rng);
  model.lam_params = lam::make_lam_params<T>(config.base_channels, config.u_p, rng);
  ram::BackboneConfig backbone;
  backbone.input_channels = config.base_channels;
  backbone.stage_channels = config.stages;
  backbone.main_blocks_per_stage = config.main_blocks;
  backbone.num_classes = config.num_classes;
  model.ram_params = ram::make_ram_params<T>(backbone, rng);
  return model;
}

// One LAM application at the feature level: min-max normalize, gamma
// brighten, build the bank from Y, filter the normalized input features.
template <class T>
struct LamOutputT {
  TensorT<T> enhanced;        // filtered normalized features, in [0,1]
  TensorT<T> normalized;      // the min-max normalized input
  lam::GammaParams gamma;
  T over_loss = T{0};
  T pix_loss = T{0};
};

template <class T>
LamOutputT<T> lam_enhance_features(const TensorT<T>& features, const lam::LamParamsT<T>& params,
                                   double mu_out, bool normalize_kernels = true) {
  LamOutputT<T> out;
  out.normalized = lam::minmax_normalize(features);
  out.gamma = lam::estimate_gamma(features, mu_out);
  TensorT<T> y = lam::gamma_transform(out.normalized, out.gamma.gamma);
  lam::FilterBankT<T> bank = lam::build_filter_bank(y, params, normalize_kernels);
  out.enhanced = lam::apply_filter_bank(out.normalized, bank);

  TensorT<T> input_lum = channel_mean(out.normalized);
  // keep the pixel loss total on maps that contain exact zeros
  input_lum = map(input_lum, [](T v) { return std::max(v, static_cast<T>(1e-6)); });
  TensorT<T> enhanced_lum = channel_mean(out.enhanced);
  lam::IlluminationMapT<T> illum = lam::derive_illumination(input_lum, enhanced_lum);
  out.over_loss = lam::l_over(illum).loss;
  out.pix_loss = lam::l_pix(illum, input_lum).loss;
  return out;
}

namespace detail {

// Errors escaping a pipeline stage carry the stage name, preserving the
// error type so the CLI exit-code mapping still applies.
template <class F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string(stage) + ": " + e.what());
  } catch (const ValueError& e) {
    throw ValueError(std::string(stage) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(stage) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace detail

struct PipelineReport {
  RunConfig config;
  double gamma = 0.0;  // mean over pair features
  double d_v = 0.0;
  std::string light;
  double loss_tc = 0.0;
  double loss_over = 0.0;
  double loss_pix = 0.0;
  double loss_ce = 0.0;
  double loss_total = 0.0;
  int top1 = 0;
  std::vector<double> probs_top5;
  std::vector<int> top5_indices;
  double elapsed_ms = 0.0;  // stderr only, never part of the JSON

  nlohmann::json to_json() const {
    return nlohmann::json{{"config", config.to_json()},
                          {"gamma", gamma},
                          {"D_v", d_v},
                          {"light", light},
                          {"losses",
                           {{"l_tc", loss_tc},
                            {"l_over", loss_over},
                            {"l_pix", loss_pix},
                            {"l_ce", loss_ce}}},
                          {"l_total", loss_total},
                          {"top1", top1},
                          {"top5_indices", top5_indices},
                          {"probs_top5", probs_top5}};
  }
};

// TCM -> LAM -> RAM, forward only. The cross-entropy label defaults to the
// predicted class when no ground truth is supplied.
inline PipelineReport pipeline_run(const io::Clip& clip, const RunConfig& config,
                                   std::optional<int> label = std::nullopt) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();

  PipelineReport report;
  report.config = config;

  gdq::DarknessReport darkness =
      detail::run_stage("gdq", [&] { return gdq::darkness_index(clip, config.tau); });
  report.d_v = darkness.d_v;
  report.light = gdq::to_string(darkness.label);

  io::Clip sampled = detail::run_stage(
      "sampling", [&] { return io::sample_clip(clip, config.num_frames, config.interval); });
  Tensor frames = io::clip_to_real<float>(sampled);

  ModelParamsT<float> model = make_model_params<float>(config);
  std::vector<Tensor> features =
      detail::run_stage("tcm", [&] { return tcm::tcm_forward(frames, model.tcm_params); });

  const int c = features[0].extent(0);
  const int h = features[0].extent(1);
  const int w = features[0].extent(2);
  Tensor input_stack({static_cast<int>(features.size()), c, h, w});
  Tensor enhanced_stack(input_stack.shape());

  double gamma_sum = 0.0, over_sum = 0.0, pix_sum = 0.0;
  std::vector<Tensor> enhanced_features;
  enhanced_features.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    LamOutputT<float> lam_out = detail::run_stage("lam", [&] {
      return lam_enhance_features(features[i], model.lam_params, config.mu_out);
    });
    gamma_sum += lam_out.gamma.gamma;
    over_sum += static_cast<double>(lam_out.over_loss);
    pix_sum += static_cast<double>(lam_out.pix_loss);
    const std::int64_t sz = lam_out.enhanced.numel();
    std::copy(lam_out.normalized.data(), lam_out.normalized.data() + sz,
              input_stack.data() + static_cast<std::int64_t>(i) * sz);
    std::copy(lam_out.enhanced.data(), lam_out.enhanced.data() + sz,
              enhanced_stack.data() + static_cast<std::int64_t>(i) * sz);
    enhanced_features.push_back(std::move(lam_out.enhanced));
  }
  report.gamma = gamma_sum / static_cast<double>(features.size());
  report.loss_over = over_sum / static_cast<double>(features.size());
  report.loss_pix = pix_sum / static_cast<double>(features.size());

  if (features.size() >= 2) {
    report.loss_tc = detail::run_stage("tcm", [&] {
      return static_cast<double>(tcm::l_tc(enhanced_stack, input_stack, config.grid).loss);
    });
  }

  ram::Prediction pred = detail::run_stage(
      "ram", [&] { return ram::classify_clip(enhanced_features, model.ram_params); });
  report.top1 = pred.top1;
  const int y = label.value_or(pred.top1);
  report.loss_ce = static_cast<double>(ram::cross_entropy(pred, y).loss);
  report.loss_total =
      ram::total_loss(report.loss_tc, report.loss_over, report.loss_pix, report.loss_ce);

  std::vector<int> order(static_cast<std::size_t>(pred.probs.numel()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (pred.probs[a] != pred.probs[b]) return pred.probs[a] > pred.probs[b];
    return a < b;
  });
  const std::size_t top_n = std::min<std::size_t>(5, order.size());
  for (std::size_t i = 0; i < top_n; ++i) {
    report.top5_indices.push_back(order[i]);
    report.probs_top5.push_back(static_cast<double>(pred.probs[order[i]]));
  }

  report.elapsed_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Parameter sweep: one CSV row of loss columns per value

struct SweepRow {
  std::string param;
  double value = 0.0;
  double loss_tc = 0.0;
  double loss_over = 0.0;
  double loss_pix = 0.0;
  double loss_ce = 0.0;
  double loss_total = 0.0;
};

inline void validate_sweep_value(const std::string& param, double value) {
  if (param == "mu_out") {
    if (value <= 0.0 || value >= 1.0) {
      throw ValueError("sweep: mu_out value " + std::to_string(value) + " outside (0,1)");
    }
  } else if (param == "u_p") {
    const int up = static_cast<int>(value);
    if (static_cast<double>(up) != value || up < 1 || up % 2 == 0) {
      throw ValueError("sweep: u_p value must be an odd integer >= 1");
    }
  } else if (param == "grid") {
    const int g = static_cast<int>(value);
    if (static_cast<double>(g) != value || g < 1) {
      throw ValueError("sweep: grid value must be an integer >= 1");
    }
  } else {
    throw ValueError("sweep: unknown parameter '" + param + "'");
  }
}

inline std::vector<SweepRow> sweep(const std::string& param, const std::vector<double>& values,
                                   const std::vector<io::Clip>& clips, const RunConfig& base) {
  if (values.empty()) throw ValueError("sweep: need at least one value");
  if (clips.empty()) throw ValueError("sweep: need at least one clip");
  for (double v : values) validate_sweep_value(param, v);

  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig config = base;
    if (param == "mu_out") config.mu_out = v;
    if (param == "u_p") config.u_p = static_cast<int>(v);
    if (param == "grid") config.grid = static_cast<int>(v);
    SweepRow row;
    row.param = param;
    row.value = v;
    for (const auto& clip : clips) {
      PipelineReport r = pipeline_run(clip, config);
      row.loss_tc += r.loss_tc;
      row.loss_over += r.loss_over;
      row.loss_pix += r.loss_pix;
      row.loss_ce += r.loss_ce;
      row.loss_total += r.loss_total;
    }
    const double n = static_cast<double>(clips.size());
    row.loss_tc /= n;
    row.loss_over /= n;
    row.loss_pix /= n;
    row.loss_ce /= n;
    row.loss_total /= n;
    rows.push_back(row);
  }
  return rows;
}

// '.' decimal point, no locale dependence.
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "param,value,l_tc,l_over,l_pix,l_ce,l_total\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.param.c_str(), r.value,
                  r.loss_tc, r.loss_over, r.loss_pix, r.loss_ce, r.loss_total);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient check harness: every exported analytic gradient against the
// 64-bit central-difference oracle, 20 random instances per loss.

struct GradCheckEntry {
  std::string loss;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double threshold = 1e-4;
  bool pass = false;

  nlohmann::json to_json() const {
    nlohmann::json losses = nlohmann::json::object();
    for (const auto& e : entries) losses[e.loss] = e.max_rel_error;
    return nlohmann::json{{"threshold", threshold}, {"pass", pass}, {"losses", losses}};
  }
};

namespace detail {

inline DTensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace detail

// `corrupt` perturbs one analytic gradient; the negative-control fixture
// proving the harness can fail.
inline GradCheckReport gradcheck_all(std::uint64_t seed, int instances = 20,
                                     bool corrupt = false) {
  Rng rng(seed);
  GradCheckReport report;

  const auto record = [&](const std::string& name, double err) {
    report.entries.push_back({name, err});
  };

  {  // l_scf w.r.t. the first map, 8x8 maps, grid 4
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      DTensor y = detail::random_tensor(rng, {8, 8}, 0.0, 1.0);
      DTensor p = detail::random_tensor(rng, {8, 8}, 0.0, 1.0);
      tcm::ScfResultT<double> res = tcm::l_scf(y, p, 4);
      const double err = grad_check(
          [&](const DTensor& probe) {
            return static_cast<double>(tcm::l_scf(probe, p, 4).loss);
          },
          y, res.grad);
      worst = std::max(worst, err);
    }
    record("l_scf", worst);
  }

  {  // l_tc w.r.t. the enhanced stack, 4 frames of 3x6x6, grid 3
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      DTensor enhanced = detail::random_tensor(rng, {4, 3, 6, 6}, 0.0, 1.0);
      DTensor input = detail::random_tensor(rng, {4, 3, 6, 6}, 0.0, 1.0);
      tcm::TcResultT<double> res = tcm::l_tc(enhanced, input, 3);
      const double err = grad_check(
          [&](const DTensor& probe) {
            return static_cast<double>(tcm::l_tc(probe, input, 3).loss);
          },
          enhanced, res.grad);
      worst = std::max(worst, err);
    }
    record("l_tc", worst);
  }

  {  // l_over w.r.t. S
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      lam::IlluminationMapT<double> illum;
      illum.s = detail::random_tensor(rng, {6, 6}, 0.2, 2.0);
      illum.y_low = rng.uniform(0.2, 0.8);
      illum.alpha = illum.y_high / illum.y_low;
      lam::IllumLossT<double> res = lam::l_over(illum);
      if (corrupt) res.grad[0] += 0.05;
      const double err = grad_check(
          [&](const DTensor& probe) {
            lam::IlluminationMapT<double> trial = illum;
            trial.s = probe;
            return static_cast<double>(lam::l_over(trial).loss);
          },
          illum.s, res.grad);
      worst = std::max(worst, err);
    }
    record("l_over", worst);
  }

  {  // l_pix w.r.t. S
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      lam::IlluminationMapT<double> illum;
      illum.s = detail::random_tensor(rng, {6, 6}, 0.2, 2.0);
      DTensor lum = detail::random_tensor(rng, {6, 6}, 0.05, 0.95);
      illum.y_low = mean_value(lum);
      illum.alpha = illum.y_high / illum.y_low;
      lam::IllumLossT<double> res = lam::l_pix(illum, lum);
      const double err = grad_check(
          [&](const DTensor& probe) {
            lam::IlluminationMapT<double> trial = illum;
            trial.s = probe;
            return static_cast<double>(lam::l_pix(trial, lum).loss);
          },
          illum.s, res.grad);
      worst = std::max(worst, err);
    }
    record("l_pix", worst);
  }

  {  // cross-entropy w.r.t. logits
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
      DTensor logits = detail::random_tensor(rng, {7}, -2.0, 2.0);
      const int y = static_cast<int>(rng.next_u64() % 7);
      ram::PredictionT<double> pred = ram::predict_from_logits(logits);
      ram::CeResultT<double> res = ram::cross_entropy(pred, y);
      const double err = grad_check(
          [&](const DTensor& probe) {
            ram::PredictionT<double> trial = ram::predict_from_logits(probe);
            return static_cast<double>(ram::cross_entropy(trial, y).loss);
          },
          logits, res.dlogits);
      worst = std::max(worst, err);
    }
    record("cross_entropy", worst);
  }

  report.pass = true;
  for (const auto& e : report.entries) {
    if (!(e.max_rel_error < report.threshold)) report.pass = false;
  }
  return report;
}

}  // namespace darksight::pipeline
