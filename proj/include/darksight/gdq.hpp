#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "darksight/error.hpp"
#include "darksight/tensor.hpp"
#include "darksight/video_io.hpp"

namespace darksight::gdq {

constexpr double kDefaultTau = 0.877;

enum class Light { kLowLight, kNormalLight };

inline const char* to_string(Light label) {
  return label == Light::kLowLight ? "low_light" : "normal_light";
}

// Pixel intensity model. The darkness index uses the unweighted RGB mean
// by default; BT.601 luma sits behind a flag.
enum class Intensity { kMeanRgb, kLumaBt601 };

struct DarknessReport {
  std::vector<double> mu_t;     // per-frame mean brightness, 0-255 units
  std::vector<double> sigma_t;  // per-frame population std of intensities
  double mu_c = 0.0;            // global brightness baseline, mean of mu_t
  double d_v = 0.0;             // darkness index
  double tau = kDefaultTau;
  Light label = Light::kNormalLight;
  bool zero_baseline = false;  // mu_c == 0 forced d_v to 0
};

inline Light classify(double d_v, double tau) {
  if (tau <= 0.0) throw ValueError("classify: tau must be positive");
  // strict inequality: d_v == -tau is normal light
  return d_v < -tau ? Light::kLowLight : Light::kNormalLight;
}

namespace detail {

inline double pixel_intensity(double r, double g, double b, Intensity model) {
  if (model == Intensity::kLumaBt601) return 0.299 * r + 0.587 * g + 0.114 * b;
  return (r + g + b) / 3.0;
}

// Per-frame mean and population std of pixel intensities, 64-bit.
template <class T>
void frame_stats(const TensorT<T>& frames, int t, Intensity model, double* mu, double* sigma) {
  const int c = frames.extent(1), h = frames.extent(2), w = frames.extent(3);
  const std::int64_t n = static_cast<std::int64_t>(h) * w;
  double sum = 0.0, sum_sq = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double intensity;
      if (c == 3) {
        intensity = pixel_intensity(static_cast<double>(frames.at(t, 0, y, x)),
                                    static_cast<double>(frames.at(t, 1, y, x)),
                                    static_cast<double>(frames.at(t, 2, y, x)), model);
      } else {
        double acc = 0.0;
        for (int ch = 0; ch < c; ++ch) acc += static_cast<double>(frames.at(t, ch, y, x));
        intensity = acc / c;
      }
      sum += intensity;
      sum_sq += intensity * intensity;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
  *mu = mean;
  *sigma = std::sqrt(var);
}

}  // namespace detail

template <class T>
double frame_brightness(const TensorT<T>& frames, int t, Intensity model = Intensity::kMeanRgb) {
  if (frames.rank() != 4) throw ShapeError("frame_brightness: frames must be rank-4 (T,C,H,W)");
  double mu, sigma;
  detail::frame_stats(frames, t, model, &mu, &sigma);
  return mu;
}

inline double frame_brightness(const io::Clip& clip, int t,
                               Intensity model = Intensity::kMeanRgb) {
  return frame_brightness(clip.frames, t, model);
}

// Darkness index over a real-valued frame stack (values on the 0-255 scale).
// D_v = (1/T) * sum_t ((mu_t - mu_c) / mu_c) * sigma_t. A video whose global
// baseline is exactly zero gets d_v = 0 and the zero_baseline flag.
template <class T>
DarknessReport darkness_index(const TensorT<T>& frames, double tau = kDefaultTau,
                              Intensity model = Intensity::kMeanRgb) {
  if (frames.rank() != 4) throw ShapeError("darkness_index: frames must be rank-4 (T,C,H,W)");
  const int t_count = frames.extent(0);
  DarknessReport report;
  report.tau = tau;
  report.mu_t.resize(static_cast<std::size_t>(t_count));
  report.sigma_t.resize(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    detail::frame_stats(frames, t, model, &report.mu_t[static_cast<std::size_t>(t)],
                        &report.sigma_t[static_cast<std::size_t>(t)]);
  }
  double mu_c = 0.0;
  for (double m : report.mu_t) mu_c += m;
  mu_c /= static_cast<double>(t_count);
  report.mu_c = mu_c;
  if (mu_c == 0.0) {
    report.d_v = 0.0;
    report.zero_baseline = true;
  } else {
    double acc = 0.0;
    for (int t = 0; t < t_count; ++t) {
      acc += ((report.mu_t[static_cast<std::size_t>(t)] - mu_c) / mu_c) *
             report.sigma_t[static_cast<std::size_t>(t)];
    }
    report.d_v = acc / static_cast<double>(t_count);
  }
  report.label = classify(report.d_v, tau);
  return report;
}

inline DarknessReport darkness_index(const io::Clip& clip, double tau = kDefaultTau,
                                     Intensity model = Intensity::kMeanRgb) {
  return darkness_index(clip.frames.cast<double>(), tau, model);
}

// Experimental corpus-wide baseline: recomputes d_v against an externally
// supplied mu_c (e.g. the mean frame brightness of a whole corpus) instead
// of the per-video baseline. Exposed behind `gdq scan --baseline corpus`,
// not asserted by any oracle.
inline DarknessReport rebase_darkness(const DarknessReport& report, double corpus_mu_c) {
  DarknessReport out = report;
  out.mu_c = corpus_mu_c;
  if (corpus_mu_c == 0.0) {
    out.d_v = 0.0;
    out.zero_baseline = true;
  } else {
    double acc = 0.0;
    for (std::size_t t = 0; t < report.mu_t.size(); ++t) {
      acc += ((report.mu_t[t] - corpus_mu_c) / corpus_mu_c) * report.sigma_t[t];
    }
    out.d_v = acc / static_cast<double>(report.mu_t.size());
    out.zero_baseline = false;
  }
  out.label = classify(out.d_v, out.tau);
  return out;
}

}  // namespace darksight::gdq
