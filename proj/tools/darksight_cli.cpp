// darksight: dark-video analysis toolkit CLI.
//
// Subcommands: gdq scan | curate | stats | enhance | classify | losses tc |
// pipeline | sweep | gradcheck | params. Machine-readable output (JSON,
// JSONL, CSV) goes to stdout or --out; human notes and timing to stderr.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "darksight/darksight.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

darksight::RunConfig resolve_config(const std::string& config_path) {
  if (!config_path.empty()) return darksight::load_run_config(config_path);
  darksight::RunConfig config;
  darksight::apply_env_seed(config);
  config.validate();
  return config;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw darksight::IoError("cannot open " + out_path + " for writing");
  out << text;
  if (!text.empty() && text.back() != '\n') out << "\n";
}

std::vector<std::string> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw darksight::IoError("cannot open class list " + path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  if (labels.empty()) throw darksight::IoError("class list " + path + " is empty");
  return labels;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw darksight::ValueError("bad value '" + item + "' in list");
    }
  }
  return values;
}

// ---------------------------------------------------------------------------
// gdq scan

struct ScanResult {
  std::string path;
  darksight::gdq::DarknessReport report;
  int t = 0, h = 0, w = 0;
};

std::vector<fs::path> discover_videos(const fs::path& root) {
  std::vector<fs::path> videos;
  if (!fs::exists(root)) throw darksight::IoError("scan: " + root.string() + " does not exist");
  auto has_ppm = [](const fs::path& dir) {
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".ppm") return true;
    }
    return false;
  };
  if (fs::is_directory(root) && has_ppm(root)) {
    videos.push_back(root);
  } else if (fs::is_regular_file(root)) {
    videos.push_back(root);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().extension() == ".dvt") {
        videos.push_back(entry.path());
      } else if (entry.is_directory() && has_ppm(entry.path())) {
        videos.push_back(entry.path());
      }
    }
  }
  std::sort(videos.begin(), videos.end());
  if (videos.empty()) throw darksight::IoError("scan: no videos under " + root.string());
  return videos;
}

int run_gdq_scan(const std::string& dir, double tau, const std::string& out_path, bool luma,
                 const std::string& baseline, int jobs) {
  if (tau <= 0.0) throw darksight::ValueError("scan: tau must be positive");
  if (jobs < 1) throw darksight::ValueError("scan: jobs must be >= 1");
  const auto model = luma ? darksight::gdq::Intensity::kLumaBt601
                          : darksight::gdq::Intensity::kMeanRgb;
  const std::vector<fs::path> videos = discover_videos(dir);

  std::vector<ScanResult> results(videos.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex error_mutex;
  std::optional<std::string> first_error;
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= videos.size()) return;
      try {
        darksight::io::Clip clip = darksight::io::load_clip(videos[i]);
        results[i].path = videos[i].string();
        results[i].t = clip.num_frames();
        results[i].h = clip.height();
        results[i].w = clip.width();
        results[i].report = darksight::gdq::darkness_index(clip, tau, model);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = e.what();
        return;
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) throw darksight::IoError(*first_error);

  if (baseline == "corpus") {
    // experimental: rebase every video against the corpus-wide mean frame
    // brightness instead of its own baseline
    double sum = 0.0;
    std::int64_t frames = 0;
    for (const auto& r : results) {
      for (double mu : r.report.mu_t) sum += mu;
      frames += static_cast<std::int64_t>(r.report.mu_t.size());
    }
    const double corpus_mu = frames > 0 ? sum / static_cast<double>(frames) : 0.0;
    for (auto& r : results) r.report = darksight::gdq::rebase_darkness(r.report, corpus_mu);
  } else if (baseline != "video") {
    throw darksight::ValueError("scan: --baseline must be 'video' or 'corpus'");
  }

  std::string out;
  for (const auto& r : results) {
    json line{{"path", r.path},         {"T", r.t},
              {"H", r.h},               {"W", r.w},
              {"mu_c", r.report.mu_c},  {"D_v", r.report.d_v},
              {"label", darksight::gdq::to_string(r.report.label)}};
    out += line.dump() + "\n";
  }
  emit(out, out_path);
  std::cerr << "scanned " << results.size() << " videos\n";
  return 0;
}

// ---------------------------------------------------------------------------
// enhance (frame-level LAM: one gamma per clip, per-frame filter banks)

int run_enhance(const std::string& in_path, double mu_out, int u_p, const std::string& out_path,
                std::uint64_t seed, bool raw_kernels) {
  using darksight::Tensor;
  if (out_path.empty()) throw darksight::ValueError("enhance: --out is required");
  Tensor frames = darksight::io::load_real<float>(in_path);
  const int t_count = frames.extent(0), c = frames.extent(1);
  const int h = frames.extent(2), w = frames.extent(3);

  Tensor normalized = darksight::lam::minmax_normalize(frames);
  const double mu_in = std::clamp(darksight::mean_value(normalized), 1e-3, 1.0 - 1e-3);
  const double gamma = darksight::lam::gamma_from_means(mu_in, mu_out);

  darksight::Rng rng(seed);
  darksight::lam::LamParams params = darksight::lam::make_lam_params<float>(c, u_p, rng);

  Tensor enhanced(frames.shape());
  double over_sum = 0.0, pix_sum = 0.0;
  const std::int64_t frame_size = static_cast<std::int64_t>(c) * h * w;
  for (int t = 0; t < t_count; ++t) {
    Tensor x({c, h, w});
    std::copy(normalized.data() + t * frame_size, normalized.data() + (t + 1) * frame_size,
              x.data());
    Tensor y = darksight::lam::gamma_transform(x, gamma);
    darksight::lam::FilterBank bank = darksight::lam::build_filter_bank(y, params, !raw_kernels);
    Tensor xhat = darksight::lam::apply_filter_bank(x, bank);

    Tensor input_lum = darksight::channel_mean(x);
    input_lum = darksight::map(input_lum, [](float v) { return std::max(v, 1e-6f); });
    darksight::lam::IlluminationMap illum =
        darksight::lam::derive_illumination(input_lum, darksight::channel_mean(xhat));
    over_sum += static_cast<double>(darksight::lam::l_over(illum).loss);
    pix_sum += static_cast<double>(darksight::lam::l_pix(illum, input_lum).loss);

    std::copy(xhat.data(), xhat.data() + frame_size, enhanced.data() + t * frame_size);
  }
  darksight::io::write_dvt(out_path, enhanced);

  darksight::RunConfig config;
  darksight::apply_env_seed(config);
  config.seed = seed;
  config.mu_out = mu_out;
  config.u_p = u_p;
  json sidecar{{"gamma", gamma},
               {"mu_in", mu_in},
               {"l_over", over_sum / t_count},
               {"l_pix", pix_sum / t_count},
               {"config", config.to_json()}};
  std::ofstream side(out_path + ".json");
  if (!side) throw darksight::IoError("enhance: cannot write sidecar " + out_path + ".json");
  side << sidecar.dump(2) << "\n";
  std::cerr << "enhanced " << t_count << " frames -> " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

int run_losses_tc(const std::string& enhanced_path, const std::string& input_path, int grid,
                  const std::string& out_path, const darksight::RunConfig& config) {
  darksight::Tensor enhanced = darksight::io::load_real<float>(enhanced_path);
  darksight::Tensor input = darksight::io::load_real<float>(input_path);
  darksight::tcm::TcResultT<float> res = darksight::tcm::l_tc(enhanced, input, grid);
  json out{{"l_tc", static_cast<double>(res.loss)}, {"config", config.to_json()}};
  emit(out.dump(2), out_path);
  return 0;
}

int run_pipeline(const std::string& in_path, const darksight::RunConfig& config,
                 std::optional<int> label, const std::string& out_path) {
  darksight::io::Clip clip = darksight::io::load_clip(in_path);
  darksight::pipeline::PipelineReport report =
      darksight::pipeline::pipeline_run(clip, config, label);
  emit(report.to_json().dump(2), out_path);
  std::cerr << "pipeline completed in " << report.elapsed_ms << " ms\n";
  return 0;
}

int run_classify(const std::string& in_path, const darksight::RunConfig& config,
                 const std::string& classes_path, const std::string& label,
                 const std::string& out_path) {
  const std::vector<std::string> labels = read_labels(classes_path);
  if (static_cast<int>(labels.size()) != config.num_classes) {
    throw darksight::ValueError("classify: class list has " + std::to_string(labels.size()) +
                                " entries but config says " + std::to_string(config.num_classes));
  }
  std::optional<int> y;
  if (!label.empty()) {
    try {
      y = std::stoi(label);
    } catch (const std::exception&) {
      const auto it = std::find(labels.begin(), labels.end(), label);
      if (it == labels.end()) throw darksight::ValueError("classify: unknown label " + label);
      y = static_cast<int>(it - labels.begin());
    }
    if (*y < 0 || *y >= config.num_classes) {
      throw darksight::ValueError("classify: label index out of range");
    }
  }

  darksight::io::Clip clip = darksight::io::load_clip(in_path);
  darksight::pipeline::PipelineReport report =
      darksight::pipeline::pipeline_run(clip, config, y);

  json top5 = json::array();
  for (std::size_t i = 0; i < report.top5_indices.size(); ++i) {
    top5.push_back(json{{"index", report.top5_indices[i]},
                        {"label", labels[static_cast<std::size_t>(report.top5_indices[i])]},
                        {"prob", report.probs_top5[i]}});
  }
  json out{{"top1", report.top1},
           {"top1_label", labels[static_cast<std::size_t>(report.top1)]},
           {"top5", top5},
           {"losses",
            {{"l_tc", report.loss_tc},
             {"l_over", report.loss_over},
             {"l_pix", report.loss_pix},
             {"l_ce", report.loss_ce}}},
           {"l_total", report.loss_total},
           {"config", config.to_json()}};
  emit(out.dump(2), out_path);
  std::cerr << "classified in " << report.elapsed_ms << " ms\n";
  return 0;
}

int run_sweep(const std::string& param, const std::string& values_csv,
              const std::vector<std::string>& clip_paths, const darksight::RunConfig& config,
              const std::string& out_path) {
  const std::vector<double> values = parse_double_list(values_csv);
  if (values.empty()) throw darksight::ValueError("sweep: --values is empty");
  std::vector<darksight::io::Clip> clips;
  for (const auto& p : clip_paths) clips.push_back(darksight::io::load_clip(p));
  const std::vector<darksight::pipeline::SweepRow> rows =
      darksight::pipeline::sweep(param, values, clips, config);
  emit(darksight::pipeline::sweep_csv(rows), out_path);
  return 0;
}

int run_gradcheck(std::uint64_t seed, int instances, bool corrupt, const std::string& out_path) {
  const auto start = std::chrono::steady_clock::now();
  darksight::pipeline::GradCheckReport report =
      darksight::pipeline::gradcheck_all(seed, instances, corrupt);
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  json out = report.to_json();
  out["seed"] = seed;
  out["instances"] = instances;
  emit(out.dump(2), out_path);
  std::cerr << "gradcheck finished in " << ms << " ms\n";
  return report.pass ? 0 : 2;
}

int run_params(const darksight::RunConfig& config, const std::string& out_path) {
  darksight::pipeline::ModelParamsT<float> model =
      darksight::pipeline::make_model_params<float>(config);
  darksight::ram::ParamCounts counts = darksight::ram::count_params(model.ram_params);
  json out{{"tcm", darksight::tcm::param_count(model.tcm_params)},
           {"lam", darksight::lam::param_count(model.lam_params)},
           {"ram",
            {{"downsample", counts.downsample},
             {"main_blocks", counts.main_blocks},
             {"reflected", counts.reflected},
             {"fuse", counts.fuse},
             {"head", counts.head},
             {"backbone_without_reflected", counts.backbone_without_reflected()},
             {"total", counts.total()},
             {"reflected_overhead", counts.reflected_overhead()}}},
           {"config", config.to_json()}};
  emit(out.dump(2), out_path);
  return 0;
}

int run_curate(const std::string& manifest_path, int min_count, std::uint64_t seed,
               const std::string& out_path) {
  const std::vector<darksight::curation::ManifestEntry> entries =
      darksight::curation::read_manifest(manifest_path);
  const std::vector<darksight::curation::ManifestEntry> curated =
      darksight::curation::curate_corpus(entries, min_count, seed);
  std::string out;
  for (const auto& e : curated) out += darksight::curation::to_json(e).dump() + "\n";
  emit(out, out_path);
  std::cerr << "curated " << curated.size() << " of " << entries.size() << " entries\n";
  return 0;
}

int run_stats(const std::string& manifest_path, const std::string& out_path,
              const darksight::RunConfig& config) {
  const std::vector<darksight::curation::ManifestEntry> entries =
      darksight::curation::read_manifest(manifest_path);
  json out = darksight::curation::to_json(darksight::curation::stats(entries));
  out["config"] = config.to_json();
  emit(out.dump(2), out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"darksight: dark-video analysis toolkit"};
  app.require_subcommand(1);

  // gdq scan
  auto* gdq_cmd = app.add_subcommand("gdq", "darkness quantification");
  gdq_cmd->require_subcommand(1);
  auto* scan = gdq_cmd->add_subcommand("scan", "scan a directory of videos, emit JSONL");
  std::string scan_dir, scan_out, scan_baseline = "video";
  double scan_tau = darksight::gdq::kDefaultTau;
  bool scan_luma = false;
  int scan_jobs = 1;
  scan->add_option("dir", scan_dir, "directory of .dvt files or PPM sequences")->required();
  scan->add_option("--tau", scan_tau, "darkness threshold");
  scan->add_option("--out", scan_out, "output JSONL path (default stdout)");
  scan->add_flag("--luma", scan_luma, "use BT.601 luma instead of the RGB mean");
  scan->add_option("--baseline", scan_baseline, "'video' (default) or experimental 'corpus'");
  scan->add_option("--jobs", scan_jobs, "worker threads (default 1 for bit-reproducibility)");

  // curate
  auto* curate = app.add_subcommand("curate", "filter classes and split a manifest");
  std::string curate_manifest, curate_out;
  int curate_min = 150;
  std::uint64_t curate_seed = 7;
  curate->add_option("--manifest", curate_manifest, "input JSONL manifest")->required();
  curate->add_option("--min-count", curate_min, "retain classes with count >= this");
  curate->add_option("--seed", curate_seed, "split seed");
  curate->add_option("--out", curate_out, "output JSONL path (default stdout)");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "corpus statistics from a manifest");
  std::string stats_manifest, stats_out, stats_config;
  stats_cmd->add_option("--manifest", stats_manifest, "input JSONL manifest")->required();
  stats_cmd->add_option("--out", stats_out, "output JSON path (default stdout)");
  stats_cmd->add_option("--config", stats_config, "run config file");

  // enhance
  auto* enhance = app.add_subcommand("enhance", "luminance-adaptive enhancement of a clip");
  std::string enh_in, enh_out;
  double enh_mu_out = 0.5;
  int enh_up = 5;
  std::uint64_t enh_seed = 42;
  bool enh_raw = false;
  enhance->add_option("--in", enh_in, "input clip (.dvt or PPM directory)")->required();
  enhance->add_option("--mu-out", enh_mu_out, "target luminance mean");
  enhance->add_option("--up", enh_up, "per-pixel kernel extent (odd)");
  enhance->add_option("--out", enh_out, "output .dvt path")->required();
  enhance->add_option("--seed", enh_seed, "filter-generator seed");
  enhance->add_flag("--raw-kernels", enh_raw, "skip per-pixel softmax normalization");

  // classify
  auto* classify = app.add_subcommand("classify", "run the full pipeline and name the class");
  std::string cls_in, cls_config, cls_classes, cls_label, cls_out;
  classify->add_option("--in", cls_in, "input clip")->required();
  classify->add_option("--config", cls_config, "run config file");
  classify->add_option("--classes", cls_classes, "label file, one class per line")->required();
  classify->add_option("--label", cls_label, "ground-truth class (index or name)");
  classify->add_option("--out", cls_out, "output JSON path (default stdout)");

  // losses tc
  auto* losses = app.add_subcommand("losses", "loss evaluators");
  losses->require_subcommand(1);
  auto* tc = losses->add_subcommand("tc", "temporal consistency loss between two clips");
  std::string tc_enhanced, tc_input, tc_out, tc_config;
  int tc_grid = 4;
  tc->add_option("--enhanced", tc_enhanced, "enhanced clip (.dvt)")->required();
  tc->add_option("--input", tc_input, "input clip (.dvt)")->required();
  tc->add_option("--grid", tc_grid, "region grid");
  tc->add_option("--out", tc_out, "output JSON path (default stdout)");
  tc->add_option("--config", tc_config, "run config file");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "end-to-end forward run");
  std::string pipe_in, pipe_config, pipe_out;
  int pipe_label = -1;
  pipe->add_option("--in", pipe_in, "input clip")->required();
  pipe->add_option("--config", pipe_config, "run config file");
  pipe->add_option("--label", pipe_label, "ground-truth class index for the cross-entropy");
  pipe->add_option("--out", pipe_out, "output JSON path (default stdout)");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "parameter sweep over pipeline losses");
  std::string sweep_param, sweep_values, sweep_config, sweep_out;
  std::vector<std::string> sweep_in;
  sweep_cmd->add_option("--param", sweep_param, "mu_out | u_p | grid")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep_cmd->add_option("--in", sweep_in, "input clip(s)")->required();
  sweep_cmd->add_option("--config", sweep_config, "run config file");
  sweep_cmd->add_option("--out", sweep_out, "output CSV path (default stdout)");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "all analytic gradients vs the oracle");
  std::uint64_t gc_seed = 42;
  int gc_instances = 20;
  bool gc_corrupt = false;
  std::string gc_out;
  gradcheck->add_option("--seed", gc_seed, "instance seed");
  gradcheck->add_option("--instances", gc_instances, "instances per loss");
  gradcheck->add_option("--out", gc_out, "output JSON path (default stdout)");
  gradcheck->add_flag("--corrupt-gradient", gc_corrupt, "test fixture: corrupt one gradient")
      ->group("");  // hidden

  // params
  auto* params_cmd = app.add_subcommand("params", "parameter counts per pathway");
  std::string params_config, params_out;
  params_cmd->add_option("--config", params_config, "run config file");
  params_cmd->add_option("--out", params_out, "output JSON path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (scan->parsed()) {
      return run_gdq_scan(scan_dir, scan_tau, scan_out, scan_luma, scan_baseline, scan_jobs);
    }
    if (curate->parsed()) return run_curate(curate_manifest, curate_min, curate_seed, curate_out);
    if (stats_cmd->parsed()) {
      return run_stats(stats_manifest, stats_out, resolve_config(stats_config));
    }
    if (enhance->parsed()) {
      if (const char* env = std::getenv("DARKSIGHT_SEED")) enh_seed = std::stoull(env);
      return run_enhance(enh_in, enh_mu_out, enh_up, enh_out, enh_seed, enh_raw);
    }
    if (classify->parsed()) {
      return run_classify(cls_in, resolve_config(cls_config), cls_classes, cls_label, cls_out);
    }
    if (tc->parsed()) {
      darksight::RunConfig config = resolve_config(tc_config);
      config.grid = tc_grid;
      return run_losses_tc(tc_enhanced, tc_input, tc_grid, tc_out, config);
    }
    if (pipe->parsed()) {
      std::optional<int> label;
      if (pipe_label >= 0) label = pipe_label;
      return run_pipeline(pipe_in, resolve_config(pipe_config), label, pipe_out);
    }
    if (sweep_cmd->parsed()) {
      return run_sweep(sweep_param, sweep_values, sweep_in, resolve_config(sweep_config),
                       sweep_out);
    }
    if (gradcheck->parsed()) {
      if (const char* env = std::getenv("DARKSIGHT_SEED")) gc_seed = std::stoull(env);
      return run_gradcheck(gc_seed, gc_instances, gc_corrupt, gc_out);
    }
    if (params_cmd->parsed()) return run_params(resolve_config(params_config), params_out);
  } catch (const darksight::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const darksight::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
