#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "darksight/config.hpp"
#include "darksight/pipeline.hpp"

using namespace darksight;
namespace fs = std::filesystem;

namespace {

io::Clip random_clip(std::mt19937_64& gen, int t, int h, int w) {
  TensorT<std::uint8_t> frames({t, 3, h, w});
  for (std::int64_t i = 0; i < frames.numel(); ++i) {
    frames[i] = static_cast<std::uint8_t>(gen() % 256);
  }
  return io::make_clip(std::move(frames));
}

RunConfig desk_config() {
  RunConfig config;
  config.num_frames = 4;
  config.interval = 1;
  config.base_channels = 4;
  config.stages = {4, 8};
  config.main_blocks = 1;
  config.num_classes = 5;
  return config;
}

fs::path write_config_file(const std::string& body) {
  fs::path path = fs::temp_directory_path() / "darksight_cfg_test.cfg";
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("run config file parsing", "[pipeline]") {
  SECTION("known keys and comments parse") {
    fs::path path = write_config_file(
        "# comment\n"
        "seed = 123\n"
        "mu_out = 0.4\n"
        "stages = 8, 16, 32\n"
        "num_frames = 32\n");
    RunConfig config = load_run_config(path);
    CHECK(config.seed == 123);
    CHECK(config.mu_out == Catch::Approx(0.4));
    CHECK(config.stages == std::vector<int>{8, 16, 32});
    CHECK(config.num_frames == 32);
    CHECK(config.u_p == 5);  // untouched default
  }

  SECTION("unknown keys are rejected") {
    fs::path path = write_config_file("learning_rate = 0.1\n");
    CHECK_THROWS_AS(load_run_config(path), ValueError);
  }

  SECTION("bad values are rejected") {
    fs::path path = write_config_file("u_p = 4\n");
    CHECK_THROWS_AS(load_run_config(path), ValueError);
    path = write_config_file("mu_out = 1.5\n");
    CHECK_THROWS_AS(load_run_config(path), ValueError);
  }

  SECTION("DARKSIGHT_SEED overrides the config seed") {
    fs::path path = write_config_file("seed = 5\n");
    setenv("DARKSIGHT_SEED", "991", 1);
    RunConfig config = load_run_config(path);
    unsetenv("DARKSIGHT_SEED");
    CHECK(config.seed == 991);
  }
}

TEST_CASE("pipeline_run produces a finite, self-consistent report", "[pipeline]") {
  std::mt19937_64 gen(21);
  io::Clip clip = random_clip(gen, 8, 16, 16);
  RunConfig config = desk_config();
  pipeline::PipelineReport report = pipeline::pipeline_run(clip, config);

  CHECK(std::isfinite(report.loss_tc));
  CHECK(std::isfinite(report.loss_over));
  CHECK(std::isfinite(report.loss_pix));
  CHECK(std::isfinite(report.loss_ce));
  CHECK(report.loss_total ==
        Catch::Approx(report.loss_tc + report.loss_over + report.loss_pix + report.loss_ce));
  CHECK(report.top1 >= 0);
  CHECK(report.top1 < config.num_classes);
  CHECK(report.probs_top5.size() == 5);
  CHECK(report.gamma > 0.0);
}

TEST_CASE("pipeline_run is deterministic for a fixed seed", "[pipeline]") {
  std::mt19937_64 gen(22);
  io::Clip clip = random_clip(gen, 6, 16, 16);
  RunConfig config = desk_config();
  pipeline::PipelineReport a = pipeline::pipeline_run(clip, config);
  pipeline::PipelineReport b = pipeline::pipeline_run(clip, config);
  CHECK(a.to_json().dump() == b.to_json().dump());

  config.seed += 1;
  pipeline::PipelineReport c = pipeline::pipeline_run(clip, config);
  CHECK(a.to_json().dump() != c.to_json().dump());
}

TEST_CASE("pipeline_run completes on an all-black clip", "[pipeline]") {
  TensorT<std::uint8_t> frames({6, 3, 16, 16});
  io::Clip clip = io::make_clip(std::move(frames));
  RunConfig config = desk_config();
  pipeline::PipelineReport report = pipeline::pipeline_run(clip, config);
  CHECK(report.d_v == 0.0);
  CHECK(std::isfinite(report.loss_total));
}

TEST_CASE("stage errors carry the stage name", "[pipeline]") {
  // a 3x3 clip survives the TCM convolutions but underflows the LAM pooling
  TensorT<std::uint8_t> frames({6, 3, 3, 3}, 128);
  io::Clip clip = io::make_clip(std::move(frames));
  RunConfig config = desk_config();
  CHECK_THROWS_WITH(pipeline::pipeline_run(clip, config),
                    Catch::Matchers::StartsWith("lam:"));
}

TEST_CASE("explicit label feeds the cross-entropy", "[pipeline]") {
  std::mt19937_64 gen(23);
  io::Clip clip = random_clip(gen, 6, 16, 16);
  RunConfig config = desk_config();
  pipeline::PipelineReport self = pipeline::pipeline_run(clip, config);
  pipeline::PipelineReport labeled =
      pipeline::pipeline_run(clip, config, (self.top1 + 1) % config.num_classes);
  CHECK(labeled.loss_ce >= self.loss_ce);  // top1 maximizes the predicted prob
}

TEST_CASE("sweep produces one row per value, deterministic", "[pipeline]") {
  std::mt19937_64 gen(24);
  std::vector<io::Clip> clips;
  clips.push_back(random_clip(gen, 6, 16, 16));
  RunConfig config = desk_config();

  const std::vector<double> grid{0.3, 0.4, 0.5, 0.6, 0.7};
  auto rows = pipeline::sweep("mu_out", grid, clips, config);
  REQUIRE(rows.size() == 5);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].value == Catch::Approx(grid[i]));
    CHECK(std::isfinite(rows[i].loss_total));
  }

  SECTION("single and repeated values") {
    auto one = pipeline::sweep("grid", {2.0}, clips, config);
    REQUIRE(one.size() == 1);
    auto twice = pipeline::sweep("grid", {2.0, 2.0}, clips, config);
    CHECK(twice[0].loss_total == Catch::Approx(twice[1].loss_total));
  }

  SECTION("domain validation happens before any run") {
    CHECK_THROWS_AS(pipeline::sweep("mu_out", {0.5, 1.5}, clips, config), ValueError);
    CHECK_THROWS_AS(pipeline::sweep("u_p", {4.0}, clips, config), ValueError);
    CHECK_THROWS_AS(pipeline::sweep("unknown", {1.0}, clips, config), ValueError);
  }

  SECTION("csv uses a dot decimal separator and a fixed header") {
    const std::string csv = pipeline::sweep_csv(rows);
    CHECK(csv.rfind("param,value,l_tc,l_over,l_pix,l_ce,l_total\n", 0) == 0);
    CHECK(csv.find("0.3") != std::string::npos);
    CHECK(csv.find(',') != std::string::npos);
  }
}

TEST_CASE("gradcheck_all passes and the corrupt fixture fails", "[pipeline]") {
  pipeline::GradCheckReport report = pipeline::gradcheck_all(42, 20);
  REQUIRE(report.entries.size() == 5);
  for (const auto& e : report.entries) {
    INFO(e.loss);
    CHECK(e.max_rel_error < 1e-4);
  }
  CHECK(report.pass);

  pipeline::GradCheckReport corrupted = pipeline::gradcheck_all(42, 5, true);
  CHECK(!corrupted.pass);

  pipeline::GradCheckReport again = pipeline::gradcheck_all(42, 5);
  pipeline::GradCheckReport again2 = pipeline::gradcheck_all(42, 5);
  CHECK(again.to_json().dump() == again2.to_json().dump());
}

TEST_CASE("model parameter draws are seed-stable across modules", "[pipeline]") {
  RunConfig config = desk_config();
  auto a = pipeline::make_model_params<float>(config);
  auto b = pipeline::make_model_params<float>(config);
  CHECK(a.tcm_params.pre[0].weights.values() == b.tcm_params.pre[0].weights.values());
  CHECK(a.lam_params.proj.weights.values() == b.lam_params.proj.weights.values());
  CHECK(a.ram_params.head.weight.values() == b.ram_params.head.weight.values());
}
