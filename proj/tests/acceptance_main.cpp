// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Each check is self-contained and pins its tolerance.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "darksight/darksight.hpp"

using namespace darksight;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

double urand(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

DTensor random_tensor(std::mt19937_64& gen, std::vector<int> shape, double lo = 0.0,
                      double hi = 1.0) {
  DTensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * urand(gen);
  return t;
}

io::Clip random_clip(std::mt19937_64& gen, int t, int h, int w) {
  TensorT<std::uint8_t> frames({t, 3, h, w});
  for (std::int64_t i = 0; i < frames.numel(); ++i) {
    frames[i] = static_cast<std::uint8_t>(gen() % 256);
  }
  return io::make_clip(std::move(frames));
}

// Brute-force darkness index, independent of the library implementation.
double brute_force_darkness(const io::Clip& clip) {
  const int t_count = clip.num_frames(), h = clip.height(), w = clip.width();
  std::vector<double> mu, sigma;
  for (int t = 0; t < t_count; ++t) {
    std::vector<double> intensity;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        intensity.push_back((static_cast<double>(clip.frames.at(t, 0, y, x)) +
                             static_cast<double>(clip.frames.at(t, 1, y, x)) +
                             static_cast<double>(clip.frames.at(t, 2, y, x))) /
                            3.0);
      }
    double m = 0.0;
    for (double v : intensity) m += v;
    m /= static_cast<double>(intensity.size());
    double s = 0.0;
    for (double v : intensity) s += (v - m) * (v - m);
    mu.push_back(m);
    sigma.push_back(std::sqrt(s / static_cast<double>(intensity.size())));
  }
  double mu_c = 0.0;
  for (double m : mu) mu_c += m;
  mu_c /= static_cast<double>(mu.size());
  if (mu_c == 0.0) return 0.0;
  double d = 0.0;
  for (std::size_t t = 0; t < mu.size(); ++t) d += ((mu[t] - mu_c) / mu_c) * sigma[t];
  return d / static_cast<double>(mu.size());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// --------------------------------------------------------------------------

bool criterion_gdq_oracle(std::string& note) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 gen(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int t = 1 + static_cast<int>(gen() % 8);
    const int h = 2 + static_cast<int>(gen() % 15);
    const int w = 2 + static_cast<int>(gen() % 15);
    io::Clip clip = random_clip(gen, t, h, w);
    const double lib = gdq::darkness_index(clip).d_v;
    const double ref = brute_force_darkness(clip);
    worst = std::max(worst, std::abs(lib - ref));
  }

  TensorT<std::uint8_t> frames({2, 3, 2, 2});
  const int f1[4] = {10, 10, 30, 30}, f2[4] = {30, 50, 50, 70};
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) {
      frames.at(0, c, i / 2, i % 2) = static_cast<std::uint8_t>(f1[i]);
      frames.at(1, c, i / 2, i % 2) = static_cast<std::uint8_t>(f2[i]);
    }
  const double hand = gdq::darkness_index(io::make_clip(frames)).d_v;
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  std::ostringstream os;
  os << "max |lib-oracle| = " << worst << ", hand case = " << hand << ", " << seconds << " s";
  note = os.str();
  return worst < 1e-9 && std::abs(hand - 0.8876) < 1e-4 && seconds < 5.0;
}

bool criterion_threshold(std::string& note) {
  const bool boundary = gdq::classify(-0.877, 0.877) == gdq::Light::kNormalLight;
  const bool below = gdq::classify(-0.8771, 0.877) == gdq::Light::kLowLight;
  note = std::string("D_v=-0.877 -> ") + (boundary ? "normal_light" : "low_light") +
         ", D_v=-0.8771 -> " + (below ? "low_light" : "normal_light");
  return boundary && below;
}

bool criterion_gamma(std::string& note) {
  const double g1 = lam::gamma_from_means(0.5, 0.5);
  const double g2 = lam::gamma_from_means(0.25, 0.5);
  DTensor constant({1, 4, 4}, 0.25);
  lam::GammaParams params = lam::estimate_gamma(constant, 0.5);
  DTensor y = lam::gamma_transform(lam::minmax_normalize(constant), params.gamma);
  double max_dev = 0.0;
  for (std::int64_t i = 0; i < y.numel(); ++i) max_dev = std::max(max_dev, std::abs(y[i] - 0.5));
  std::ostringstream os;
  os << "gamma(0.5,0.5)=" << g1 << ", gamma(0.25,0.5)=" << g2 << ", constant-map dev=" << max_dev;
  note = os.str();
  return g1 == 1.0 && g2 == 0.5 && max_dev < 1e-6;
}

bool criterion_loss_identities(std::string& note) {
  std::mt19937_64 gen(7);
  bool ok = true;
  std::ostringstream os;

  DTensor input = random_tensor(gen, {5, 3, 8, 8});
  const double tc_same = tcm::l_tc(input, input, 4).loss;
  ok = ok && std::abs(tc_same) <= 1e-12;

  DTensor offset = map(input, [](double v) { return v + 0.29; });
  const double tc_offset = tcm::l_tc(offset, input, 4).loss;
  ok = ok && std::abs(tc_offset) <= 1e-9;

  DTensor y = random_tensor(gen, {8, 8});
  DTensor p = random_tensor(gen, {8, 8});
  const double scf_ab = tcm::l_scf(y, p, 4).loss;
  const double scf_ba = tcm::l_scf(p, y, 4).loss;
  ok = ok && std::abs(scf_ab - scf_ba) <= 1e-12;
  ok = ok && tcm::l_scf(y, p, 1).loss == 0.0;

  lam::IlluminationMapT<double> illum;
  illum.y_low = 0.4;
  illum.alpha = illum.y_high / illum.y_low;
  illum.s = DTensor({6, 6}, 1.0 / illum.alpha);
  const double over = lam::l_over(illum).loss;
  ok = ok && std::abs(over) <= 1e-12;

  DTensor lum = random_tensor(gen, {6, 6}, 0.1, 0.9);
  lam::IlluminationMapT<double> pix_map;
  pix_map.y_low = mean_value(lum);
  pix_map.alpha = pix_map.y_high / pix_map.y_low;
  pix_map.s = DTensor({6, 6});
  for (std::int64_t i = 0; i < lum.numel(); ++i) {
    pix_map.s[i] = 0.7 * std::pow(pix_map.alpha * lum[i], pix_map.alpha);
  }
  const double pix = lam::l_pix(pix_map, lum).loss;
  ok = ok && std::abs(pix) <= 1e-12;

  DTensor logits({101});
  ram::PredictionT<double> pred = ram::predict_from_logits(logits);
  const double ce = ram::cross_entropy(pred, 42).loss;
  ok = ok && std::abs(ce - std::log(101.0)) <= 1e-6;

  os << "l_tc(same)=" << tc_same << ", l_tc(offset)=" << tc_offset << ", |scf_ab-scf_ba|="
     << std::abs(scf_ab - scf_ba) << ", l_over=" << over << ", l_pix=" << pix
     << ", ce-ln(101)=" << ce - std::log(101.0);
  note = os.str();
  return ok;
}

bool criterion_gradcheck(std::string& note) {
  const auto start = std::chrono::steady_clock::now();
  pipeline::GradCheckReport report = pipeline::gradcheck_all(42, 20);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ostringstream os;
  for (const auto& e : report.entries) os << e.loss << "=" << e.max_rel_error << " ";
  os << "(" << seconds << " s)";
  note = os.str();
  return report.pass && seconds < 60.0;
}

bool criterion_gate(std::string& note) {
  std::mt19937_64 gen(11);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    DTensor f = random_tensor(gen, {8, 6, 6}, -1.0, 1.0);
    ConvSpecT<double> g1 = make_zero_conv<double>(4, 4);
    ConvSpecT<double> g2 = make_zero_conv<double>(4, 4);
    DTensor z = tcm::gated_split_fusion(f, g1, g2);
    for (int c = 0; c < 4; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
          const double expected = 0.5 * (f.at(c, y, x) + f.at(c + 4, y, x));
          worst = std::max(worst, std::abs(z.at(c, y, x) - expected));
        }
  }
  std::ostringstream os;
  os << "max |z - 0.5(F1+F2)| = " << worst;
  note = os.str();
  return worst < 1e-6;
}

bool criterion_filters(std::string& note) {
  std::mt19937_64 gen(13);
  Rng rng(17);

  // delta kernels reproduce the input exactly
  double delta_dev = 0.0;
  {
    DTensor x = random_tensor(gen, {3, 6, 6}, -2.0, 2.0);
    lam::FilterBankT<double> bank;
    bank.u_p = 5;
    bank.kernels = DTensor({25, 6, 6});
    for (int y = 0; y < 6; ++y)
      for (int xx = 0; xx < 6; ++xx) bank.kernels.at(12, y, xx) = 1.0;
    DTensor out = lam::apply_filter_bank(x, bank);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      delta_dev = std::max(delta_dev, std::abs(out[i] - x[i]));
    }
  }

  // convex-combination bound over 50 random instances
  lam::LamParamsT<double> params = lam::make_lam_params<double>(2, 5, rng);
  bool bounds_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    DTensor x = random_tensor(gen, {2, 8, 8}, -1.0, 1.0);
    lam::FilterBankT<double> bank = lam::build_filter_bank(lam::minmax_normalize(x), params);
    DTensor out = lam::apply_filter_bank(x, bank);
    for (int c = 0; c < 2 && bounds_ok; ++c)
      for (int y = 0; y < 8 && bounds_ok; ++y)
        for (int xx = 0; xx < 8 && bounds_ok; ++xx) {
          double lo = 0.0, hi = 0.0;  // zero padding participates in the patch
          for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
              const int iy = y + dy, ix = xx + dx;
              const double v = (iy >= 0 && iy < 8 && ix >= 0 && ix < 8) ? x.at(c, iy, ix) : 0.0;
              lo = std::min(lo, v);
              hi = std::max(hi, v);
            }
          if (out.at(c, y, xx) < lo - 1e-9 || out.at(c, y, xx) > hi + 1e-9) bounds_ok = false;
        }
  }
  std::ostringstream os;
  os << "delta kernel dev = " << delta_dev << ", bounds " << (bounds_ok ? "hold" : "violated");
  note = os.str();
  return delta_dev == 0.0 && bounds_ok;
}

bool criterion_topology(std::string& note) {
  std::mt19937_64 gen(19);
  Rng rng(23);
  ram::StageParamsT<double> stage;
  stage.down = make_conv<double>(4, 8, rng, 3, 2, 1);
  stage.main_blocks.push_back(ram::make_block<double>(8, rng));
  stage.reflected = ram::make_zero_block<double>(8);
  stage.fuse = make_conv<double>(16, 8, rng, 1, 1, 0);

  DTensor x = random_tensor(gen, {4, 8, 8}, -1.0, 1.0);
  ram::StageOutputT<double> zeroed = ram::stage_forward(x, stage);
  DTensor expected = conv2d(concat_channels(zeroed.main, zeroed.main), stage.fuse);
  double identity_dev = 0.0;
  for (std::int64_t i = 0; i < expected.numel(); ++i) {
    identity_dev = std::max(identity_dev, std::abs(zeroed.fused[i] - expected[i]));
  }

  stage.reflected = ram::make_block<double>(8, rng);
  ram::StageOutputT<double> randomized = ram::stage_forward(x, stage);
  double random_dev = 0.0;
  for (std::int64_t i = 0; i < randomized.fused.numel(); ++i) {
    random_dev = std::max(random_dev, std::abs(randomized.fused[i] - zeroed.fused[i]));
  }

  Rng prng(29);
  ram::BackboneConfig config;  // default desk config
  ram::RamParamsT<double> params = ram::make_ram_params<double>(config, prng);
  const double overhead = ram::count_params(params).reflected_overhead();

  std::ostringstream os;
  os << "identity dev = " << identity_dev << ", random dev = " << random_dev
     << ", reflected overhead = " << overhead;
  note = os.str();
  return identity_dev < 1e-6 && random_dev > 1e-6 && overhead < 0.15;
}

bool criterion_curation(std::string& note) {
  using curation::ManifestEntry;
  auto corpus = [](const std::vector<std::pair<std::string, int>>& class_counts) {
    std::vector<ManifestEntry> entries;
    for (const auto& [label, count] : class_counts) {
      for (int i = 0; i < count; ++i) {
        ManifestEntry e;
        e.path = label + "/" + std::to_string(i);
        e.class_label = label;
        e.num_frames = 8;
        e.d_v = -1.0;
        e.light = gdq::Light::kLowLight;
        entries.push_back(e);
      }
    }
    return entries;
  };

  auto retained =
      curation::filter_classes(corpus({{"a", 200}, {"b", 151}, {"c", 150}, {"d", 149}}), 150);
  std::set<std::string> classes;
  for (const auto& e : retained) classes.insert(e.class_label);

  auto split = curation::split_80_20(corpus({{"x", 100}}), 7);
  int train = 0, test = 0;
  for (const auto& e : split) {
    if (e.split == curation::Split::kTrain) ++train;
    if (e.split == curation::Split::kTest) ++test;
  }

  // large synthetic corpus: 101 classes, 18310 videos
  std::vector<std::pair<std::string, int>> replica;
  int total = 0;
  for (int c = 0; c < 101; ++c) {
    const int count = c < 29 ? 182 : 181;
    replica.push_back({"class_" + std::to_string(c), count});
    total += count;
  }
  curation::CorpusStats stats = curation::stats(corpus(replica));

  std::ostringstream os;
  os << "retained = " << classes.size() << ", split = " << train << "/" << test
     << ", replica = " << stats.num_classes << " classes / " << stats.total_videos << " videos";
  note = os.str();
  return classes.size() == 3 && train == 80 && test == 20 && stats.num_classes == 101 &&
         stats.total_videos == 18310 && total == 18310;
}

bool criterion_smoke(std::string& note) {
  std::mt19937_64 gen(31);
  io::Clip clip = random_clip(gen, 8, 32, 32);

  RunConfig config;  // full desk defaults: 16 -> {16,32,64}, 8 main blocks
  const auto start = std::chrono::steady_clock::now();
  pipeline::PipelineReport report = pipeline::pipeline_run(clip, config);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool finite = std::isfinite(report.loss_total);

  // byte-identical output across two separate CLI processes, same seed
  const fs::path dir = fs::temp_directory_path() / "darksight_acceptance";
  fs::create_directories(dir);
  io::write_dvt(dir / "smoke.dvt", clip);
  const std::string binary = DARKSIGHT_CLI_PATH;
  const std::string base = "\"" + binary + "\" pipeline --in \"" + (dir / "smoke.dvt").string() +
                           "\" --out \"";
  const int rc1 =
      std::system((base + (dir / "r1.json").string() + "\" 2> /dev/null").c_str());
  const int rc2 =
      std::system((base + (dir / "r2.json").string() + "\" 2> /dev/null").c_str());
  const bool identical = rc1 == 0 && rc2 == 0 && slurp(dir / "r1.json") == slurp(dir / "r2.json");

  std::ostringstream os;
  os << "l_total = " << report.loss_total << " in " << seconds << " s, two CLI runs "
     << (identical ? "byte-identical" : "DIFFER");
  note = os.str();
  return finite && seconds < 10.0 && identical;
}

bool criterion_sweep(std::string& note) {
  std::mt19937_64 gen(37);
  std::vector<io::Clip> clips;
  clips.push_back(random_clip(gen, 8, 16, 16));

  RunConfig config;
  config.num_frames = 4;
  config.interval = 1;
  config.base_channels = 4;
  config.stages = {4, 8};
  config.main_blocks = 1;
  config.num_classes = 11;

  auto rows = pipeline::sweep("mu_out", {0.3, 0.4, 0.5, 0.6, 0.7}, clips, config);
  const std::string csv = pipeline::sweep_csv(rows);
  int lines = 0;
  for (char c : csv) {
    if (c == '\n') ++lines;
  }
  bool finite = rows.size() == 5;
  for (const auto& r : rows) {
    finite = finite && std::isfinite(r.loss_total) && std::isfinite(r.loss_tc) &&
             std::isfinite(r.loss_over) && std::isfinite(r.loss_pix) && std::isfinite(r.loss_ce);
  }
  std::ostringstream os;
  os << rows.size() << " rows, " << (lines - 1) << " data lines, all finite = " << finite;
  note = os.str();
  return finite && lines == 6;  // header + 5 rows
}

}  // namespace

int main() {
  std::vector<Criterion> criteria{
      {1, "gdq oracle equivalence (1e-9) and hand-worked 0.8876 case", criterion_gdq_oracle},
      {2, "threshold semantics are strict at -tau", criterion_threshold},
      {3, "gamma identities", criterion_gamma},
      {4, "loss identity suite", criterion_loss_identities},
      {5, "gradient checks < 1e-4, five losses", criterion_gradcheck},
      {6, "gate check: zeroed gates halve the split sum", criterion_gate},
      {7, "filter checks: delta identity and convex bounds", criterion_filters},
      {8, "dual-path topology and reflected overhead < 15%", criterion_topology},
      {9, "curation counts, split, and large-corpus stats", criterion_curation},
      {10, "end-to-end smoke: finite, < 10 s, byte-identical runs", criterion_smoke},
      {11, "mu_out sweep grid yields 5 finite rows", criterion_sweep},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    std::string note;
    bool ok = false;
    try {
      ok = c.run(note);
    } catch (const std::exception& e) {
      note = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::printf("[%s] criterion %2d: %s — %s\n", ok ? "PASS" : "FAIL", c.number, c.name.c_str(),
                note.c_str());
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", criteria.size());
  return 0;
}
