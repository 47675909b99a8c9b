#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "darksight/error.hpp"

namespace darksight {

// Plain-text key=value run configuration. Desk-scale defaults; full-scale
// sampling values (num_frames=32) stay reachable via the file.
// DARKSIGHT_SEED in the environment overrides the seed.
struct RunConfig {
  std::uint64_t seed = 42;
  double mu_out = 0.5;
  int u_p = 5;
  double tau = 0.877;
  int grid = 4;
  int num_frames = 8;
  int interval = 3;
  std::vector<int> stages{16, 32, 64};
  int num_classes = 101;
  int base_channels = 16;
  int main_blocks = 8;

  void validate() const {
    if (mu_out <= 0.0 || mu_out >= 1.0) throw ValueError("config: mu_out must lie in (0,1)");
    if (u_p < 1 || u_p % 2 == 0) throw ValueError("config: u_p must be odd and >= 1");
    if (tau <= 0.0) throw ValueError("config: tau must be positive");
    if (grid < 1) throw ValueError("config: grid must be >= 1");
    if (num_frames < 2) throw ValueError("config: num_frames must be >= 2");
    if (interval < 1) throw ValueError("config: interval must be >= 1");
    if (stages.empty()) throw ValueError("config: stages must not be empty");
    if (num_classes < 2) throw ValueError("config: num_classes must be >= 2");
    if (base_channels < 1) throw ValueError("config: base_channels must be >= 1");
    if (main_blocks < 1) throw ValueError("config: main_blocks must be >= 1");
  }

  // Echoed into every JSON output for provenance.
  nlohmann::json to_json() const {
    return nlohmann::json{{"seed", seed},
                          {"mu_out", mu_out},
                          {"u_p", u_p},
                          {"tau", tau},
                          {"grid", grid},
                          {"num_frames", num_frames},
                          {"interval", interval},
                          {"stages", stages},
                          {"num_classes", num_classes},
                          {"base_channels", base_channels},
                          {"main_blocks", main_blocks}};
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ValueError("config: bad integer '" + item + "' for key " + key);
    }
  }
  if (out.empty()) throw ValueError("config: empty list for key " + key);
  return out;
}

}  // namespace detail

inline void apply_env_seed(RunConfig& config) {
  if (const char* env = std::getenv("DARKSIGHT_SEED")) {
    try {
      config.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ValueError("DARKSIGHT_SEED is not a valid unsigned integer");
    }
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open " + path.string());
  RunConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ValueError("config: missing '=' at " + path.string() + ":" + std::to_string(line_no));
    }
    const std::string key = detail::trim(trimmed.substr(0, eq));
    const std::string value = detail::trim(trimmed.substr(eq + 1));
    try {
      if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "mu_out") {
        config.mu_out = std::stod(value);
      } else if (key == "u_p") {
        config.u_p = std::stoi(value);
      } else if (key == "tau") {
        config.tau = std::stod(value);
      } else if (key == "grid") {
        config.grid = std::stoi(value);
      } else if (key == "num_frames") {
        config.num_frames = std::stoi(value);
      } else if (key == "interval") {
        config.interval = std::stoi(value);
      } else if (key == "stages") {
        config.stages = detail::parse_int_list(value, key);
      } else if (key == "num_classes") {
        config.num_classes = std::stoi(value);
      } else if (key == "base_channels") {
        config.base_channels = std::stoi(value);
      } else if (key == "main_blocks") {
        config.main_blocks = std::stoi(value);
      } else {
        throw ValueError("config: unknown key '" + key + "' at " + path.string() + ":" +
                         std::to_string(line_no));
      }
    } catch (const ValueError&) {
      throw;
    } catch (const std::exception&) {
      throw ValueError("config: bad value '" + value + "' for key " + key);
    }
  }
  apply_env_seed(config);
  config.validate();
  return config;
}

}  // namespace darksight
