#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "darksight/error.hpp"
#include "darksight/gdq.hpp"

namespace darksight::curation {

enum class Split { kTrain, kTest, kUnassigned };

inline const char* to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    default: return "unassigned";
  }
}

struct ManifestEntry {
  std::string path;
  std::string class_label;
  int num_frames = 0;
  double d_v = 0.0;
  gdq::Light light = gdq::Light::kNormalLight;
  Split split = Split::kUnassigned;
  std::optional<std::string> scene;  // metadata pass-through
};

// ---------------------------------------------------------------------------
// JSONL manifest: one object per line, field names exactly path,
// class_label, num_frames, D_v, light, split (plus the optional scene).

inline nlohmann::json to_json(const ManifestEntry& e) {
  nlohmann::json j{{"path", e.path},
                   {"class_label", e.class_label},
                   {"num_frames", e.num_frames},
                   {"D_v", e.d_v},
                   {"light", gdq::to_string(e.light)},
                   {"split", to_string(e.split)}};
  if (e.scene) j["scene"] = *e.scene;
  return j;
}

inline ManifestEntry entry_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{"path",  "class_label", "num_frames",
                                              "D_v",   "light",       "split",
                                              "scene"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw IoError("manifest: unknown field '" + item.key() + "'");
    }
  }
  ManifestEntry e;
  e.path = j.at("path").get<std::string>();
  e.class_label = j.at("class_label").get<std::string>();
  e.num_frames = j.at("num_frames").get<int>();
  e.d_v = j.at("D_v").get<double>();
  const std::string light = j.at("light").get<std::string>();
  if (light == "low_light") {
    e.light = gdq::Light::kLowLight;
  } else if (light == "normal_light") {
    e.light = gdq::Light::kNormalLight;
  } else {
    throw IoError("manifest: bad light label '" + light + "'");
  }
  const std::string split = j.value("split", "unassigned");
  if (split == "train") {
    e.split = Split::kTrain;
  } else if (split == "test") {
    e.split = Split::kTest;
  } else if (split == "unassigned") {
    e.split = Split::kUnassigned;
  } else {
    throw IoError("manifest: bad split value '" + split + "'");
  }
  if (j.contains("scene")) e.scene = j.at("scene").get<std::string>();
  return e;
}

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("manifest: cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw IoError("manifest: invalid JSON at " + path.string() + ":" + std::to_string(line_no));
    }
    entries.push_back(entry_from_json(j));
  }
  return entries;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("manifest: cannot open " + path.string() + " for writing");
  for (const auto& e : entries) out << to_json(e).dump() << "\n";
}

// ---------------------------------------------------------------------------
// Class filtering and deterministic split

// Keeps classes with count >= min_count; order of survivors is preserved.
inline std::vector<ManifestEntry> filter_classes(const std::vector<ManifestEntry>& entries,
                                                 int min_count = 150) {
  std::map<std::string, int> counts;
  for (const auto& e : entries) ++counts[e.class_label];
  std::vector<ManifestEntry> retained;
  for (const auto& e : entries) {
    if (counts[e.class_label] >= min_count) retained.push_back(e);
  }
  return retained;
}

namespace detail {

// Seed-mixed FNV-1a over the path; the ordering key for split assignment.
// Hand-rolled (not std::hash) so splits are identical across platforms.
inline std::uint64_t path_rank(std::uint64_t seed, const std::string& path) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (unsigned char ch : path) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  // splitmix64 finalizer
  h += 0x9e3779b97f4a7c15ull;
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
  return h ^ (h >> 31);
}

}  // namespace detail

// Per class, floor(0.8 * n) entries go to train, the remainder to test;
// entries are ranked by seeded hash of path, tie-broken by path.
inline std::vector<ManifestEntry> split_80_20(const std::vector<ManifestEntry>& entries,
                                              std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    by_class[entries[i].class_label].push_back(i);
  }
  std::vector<ManifestEntry> out = entries;
  for (auto& [label, indices] : by_class) {
    std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
      const std::uint64_t ha = detail::path_rank(seed, entries[a].path);
      const std::uint64_t hb = detail::path_rank(seed, entries[b].path);
      if (ha != hb) return ha < hb;
      return entries[a].path < entries[b].path;
    });
    const std::size_t train = static_cast<std::size_t>(0.8 * static_cast<double>(indices.size()));
    for (std::size_t r = 0; r < indices.size(); ++r) {
      out[indices[r]].split = r < train ? Split::kTrain : Split::kTest;
    }
  }
  return out;
}

// Full curation pass: keep low-light entries, drop classes below the
// count threshold, then split 80/20 per class.
inline std::vector<ManifestEntry> curate_corpus(const std::vector<ManifestEntry>& entries,
                                                int min_count, std::uint64_t seed) {
  std::vector<ManifestEntry> dark;
  for (const auto& e : entries) {
    if (e.light == gdq::Light::kLowLight) dark.push_back(e);
  }
  return split_80_20(filter_classes(dark, min_count), seed);
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
  int num_classes = 0;
  std::optional<int> num_scenes;
  std::int64_t total_videos = 0;
  std::map<std::string, int> per_class;
  std::int64_t train_count = 0;
  std::int64_t test_count = 0;
  double split_ratio = 0.0;  // train / (train + test), 0 when unsplit
};

inline CorpusStats stats(const std::vector<ManifestEntry>& entries) {
  CorpusStats s;
  std::map<std::string, bool> scenes;
  bool any_scene = false;
  for (const auto& e : entries) {
    ++s.per_class[e.class_label];
    ++s.total_videos;
    if (e.split == Split::kTrain) ++s.train_count;
    if (e.split == Split::kTest) ++s.test_count;
    if (e.scene) {
      scenes[*e.scene] = true;
      any_scene = true;
    }
  }
  s.num_classes = static_cast<int>(s.per_class.size());
  if (any_scene) s.num_scenes = static_cast<int>(scenes.size());
  if (s.train_count + s.test_count > 0) {
    s.split_ratio = static_cast<double>(s.train_count) /
                    static_cast<double>(s.train_count + s.test_count);
  }
  return s;
}

inline nlohmann::json to_json(const CorpusStats& s) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, count] : s.per_class) per_class[label] = count;
  nlohmann::json j{{"num_classes", s.num_classes},
                   {"total_videos", s.total_videos},
                   {"per_class", per_class},
                   {"train_count", s.train_count},
                   {"test_count", s.test_count},
                   {"split_ratio", s.split_ratio}};
  if (s.num_scenes) j["num_scenes"] = *s.num_scenes;
  return j;
}

}  // namespace darksight::curation
