#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "darksight/error.hpp"
#include "darksight/tensor.hpp"

namespace darksight::io {

// A frame stack as read from disk: T x 3 x H x W, 8-bit.
struct Clip {
  TensorT<std::uint8_t> frames;
  std::optional<double> fps;
  std::string source_path;

  int num_frames() const { return frames.extent(0); }
  int channels() const { return frames.extent(1); }
  int height() const { return frames.extent(2); }
  int width() const { return frames.extent(3); }
};

inline Clip make_clip(TensorT<std::uint8_t> frames, std::string source_path = {}) {
  if (frames.rank() != 4) throw ShapeError("clip frames must be rank-4 (T,3,H,W)");
  if (frames.extent(1) != 3) throw ShapeError("clip frames must have 3 channel planes");
  Clip clip;
  clip.frames = std::move(frames);
  clip.source_path = std::move(source_path);
  return clip;
}

// Normalize to [0,1] reals, T x 3 x H x W.
template <class T>
TensorT<T> clip_to_real(const Clip& clip) {
  TensorT<T> out(clip.frames.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    out[i] = static_cast<T>(clip.frames[i]) / T{255};
  }
  return out;
}

// ---------------------------------------------------------------------------
// PPM (binary P6, maxval 255)

namespace detail {

inline int ppm_read_header_int(std::istream& in, const std::string& path) {
  // skip whitespace and '#' comment lines between header tokens
  int ch = in.peek();
  while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '#') {
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      in.get();
    }
    ch = in.peek();
  }
  int value = 0;
  if (!(in >> value)) throw IoError("ppm: malformed header in " + path);
  return value;
}

}  // namespace detail

// Reads one binary PPM frame as a 3 x H x W tensor (planar).
inline TensorT<std::uint8_t> read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("ppm: cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') {
    throw IoError("ppm: " + path.string() + " is not a binary P6 file");
  }
  const int w = detail::ppm_read_header_int(in, path.string());
  const int h = detail::ppm_read_header_int(in, path.string());
  const int maxval = detail::ppm_read_header_int(in, path.string());
  if (w < 1 || h < 1) throw IoError("ppm: bad dimensions in " + path.string());
  if (maxval != 255) {
    throw IoError("ppm: " + path.string() + " has maxval " + std::to_string(maxval) +
                  ", only 255 is supported");
  }
  in.get();  // single whitespace byte before the raster
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw IoError("ppm: truncated raster in " + path.string());
  }
  TensorT<std::uint8_t> frame({3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
      frame.at(0, y, x) = raw[base];
      frame.at(1, y, x) = raw[base + 1];
      frame.at(2, y, x) = raw[base + 2];
    }
  }
  return frame;
}

inline void write_ppm(const std::filesystem::path& path, const TensorT<std::uint8_t>& frame) {
  if (frame.rank() != 3 || frame.extent(0) != 3) {
    throw ShapeError("write_ppm: frame must be 3 x H x W");
  }
  const int h = frame.extent(1), w = frame.extent(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("ppm: cannot open " + path.string() + " for writing");
  out << "P6\n" << w << " " << h << "\n255\n";
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * w + x) * 3;
      raw[base] = frame.at(0, y, x);
      raw[base + 1] = frame.at(1, y, x);
      raw[base + 2] = frame.at(2, y, x);
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw IoError("ppm: short write to " + path.string());
}

// Lexicographic filename order defines time.
inline Clip read_ppm_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("ppm sequence: " + dir.string() + " is not a directory");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw IoError("ppm sequence: no .ppm files in " + dir.string());
  std::sort(files.begin(), files.end());

  TensorT<std::uint8_t> first = read_ppm(files[0]);
  const int h = first.extent(1), w = first.extent(2);
  TensorT<std::uint8_t> frames({static_cast<int>(files.size()), 3, h, w});
  std::copy(first.data(), first.data() + first.numel(), frames.data());
  for (std::size_t t = 1; t < files.size(); ++t) {
    TensorT<std::uint8_t> frame = read_ppm(files[t]);
    if (frame.extent(1) != h || frame.extent(2) != w) {
      throw IoError("ppm sequence: mixed resolutions, offending file " + files[t].string());
    }
    std::copy(frame.data(), frame.data() + frame.numel(),
              frames.data() + static_cast<std::int64_t>(t) * frame.numel());
  }
  Clip clip = make_clip(std::move(frames), dir.string());
  return clip;
}

inline std::vector<std::filesystem::path> write_ppm_sequence(const Clip& clip,
                                                             const std::filesystem::path& dir,
                                                             const std::string& prefix = "frame_") {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (int t = 0; t < clip.num_frames(); ++t) {
    TensorT<std::uint8_t> frame({3, clip.height(), clip.width()});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x) frame.at(c, y, x) = clip.frames.at(t, c, y, x);
    char name[32];
    std::snprintf(name, sizeof(name), "%s%05d.ppm", prefix.c_str(), t);
    const std::filesystem::path path = dir / name;
    write_ppm(path, frame);
    written.push_back(path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// DVT container: "DVT1" magic, version u16, dtype u16 (0 = u8, 1 = f32),
// then T,C,H,W as u32. All integers little-endian, no padding; payload is
// row-major, frame-major.

constexpr char kDvtMagic[4] = {'D', 'V', 'T', '1'};
constexpr std::uint16_t kDvtVersion = 1;

enum class DvtType : std::uint16_t { kU8 = 0, kF32 = 1 };

struct DvtData {
  DvtType dtype = DvtType::kU8;
  TensorT<std::uint8_t> u8;  // valid when dtype == kU8
  TensorT<float> f32;        // valid when dtype == kF32

  bool is_u8() const { return dtype == DvtType::kU8; }
};

namespace detail {

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_dvt_header(std::ostream& out, DvtType dtype, int t, int c, int h, int w) {
  out.write(kDvtMagic, 4);
  put_u16(out, kDvtVersion);
  put_u16(out, static_cast<std::uint16_t>(dtype));
  put_u32(out, static_cast<std::uint32_t>(t));
  put_u32(out, static_cast<std::uint32_t>(c));
  put_u32(out, static_cast<std::uint32_t>(h));
  put_u32(out, static_cast<std::uint32_t>(w));
}

}  // namespace detail

inline void write_dvt(const std::filesystem::path& path, const TensorT<std::uint8_t>& frames) {
  if (frames.rank() != 4) throw ShapeError("write_dvt: tensor must be rank-4 (T,C,H,W)");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("dvt: cannot open " + path.string() + " for writing");
  detail::write_dvt_header(out, DvtType::kU8, frames.extent(0), frames.extent(1),
                           frames.extent(2), frames.extent(3));
  out.write(reinterpret_cast<const char*>(frames.data()),
            static_cast<std::streamsize>(frames.numel()));
  if (!out) throw IoError("dvt: short write to " + path.string());
}

inline void write_dvt(const std::filesystem::path& path, const TensorT<float>& frames) {
  if (frames.rank() != 4) throw ShapeError("write_dvt: tensor must be rank-4 (T,C,H,W)");
  for (std::int64_t i = 0; i < frames.numel(); ++i) {
    if (!std::isfinite(frames[i])) {
      throw NumericError("dvt: refusing to write non-finite value at flat index " +
                         std::to_string(i));
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("dvt: cannot open " + path.string() + " for writing");
  detail::write_dvt_header(out, DvtType::kF32, frames.extent(0), frames.extent(1),
                           frames.extent(2), frames.extent(3));
  for (std::int64_t i = 0; i < frames.numel(); ++i) {
    float v = frames[i];
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_u32(out, bits);
  }
  if (!out) throw IoError("dvt: short write to " + path.string());
}

inline void write_dvt(const std::filesystem::path& path, const Clip& clip) {
  write_dvt(path, clip.frames);
}

inline DvtData read_dvt(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("dvt: cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kDvtMagic, 4) != 0) {
    throw IoError("dvt: bad magic in " + path.string());
  }
  const std::uint16_t version = detail::get_u16(in);
  if (version != kDvtVersion) {
    throw IoError("dvt: unsupported version " + std::to_string(version) + " in " + path.string());
  }
  const std::uint16_t dtype = detail::get_u16(in);
  if (dtype > 1) throw IoError("dvt: unknown dtype code in " + path.string());
  const int t = static_cast<int>(detail::get_u32(in));
  const int c = static_cast<int>(detail::get_u32(in));
  const int h = static_cast<int>(detail::get_u32(in));
  const int w = static_cast<int>(detail::get_u32(in));
  if (!in || t < 1 || c < 1 || h < 1 || w < 1) {
    throw IoError("dvt: bad header extents in " + path.string());
  }
  const std::int64_t count = static_cast<std::int64_t>(t) * c * h * w;

  DvtData data;
  data.dtype = static_cast<DvtType>(dtype);
  if (data.dtype == DvtType::kU8) {
    std::vector<std::uint8_t> payload(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::int64_t>(in.gcount()) != count) {
      throw IoError("dvt: short payload in " + path.string());
    }
    data.u8 = TensorT<std::uint8_t>({t, c, h, w}, std::move(payload));
  } else {
    std::vector<float> payload(static_cast<std::size_t>(count));
    std::vector<char> raw(static_cast<std::size_t>(count) * 4);
    in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
      throw IoError("dvt: short payload in " + path.string());
    }
    for (std::int64_t i = 0; i < count; ++i) {
      const unsigned char* b = reinterpret_cast<const unsigned char*>(raw.data()) + i * 4;
      const std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                                 (static_cast<std::uint32_t>(b[1]) << 8) |
                                 (static_cast<std::uint32_t>(b[2]) << 16) |
                                 (static_cast<std::uint32_t>(b[3]) << 24);
      float v;
      std::memcpy(&v, &bits, 4);
      payload[static_cast<std::size_t>(i)] = v;
    }
    data.f32 = TensorT<float>({t, c, h, w}, std::move(payload));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Clip sampling: indices 0, interval, 2*interval, ... wrapping cyclically
// when the source is exhausted, so the output always has num_frames frames.

inline Clip sample_clip(const Clip& clip, int num_frames, int interval) {
  if (num_frames < 1) throw ValueError("sample_clip: num_frames must be >= 1");
  if (interval < 1) throw ValueError("sample_clip: interval must be >= 1");
  const int t_in = clip.num_frames();
  const std::int64_t frame_size =
      static_cast<std::int64_t>(clip.channels()) * clip.height() * clip.width();
  TensorT<std::uint8_t> frames({num_frames, clip.channels(), clip.height(), clip.width()});
  for (int i = 0; i < num_frames; ++i) {
    const int src = static_cast<int>((static_cast<std::int64_t>(i) * interval) % t_in);
    std::copy(clip.frames.data() + src * frame_size, clip.frames.data() + (src + 1) * frame_size,
              frames.data() + static_cast<std::int64_t>(i) * frame_size);
  }
  Clip out = make_clip(std::move(frames), clip.source_path);
  out.fps = clip.fps;
  return out;
}

// Indices chosen by sample_clip, exposed for tests and tooling.
inline std::vector<int> sample_indices(int source_frames, int num_frames, int interval) {
  if (source_frames < 1) throw ValueError("sample_indices: empty source");
  if (num_frames < 1 || interval < 1) throw ValueError("sample_indices: bad arguments");
  std::vector<int> idx(static_cast<std::size_t>(num_frames));
  for (int i = 0; i < num_frames; ++i) {
    idx[static_cast<std::size_t>(i)] =
        static_cast<int>((static_cast<std::int64_t>(i) * interval) % source_frames);
  }
  return idx;
}

// Loads a clip from either a DVT file or a directory of PPM frames.
// f32 payloads are assumed to hold [0,1] values and are quantized to u8
// only when a u8 clip is required; load_real keeps them exact.
inline Clip load_clip(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return read_ppm_sequence(path);
  DvtData data = read_dvt(path);
  if (data.is_u8()) {
    Clip clip = make_clip(std::move(data.u8), path.string());
    return clip;
  }
  TensorT<std::uint8_t> frames(data.f32.shape());
  for (std::int64_t i = 0; i < frames.numel(); ++i) {
    const float v = std::clamp(data.f32[i], 0.0f, 1.0f);
    frames[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return make_clip(std::move(frames), path.string());
}

// Loads a clip as [0,1] reals without quantization loss for f32 payloads.
template <class T>
TensorT<T> load_real(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return clip_to_real<T>(read_ppm_sequence(path));
  DvtData data = read_dvt(path);
  if (data.is_u8()) {
    TensorT<T> out(data.u8.shape());
    for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(data.u8[i]) / T{255};
    return out;
  }
  return data.f32.template cast<T>();
}

}  // namespace darksight::io
