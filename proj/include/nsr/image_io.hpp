#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "nsr/core.hpp"
#include "nsr/image.hpp"

namespace nsr {

// --- PPM (binary P6), 8-bit RGB. Lossless and universally readable. ---

inline void write_ppm(const std::string& path, const Image& img) {
  if (img.channels() != 3) throw ValidationError("write_ppm: need 3 channels: " + path);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot write image: " + path);
  f << "P6\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c) {
        float v = clamp01(img.at(x, y, c));
        row[x * 3 + c] = static_cast<uint8_t>(v * 255.0f + 0.5f);
      }
    f.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!f) throw RuntimeError("short write: " + path);
}

namespace detail {
inline int ppm_read_token(std::istream& in) {
  // Skips whitespace and '#' comments per the netpbm grammar.
  int c = in.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#')
      while (c != EOF && c != '\n') c = in.get();
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw ValidationError("ppm: malformed header");
  return value;
}
}  // namespace detail

inline Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open image: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0); f.get(m1);
  if (m0 != 'P' || m1 != '6') throw ValidationError("ppm: not a P6 file: " + path);
  int w = detail::ppm_read_token(f);
  int h = detail::ppm_read_token(f);
  int maxv = detail::ppm_read_token(f);
  if (w <= 0 || h <= 0 || maxv != 255) throw ValidationError("ppm: unsupported header in " + path);
  Image img(w, h, 3);
  std::vector<uint8_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()), row.size());
    if (!f) throw ValidationError("ppm: truncated pixel data in " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[x * 3 + c] / 255.0f;
  }
  return img;
}

// --- FMAP: raw float/byte raster with a small header. ---
// Layout: magic "FMAP", u32 version, u32 height, u32 width, u32 channels,
// u32 dtype (0 = float32, 1 = uint8), then row-major data.

inline constexpr uint32_t kFmapVersion = 1;

namespace detail {
inline void fmap_write_header(std::ofstream& f, uint32_t h, uint32_t w, uint32_t c, uint32_t dtype) {
  f.write("FMAP", 4);
  uint32_t hdr[5] = {kFmapVersion, h, w, c, dtype};
  f.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
}

inline void fmap_read_header(std::ifstream& f, const std::string& path,
                             uint32_t& h, uint32_t& w, uint32_t& c, uint32_t& dtype) {
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "FMAP", 4) != 0) throw ValidationError("fmap: bad magic in " + path);
  uint32_t hdr[5];
  f.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  if (!f) throw ValidationError("fmap: truncated header in " + path);
  if (hdr[0] != kFmapVersion) throw ValidationError("fmap: unsupported version in " + path);
  h = hdr[1]; w = hdr[2]; c = hdr[3]; dtype = hdr[4];
  if (h == 0 || w == 0 || c == 0 || c > 4 || dtype > 1)
    throw ValidationError("fmap: invalid header in " + path);
}
}  // namespace detail

inline void write_fmap(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot write map: " + path);
  detail::fmap_write_header(f, img.height(), img.width(), img.channels(), 0);
  f.write(reinterpret_cast<const char*>(img.data()), img.size() * sizeof(float));
  if (!f) throw RuntimeError("short write: " + path);
}

inline void write_fmap(const std::string& path, const ByteImage& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeError("cannot write map: " + path);
  detail::fmap_write_header(f, img.height(), img.width(), 1, 1);
  f.write(reinterpret_cast<const char*>(img.data()),
          static_cast<size_t>(img.width()) * img.height());
  if (!f) throw RuntimeError("short write: " + path);
}

inline Image read_fmap(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open map: " + path);
  uint32_t h, w, c, dtype;
  detail::fmap_read_header(f, path, h, w, c, dtype);
  if (dtype != 0) throw ValidationError("fmap: expected float32 data in " + path);
  Image img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  f.read(reinterpret_cast<char*>(img.data()), img.size() * sizeof(float));
  if (!f) throw ValidationError("fmap: truncated data in " + path);
  return img;
}

inline ByteImage read_fmap_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open map: " + path);
  uint32_t h, w, c, dtype;
  detail::fmap_read_header(f, path, h, w, c, dtype);
  if (dtype != 1 || c != 1) throw ValidationError("fmap: expected 1-channel uint8 data in " + path);
  ByteImage img(static_cast<int>(w), static_cast<int>(h));
  f.read(reinterpret_cast<char*>(img.data()), static_cast<size_t>(w) * h);
  if (!f) throw ValidationError("fmap: truncated data in " + path);
  return img;
}

}  // namespace nsr
