#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "nsr/core.hpp"

namespace nsr {

// Row-major interleaved float image. Channel count is dynamic (1 or 3 here).
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, float fill = 0.f)
      : w_(width), h_(height), c_(channels),
        data_(static_cast<size_t>(width) * height * channels, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }
  int channels() const { return c_; }
  bool empty() const { return data_.empty(); }
  size_t size() const { return data_.size(); }

  float& at(int x, int y, int ch = 0) { return data_[(static_cast<size_t>(y) * w_ + x) * c_ + ch]; }
  float at(int x, int y, int ch = 0) const { return data_[(static_cast<size_t>(y) * w_ + x) * c_ + ch]; }

  Vec3f pixel3(int x, int y) const {
    return Vec3f(at(x, y, 0), at(x, y, 1), at(x, y, 2));
  }
  void set_pixel3(int x, int y, const Vec3f& v) {
    at(x, y, 0) = v.x(); at(x, y, 1) = v.y(); at(x, y, 2) = v.z();
  }

  bool in_bounds(double x, double y) const {
    return x >= 0.0 && y >= 0.0 && x <= w_ - 1.0 && y <= h_ - 1.0;
  }

  // Bilinear sample of one channel at continuous pixel-grid coordinates,
  // where (0,0) is the center of the top-left pixel. Caller keeps (x,y)
  // inside [0, w-1] x [0, h-1]; edges clamp.
  float sample_bilinear(double x, double y, int ch = 0) const {
    x = std::clamp(x, 0.0, static_cast<double>(w_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(h_ - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, w_ - 1);
    int y1 = std::min(y0 + 1, h_ - 1);
    double fx = x - x0, fy = y - y0;
    double v00 = at(x0, y0, ch), v10 = at(x1, y0, ch);
    double v01 = at(x0, y1, ch), v11 = at(x1, y1, ch);
    return static_cast<float>((v00 * (1 - fx) + v10 * fx) * (1 - fy) +
                              (v01 * (1 - fx) + v11 * fx) * fy);
  }

  // Rec. 709 luma.
  Image luminance() const {
    if (c_ == 1) return *this;
    Image out(w_, h_, 1);
    for (int y = 0; y < h_; ++y)
      for (int x = 0; x < w_; ++x)
        out.at(x, y) = 0.2126f * at(x, y, 0) + 0.7152f * at(x, y, 1) + 0.0722f * at(x, y, 2);
    return out;
  }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

 private:
  int w_ = 0, h_ = 0, c_ = 0;
  std::vector<float> data_;
};

// Byte mask/label image (per-pixel uint8).
class ByteImage {
 public:
  ByteImage() = default;
  ByteImage(int width, int height, uint8_t fill = 0)
      : w_(width), h_(height), data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return w_; }
  int height() const { return h_; }
  bool empty() const { return data_.empty(); }

  uint8_t& at(int x, int y) { return data_[static_cast<size_t>(y) * w_ + x]; }
  uint8_t at(int x, int y) const { return data_[static_cast<size_t>(y) * w_ + x]; }

  size_t count(uint8_t value) const {
    return static_cast<size_t>(std::count(data_.begin(), data_.end(), value));
  }

  uint8_t* data() { return data_.data(); }
  const uint8_t* data() const { return data_.data(); }

 private:
  int w_ = 0, h_ = 0;
  std::vector<uint8_t> data_;
};

inline Image gaussian_blur(const Image& src, double sigma) {
  if (sigma <= 0.0) return src;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;

  const int w = src.width(), h = src.height(), c = src.channels();
  Image tmp(w, h, c), out(w, h, c);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * src.at(std::clamp(x + i, 0, w - 1), y, ch);
        tmp.at(x, y, ch) = static_cast<float>(acc);
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1), ch);
        out.at(x, y, ch) = static_cast<float>(acc);
      }
  return out;
}

}  // namespace nsr
