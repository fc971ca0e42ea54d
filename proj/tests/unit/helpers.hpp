#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include "nsr/config.hpp"
#include "nsr/synthetic.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TmpDir {
  std::filesystem::path path;

  TmpDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("nsr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const { return (path / name).string(); }
};

inline nsr::KeyValueConfig plane_spec(int n_views = 6, int width = 64, int height = 48,
                                      double amp = 0.35) {
  nsr::KeyValueConfig spec;
  spec.set("primitive", "plane");
  spec.set("n_views", std::to_string(n_views));
  spec.set("width", std::to_string(width));
  spec.set("height", std::to_string(height));
  spec.set("focal", "55");
  spec.set("seed", "11");
  spec.set("floor_amp", std::to_string(amp));
  spec.set("noise_scale", "2.5");
  return spec;
}

inline nsr::KeyValueConfig room_spec(int n_views = 12, int width = 64, int height = 48) {
  nsr::KeyValueConfig spec;
  spec.set("primitive", "box_room");
  spec.set("n_views", std::to_string(n_views));
  spec.set("width", std::to_string(width));
  spec.set("height", std::to_string(height));
  spec.set("focal", "50");
  spec.set("seed", "3");
  spec.set("pitches", "-40,-10,15,40");
  return spec;
}

inline nsr::KeyValueConfig pillar_spec(int n_views = 16, int width = 64, int height = 48) {
  nsr::KeyValueConfig spec = room_spec(n_views, width, height);
  spec.set("primitive", "box_room_pillar");
  spec.set("pitches", "0");
  spec.set("prior_mode", "background");
  spec.set("wall_amp", "0.05");
  return spec;
}

}  // namespace testutil
