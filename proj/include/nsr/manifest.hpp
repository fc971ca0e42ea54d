#pragma once

#include <chrono>
#include <filesystem>
#include <string>

#include "nsr/config.hpp"
#include "nsr/core.hpp"

namespace nsr {

inline constexpr const char* kToolVersion = "0.1.0";

// Every command writes exactly one manifest into its output directory:
// what ran, with which seed and inputs, where the artifacts are, how long
// it took. Re-running with the same manifest inputs reproduces the logs up
// to the documented determinism limits.
class RunManifest {
 public:
  RunManifest(std::string command, std::string out_dir)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    kv_.set("command", command);
    kv_.set("tool_version", kToolVersion);
  }

  void set(const std::string& key, const std::string& value) { kv_.set(key, value); }
  void set_seed(uint64_t seed) { kv_.set("seed", std::to_string(seed)); }
  void set_scene(const std::string& scene) { kv_.set("scene", scene); }
  void add_output(const std::string& name, const std::string& path) { kv_.set("output_" + name, path); }

  void finalize() {
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    kv_.set("duration_seconds", std::to_string(elapsed));
    std::filesystem::create_directories(out_dir_);
    kv_.save(out_dir_ + "/manifest.txt");
  }

 private:
  KeyValueConfig kv_;
  std::string out_dir_;
  std::chrono::steady_clock::time_point start_;
};

// Output-directory policy shared by all commands: refuse to clobber existing
// artifacts unless --overwrite is given.
inline void prepare_out_dir(const std::string& dir, bool overwrite) {
  namespace fs = std::filesystem;
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw ValidationError("output path exists and is not a directory: " + dir);
  if (fs::exists(fs::path(dir) / "manifest.txt") && !overwrite)
    throw ValidationError("output directory already contains results (use --overwrite): " + dir);
  fs::create_directories(dir);
}

}  // namespace nsr
