#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "radpipe/calib.hpp"
#include "radpipe/frame.hpp"

namespace fixtures {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<unsigned> counter{0};
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("radpipe-" + tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Relative path -> contents of every regular file under root.
inline std::map<std::string, std::string> snapshot(const fs::path& root, const std::string& extension = "") {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (!extension.empty() && e.path().extension() != extension) continue;
    out[e.path().lexically_relative(root).generic_string()] = read_file(e.path());
  }
  return out;
}

inline bool wait_until(const std::function<bool()>& pred, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (!pred()) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return true;
}

/// A small untilted calibration watching `dir`.
inline radpipe::Calibration small_calibration(int rows, int cols, const fs::path& dir, int threads = 2) {
  radpipe::Calibration cal;
  cal.geometry.image_size = {rows, cols};
  cal.geometry.beamcenter = {rows * 0.4 + 0.3, cols * 0.55 - 0.2};
  cal.geometry.detector_distance = 1500.0;
  cal.geometry.pixel_size = {172.0, 172.0};
  cal.geometry.tilt_rotation = 20.0;
  cal.geometry.tilt_angle = 2.0;
  cal.oversampling = 2;
  cal.pixels_per_radial_element = 1.0;
  cal.q_start = 0.05;
  cal.q_stop = 0.8;
  cal.wavelength = 1.54;
  cal.directory = {dir.string()};
  cal.threads = threads;
  return cal;
}

/// Writes a frame with Poisson-like random counts and a header timestamp.
inline void write_frame(const fs::path& path, int rows, int cols, std::uint64_t seed, double acquired_at) {
  std::mt19937_64 rng(seed);
  std::poisson_distribution<int> counts(50.0);
  radpipe::Frame f;
  f.dims = {rows, cols};
  f.pixels.resize(static_cast<std::size_t>(rows) * cols);
  for (auto& p : f.pixels) p = counts(rng);
  f.acquired_at = acquired_at;
  fs::create_directories(path.parent_path());
  radpipe::save_frame(f, path);
}

}  // namespace fixtures
