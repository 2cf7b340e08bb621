#pragma once

// Throughput harness: synthetic uncompressed TIFF frames pushed through the
// image queue at several worker counts.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "radpipe/calib.hpp"

namespace radpipe {

struct BenchOptions {
  std::size_t frames = 100;
  int rows = 1024;
  int cols = 1024;
  std::vector<int> threads{1, 4};
  int repeats = 3;
  int oversampling = 2;
  std::filesystem::path work_dir;  // empty: a fresh directory under the system temp dir
  bool keep_files = false;
  std::uint64_t seed = 1;
  std::function<void(const std::string&)> progress;
};

struct BenchRun {
  int threads = 0;
  std::vector<double> elapsed_s;
  std::vector<double> fps;
  std::vector<double> mb_per_s;
  std::vector<std::string> output_digest;  // one per repeat, over every output file
  std::size_t failed = 0;
  double fps_mean = 0.0;
  double fps_std = 0.0;
  double mb_per_s_mean = 0.0;
};

struct BenchReport {
  std::size_t frames = 0;
  int rows = 0;
  int cols = 0;
  int repeats = 0;
  int oversampling = 0;
  std::uint64_t frame_bytes = 0;
  unsigned hardware_threads = 0;
  double generate_s = 0.0;
  double matrix_build_s = 0.0;
  std::vector<BenchRun> runs;
  bool deterministic = false;    // identical outputs across every run
  double pattern_rel_dev = 0.0;  // integrated first frame vs. the analytic pattern

  const BenchRun* run_for(int threads) const;
  nlohmann::json to_json() const;
};

/// Noise-free count rate of the synthetic pattern: an isotropic power law
/// I(q) = 2000 / (1 + (q / 0.3)^2)^1.5 plus a flat background of 20.
double bench_pattern(double q);

/// Calibration used for synthetic frames: centered beam, 172 um pixels,
/// 2 m distance, Cu K-alpha.
Calibration bench_calibration(int rows, int cols, const std::filesystem::path& image_dir, int oversampling = 2);

/// Writes `count` Poisson realizations of the pattern as int32 TIFF files
/// named frame_00000.tif, ... with consecutive header timestamps.
std::vector<std::filesystem::path> write_synthetic_frames(const Calibration& cal, std::size_t count,
                                                          const std::filesystem::path& dir, std::uint64_t seed = 1);

BenchReport run_bench(const BenchOptions& options);

}  // namespace radpipe
