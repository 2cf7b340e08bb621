#include "radpipe/bench.hpp"

#include <sodium.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <thread>

#include "radpipe/errors.hpp"
#include "radpipe/frame.hpp"
#include "radpipe/geometry.hpp"
#include "radpipe/pipeline.hpp"
#include "radpipe/reduce.hpp"
#include "radpipe/weights.hpp"

namespace radpipe {

namespace fs = std::filesystem;

namespace {

// Poisson sampling dominates frame generation, so a small pool of
// realizations is cycled; every file still gets its own timestamp.
constexpr std::size_t kNoisePool = 8;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string digest_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  crypto_generichash_state state;
  crypto_generichash_init(&state, nullptr, 0, 16);
  for (const auto& f : files) {
    const std::string rel = f.lexically_relative(root).generic_string() + '\0';
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(rel.data()), rel.size());
    std::ifstream in(f, std::ios::binary);
    const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    crypto_generichash_update(&state, reinterpret_cast<const unsigned char*>(body.data()), body.size());
  }
  unsigned char out[16];
  crypto_generichash_final(&state, out, sizeof out);
  char hex[33];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return hex;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

double bench_pattern(double q) { return 2000.0 / std::pow(1.0 + (q / 0.3) * (q / 0.3), 1.5) + 20.0; }

Calibration bench_calibration(int rows, int cols, const fs::path& image_dir, int oversampling) {
  Calibration cal;
  cal.geometry.image_size = {rows, cols};
  cal.geometry.beamcenter = {rows * 0.5 + 0.25, cols * 0.5 - 0.25};
  cal.geometry.detector_distance = 2000.0;
  cal.geometry.pixel_size = {172.0, 172.0};
  cal.geometry.tilt_rotation = 30.0;
  cal.geometry.tilt_angle = 0.5;
  cal.oversampling = oversampling;
  cal.pixels_per_radial_element = 1.0;
  cal.wavelength = 1.5406;
  cal.q_start = 0.05;
  cal.q_stop = 1.0;
  cal.directory = {image_dir.string()};
  cal.threads = 1;
  return cal;
}

std::vector<fs::path> write_synthetic_frames(const Calibration& cal, std::size_t count, const fs::path& dir,
                                             std::uint64_t seed) {
  fs::create_directories(dir);
  const auto& g = cal.geometry;
  const std::size_t n = g.pixel_count();

  std::vector<double> rate(n);
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const auto s = geometry::scatter(g, cal.wavelength, r + 0.5, c + 0.5);
      rate[static_cast<std::size_t>(r) * g.cols() + c] = bench_pattern(s.q);
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> pool;
  const std::size_t pool_size = std::min(count, kNoisePool);
  for (std::size_t k = 0; k < pool_size; ++k) {
    std::vector<double> pixels(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::poisson_distribution<long> draw(rate[i]);
      pixels[i] = static_cast<double>(draw(rng));
    }
    pool.push_back(std::move(pixels));
  }

  std::vector<fs::path> paths;
  Frame frame;
  frame.dims = g.image_size;
  frame.time_source = TimeSource::Header;
  const double t0 = 1.7e9;
  for (std::size_t k = 0; k < count; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.tif", k);
    frame.pixels = pool[k % pool_size];
    frame.acquired_at = t0 + 0.1 * static_cast<double>(k);
    const fs::path p = dir / name;
    save_frame(frame, p);
    paths.push_back(p);
  }
  return paths;
}

const BenchRun* BenchReport::run_for(int threads) const {
  for (const auto& r : runs) {
    if (r.threads == threads) return &r;
  }
  return nullptr;
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json doc;
  doc["frames"] = frames;
  doc["size"] = {rows, cols};
  doc["repeats"] = repeats;
  doc["oversampling"] = oversampling;
  doc["frame_bytes"] = frame_bytes;
  doc["hardware_threads"] = hardware_threads;
  doc["generate_s"] = generate_s;
  doc["matrix_build_s"] = matrix_build_s;
  doc["deterministic"] = deterministic;
  doc["pattern_rel_dev"] = pattern_rel_dev;
  doc["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    doc["runs"].push_back({{"threads", r.threads},
                           {"elapsed_s", r.elapsed_s},
                           {"fps", r.fps},
                           {"mb_per_s", r.mb_per_s},
                           {"fps_mean", r.fps_mean},
                           {"fps_std", r.fps_std},
                           {"mb_per_s_mean", r.mb_per_s_mean},
                           {"failed", r.failed},
                           {"output_digest", r.output_digest}});
  }
  return doc;
}

BenchReport run_bench(const BenchOptions& options) {
  if (options.frames == 0) throw ValidationError("bench needs at least one frame");
  if (options.rows < 1 || options.cols < 1) throw ValidationError("bench frame size must be positive");
  if (options.repeats < 1) throw ValidationError("bench needs at least one repeat");
  if (options.threads.empty()) throw ValidationError("bench needs at least one worker count");
  for (int t : options.threads) {
    if (t < 1) throw ValidationError("worker counts must be >= 1");
  }
  if (sodium_init() < 0) throw Error("libsodium initialization failed");

  auto say = [&](const std::string& msg) {
    if (options.progress) options.progress(msg);
  };

  fs::path work = options.work_dir;
  const bool own_dir = work.empty();
  if (own_dir) {
    work = fs::temp_directory_path() /
           ("radpipe-bench-" + std::to_string(std::chrono::system_clock::now().time_since_epoch().count()));
  }
  const fs::path image_dir = work / "frames";
  const fs::path out_dir = work / "out";

  const auto bytes_per_frame = static_cast<std::uint64_t>(options.rows) * static_cast<std::uint64_t>(options.cols) * 4u;
  const auto needed = bytes_per_frame * options.frames * 11 / 10;
  fs::create_directories(work);
  if (fs::space(work).available < needed) {
    throw IoError("not enough free space in " + work.string() + " for " + std::to_string(options.frames) + " frames");
  }

  BenchReport report;
  report.frames = options.frames;
  report.rows = options.rows;
  report.cols = options.cols;
  report.repeats = options.repeats;
  report.oversampling = options.oversampling;
  report.hardware_threads = std::thread::hardware_concurrency();

  Calibration cal = bench_calibration(options.rows, options.cols, image_dir, options.oversampling);

  say("generating " + std::to_string(options.frames) + " frames");
  auto t0 = Clock::now();
  const auto paths = write_synthetic_frames(cal, options.frames, image_dir, options.seed);
  report.generate_s = seconds_since(t0);
  report.frame_bytes = fs::file_size(paths.front());

  say("building weighting matrix");
  t0 = Clock::now();
  auto weights =
      std::make_shared<const WeightingMatrix>(build_weight_matrix(cal, MaskImage(options.rows, options.cols), {}));
  report.matrix_build_s = seconds_since(t0);

  {
    const RadialProfile p = integrate_frame(*weights, load_frame(paths.front()));
    double dev = 0.0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p.area[j] < 50.0) continue;
      dev += std::abs(p.intensity[j] - bench_pattern(p.q[j])) / bench_pattern(p.q[j]);
      ++used;
    }
    report.pattern_rel_dev = used ? dev / static_cast<double>(used) : 0.0;
  }

  std::string reference_digest;
  report.deterministic = true;
  for (int threads : options.threads) {
    BenchRun run;
    run.threads = threads;
    for (int rep = 0; rep < options.repeats; ++rep) {
      say("workers=" + std::to_string(threads) + " repeat " + std::to_string(rep + 1) + "/" +
          std::to_string(options.repeats));
      const fs::path out = out_dir / ("w" + std::to_string(threads) + "_r" + std::to_string(rep));
      fs::remove_all(out);
      Calibration run_cal = cal;
      run_cal.threads = threads;
      QueueOptions qo;
      qo.output_root = out;
      qo.weights = weights;
      ImageQueue queue(run_cal, qo);
      queue.start();
      const auto start = Clock::now();
      for (const auto& p : paths) queue.enqueue(p.string());
      queue.wait_idle(std::chrono::hours(24));
      const double elapsed = seconds_since(start);
      const auto st = queue.status();
      queue.abort();

      run.failed += st.failed;
      run.elapsed_s.push_back(elapsed);
      run.fps.push_back(static_cast<double>(options.frames) / elapsed);
      run.mb_per_s.push_back(static_cast<double>(report.frame_bytes * options.frames) / 1e6 / elapsed);
      run.output_digest.push_back(digest_tree(out));
      if (reference_digest.empty()) reference_digest = run.output_digest.back();
      if (run.output_digest.back() != reference_digest) report.deterministic = false;
      if (!options.keep_files) fs::remove_all(out);
    }
    std::tie(run.fps_mean, run.fps_std) = mean_std(run.fps);
    run.mb_per_s_mean = mean_std(run.mb_per_s).first;
    spdlog::info("bench: {} workers: {:.2f} +/- {:.2f} fps, {:.1f} MB/s", threads, run.fps_mean, run.fps_std,
                 run.mb_per_s_mean);
    report.runs.push_back(std::move(run));
  }

  if (!options.keep_files) {
    std::error_code ec;
    if (own_dir) {
      fs::remove_all(work, ec);
    } else {
      fs::remove_all(image_dir, ec);
      fs::remove_all(out_dir, ec);
    }
  }
  return report;
}

}  // namespace radpipe
