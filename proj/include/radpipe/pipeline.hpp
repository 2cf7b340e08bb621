#pragma once

// The image queue: a FIFO of image paths, filled by feeder events or a
// directory walker, drained by a pool of integration workers.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "radpipe/calib.hpp"
#include "radpipe/history.hpp"
#include "radpipe/mask.hpp"
#include "radpipe/reduce.hpp"
#include "radpipe/weights.hpp"

namespace radpipe {

struct QueueStatus {
  bool active = false;
  int workers = 0;
  std::size_t pending = 0;  // waiting or being processed
  std::size_t in_flight = 0;
  std::size_t processed = 0;  // succeeded
  std::size_t failed = 0;
  std::size_t discarded = 0;  // dropped by abort / reintegrate
  std::size_t total_enqueued = 0;  // processed + failed + pending, current generation
  double rate_fps = 0.0;           // over the last 100 completions
  double elapsed_s = 0.0;          // first item start to last completion
  std::uint64_t generation = 0;
};

struct FailureRecord {
  std::string path;
  std::string error;
};

struct FrameResult {
  ClassifierRecord record;
  RadialProfile profile;
  std::filesystem::path output;
};

struct QueueOptions {
  std::filesystem::path output_root;  // overrides the calibration's output_directory
  std::filesystem::path cache_dir;    // weighting matrix cache; empty disables it
  std::shared_ptr<const WeightingMatrix> weights;  // prebuilt matrix, skips the build
  std::function<void(const FrameResult&)> on_result;
  std::function<void(const FailureRecord&)> on_failure;
  int read_retries = 3;
  std::chrono::milliseconds retry_backoff{50};
};

class ImageQueue {
 public:
  /// Loads masks and builds (or loads) the weighting matrix. Workers are not
  /// started until start().
  explicit ImageQueue(Calibration cal, QueueOptions options = {});
  ~ImageQueue();

  ImageQueue(const ImageQueue&) = delete;
  ImageQueue& operator=(const ImageQueue&) = delete;

  void start();

  /// Appends one path. Throws ProtocolError when the queue is not active.
  void enqueue(const std::string& path);

  /// Recursively enqueues every image under `root` in lexicographic order.
  std::size_t walk_directory(const std::filesystem::path& root);

  /// Discards pending items, lets in-flight items finish and stops the
  /// workers. Idempotent.
  void abort();

  /// Discards pending items, resets counters and history, and walks every
  /// calibration directory again.
  std::size_t reintegrate();

  /// Blocks until nothing is pending or the timeout expires.
  bool wait_idle(std::chrono::milliseconds timeout) const;

  QueueStatus status() const;
  const HistoryStore& history() const noexcept { return history_; }
  std::vector<FailureRecord> failures() const;
  std::optional<RadialProfile> latest_profile() const;

  const Calibration& calibration() const noexcept { return cal_; }
  const WeightingMatrix& weights() const noexcept { return *weights_; }
  const std::filesystem::path& output_root() const noexcept { return output_root_; }

  /// Output file and the source label written into it for an image path.
  std::filesystem::path output_path_for(const std::string& image) const;
  std::string display_path_for(const std::string& image) const;

 private:
  struct Item {
    std::string path;
    std::uint64_t generation;
    int attempts = 0;
    std::chrono::steady_clock::time_point ready{};
  };

  void worker_loop(std::stop_token stop);
  void process(const Item& item, std::stop_token stop);
  bool schedule_retry(Item item, const std::exception& error, std::stop_token stop);
  std::optional<std::filesystem::path> root_of(const std::filesystem::path& image) const;
  void finish(const Item& item, bool ok);

  Calibration cal_;
  QueueOptions options_;
  std::shared_ptr<const WeightingMatrix> weights_;
  std::vector<MaskImage> masks_;
  std::vector<std::filesystem::path> roots_;
  std::filesystem::path output_root_;
  HistoryStore history_;

  mutable std::mutex mutex_;
  mutable std::condition_variable_any cv_;
  mutable std::condition_variable idle_cv_;
  std::deque<Item> queue_;
  std::deque<Item> retry_;  // failed reads waiting out their backoff, in ready order
  bool active_ = false;
  bool aborted_ = false;
  std::uint64_t generation_ = 0;
  std::size_t in_flight_ = 0;
  std::size_t processed_ = 0;
  std::size_t failed_ = 0;
  std::size_t discarded_ = 0;
  std::size_t enqueued_ = 0;
  std::deque<std::chrono::steady_clock::time_point> completions_;
  std::optional<std::chrono::steady_clock::time_point> first_start_;
  std::optional<std::chrono::steady_clock::time_point> last_done_;
  std::vector<FailureRecord> failures_;
  std::optional<RadialProfile> latest_;

  std::vector<std::jthread> workers_;
};

/// Constructs and starts a queue.
std::unique_ptr<ImageQueue> start_queue(Calibration cal, QueueOptions options = {});

/// True if the path has one of the extensions (case-insensitive).
bool has_image_extension(const std::filesystem::path& path, const std::vector<std::string>& extensions);

/// Every image under root, sorted lexicographically.
std::vector<std::filesystem::path> find_images(const std::filesystem::path& root,
                                               const std::vector<std::string>& extensions);

/// CSV of the classifier history (one row per record).
std::string history_csv(const std::vector<ClassifierRecord>& records);

}  // namespace radpipe
