#include "radpipe/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>

#include "radpipe/chi.hpp"
#include "radpipe/errors.hpp"
#include "radpipe/frame.hpp"

namespace radpipe {

namespace fs = std::filesystem;

namespace {

fs::path canonical_or_absolute(const fs::path& p) {
  std::error_code ec;
  auto c = fs::weakly_canonical(p, ec);
  return ec ? fs::absolute(p).lexically_normal() : c;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

bool has_image_extension(const fs::path& path, const std::vector<std::string>& extensions) {
  const std::string ext = lower(path.extension().string());
  return std::any_of(extensions.begin(), extensions.end(), [&](const std::string& e) { return lower(e) == ext; });
}

std::vector<fs::path> find_images(const fs::path& root, const std::vector<std::string>& extensions) {
  if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied)) {
    if (entry.is_regular_file() && has_image_extension(entry.path(), extensions)) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageQueue::ImageQueue(Calibration cal, QueueOptions options) : cal_(std::move(cal)), options_(std::move(options)) {
  validate(cal_);
  for (const auto& source : cal_.masks) {
    MaskImage m = load_mask(source);
    check_mask_dims(m, cal_.geometry);
    masks_.push_back(std::move(m));
  }
  for (const auto& d : cal_.directory) roots_.push_back(canonical_or_absolute(d));

  if (!options_.output_root.empty()) {
    output_root_ = options_.output_root;
  } else if (!cal_.output_directory.empty()) {
    output_root_ = cal_.output_directory;
  } else if (!cal_.directory.empty()) {
    output_root_ = fs::path(cal_.directory.front()) / "processed";
  } else {
    throw ValidationError("no output directory: set output_directory or directory");
  }

  if (options_.weights) {
    if (options_.weights->dims != cal_.geometry.image_size) throw DimensionError("prebuilt weights do not match the sensor");
    weights_ = options_.weights;
  } else {
    const MaskImage combined = combine_masks(masks_, cal_.geometry.image_size);
    weights_ = std::make_shared<const WeightingMatrix>(
        build_or_load_weights(cal_, combined, options_.cache_dir, BuildOptions{cal_.threads}));
  }

  const auto& edges = weights_->q_edges;
  if (cal_.q_start < edges.front() || cal_.q_stop > edges.back()) {
    spdlog::warn("classifier range [{}, {}] nm^-1 exceeds the q grid [{}, {}]; clamping to the grid", cal_.q_start,
                 cal_.q_stop, edges.front(), edges.back());
  }
}

ImageQueue::~ImageQueue() { abort(); }

void ImageQueue::start() {
  std::lock_guard lock(mutex_);
  if (active_) return;
  if (aborted_) throw ProtocolError("an aborted queue cannot be restarted");
  fs::create_directories(output_root_);
  active_ = true;
  for (int t = 0; t < cal_.threads; ++t) {
    workers_.emplace_back([this](std::stop_token stop) { worker_loop(stop); });
  }
  spdlog::info("image queue started with {} workers, {} bins, {} nonzero weights", cal_.threads,
               weights_->n_bins(), weights_->nonzeros());
}

void ImageQueue::enqueue(const std::string& path) {
  {
    std::lock_guard lock(mutex_);
    if (!active_) throw ProtocolError("image queue is not active");
    queue_.push_back({path, generation_});
    ++enqueued_;
  }
  cv_.notify_one();
}

std::size_t ImageQueue::walk_directory(const fs::path& root) {
  const auto images = find_images(root, cal_.image_extensions);
  {
    std::lock_guard lock(mutex_);
    if (!active_) throw ProtocolError("image queue is not active");
    for (const auto& p : images) queue_.push_back({p.string(), generation_});
    enqueued_ += images.size();
  }
  cv_.notify_all();
  return images.size();
}

void ImageQueue::abort() {
  std::vector<std::jthread> workers;
  {
    std::lock_guard lock(mutex_);
    discarded_ += queue_.size() + retry_.size();
    enqueued_ -= std::min(enqueued_, queue_.size() + retry_.size());
    queue_.clear();
    retry_.clear();
    active_ = false;
    aborted_ = true;
    workers.swap(workers_);
    for (auto& w : workers) w.request_stop();
  }
  cv_.notify_all();
  const bool was_running = !workers.empty();
  workers.clear();  // joins; in-flight items complete first
  idle_cv_.notify_all();
  if (was_running) spdlog::info("image queue aborted");
}

std::size_t ImageQueue::reintegrate() {
  {
    std::lock_guard lock(mutex_);
    if (!active_) throw ProtocolError("image queue is not active");
    discarded_ += queue_.size() + retry_.size();
    queue_.clear();
    retry_.clear();
    ++generation_;
    processed_ = failed_ = enqueued_ = 0;
    completions_.clear();
    first_start_.reset();
    last_done_.reset();
    failures_.clear();
    history_.clear();
  }
  std::size_t n = 0;
  for (const auto& root : cal_.directory) n += walk_directory(root);
  spdlog::info("reintegration queued {} images", n);
  return n;
}

bool ImageQueue::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return idle_cv_.wait_for(lock, timeout, [this] { return queue_.empty() && retry_.empty() && in_flight_ == 0; });
}

QueueStatus ImageQueue::status() const {
  std::lock_guard lock(mutex_);
  QueueStatus s;
  s.active = active_;
  s.workers = static_cast<int>(workers_.size());
  s.in_flight = in_flight_;
  s.pending = queue_.size() + retry_.size() + in_flight_;
  s.processed = processed_;
  s.failed = failed_;
  s.discarded = discarded_;
  s.total_enqueued = processed_ + failed_ + s.pending;
  s.generation = generation_;
  if (completions_.size() >= 2) {
    const double span = std::chrono::duration<double>(completions_.back() - completions_.front()).count();
    if (span > 0.0) s.rate_fps = static_cast<double>(completions_.size() - 1) / span;
  }
  if (first_start_ && last_done_) s.elapsed_s = std::chrono::duration<double>(*last_done_ - *first_start_).count();
  return s;
}

std::vector<FailureRecord> ImageQueue::failures() const {
  std::lock_guard lock(mutex_);
  return failures_;
}

std::optional<RadialProfile> ImageQueue::latest_profile() const {
  std::lock_guard lock(mutex_);
  return latest_;
}

std::optional<fs::path> ImageQueue::root_of(const fs::path& image) const {
  const fs::path canonical = canonical_or_absolute(image);
  for (const auto& root : roots_) {
    const fs::path rel = canonical.lexically_relative(root);
    if (!rel.empty() && *rel.begin() != "..") return root;
  }
  return std::nullopt;
}

std::string ImageQueue::display_path_for(const std::string& image) const {
  if (auto root = root_of(image)) return canonical_or_absolute(image).lexically_relative(*root).generic_string();
  return fs::path(image).generic_string();
}

fs::path ImageQueue::output_path_for(const std::string& image) const {
  fs::path rel;
  if (auto root = root_of(image)) {
    rel = canonical_or_absolute(image).lexically_relative(*root);
  } else {
    rel = fs::path(image).filename();
  }
  rel.replace_extension(".chi");
  return output_root_ / rel;
}

void ImageQueue::worker_loop(std::stop_token stop) {
  const auto ready = [this] {
    return !queue_.empty() || (!retry_.empty() && retry_.front().ready <= std::chrono::steady_clock::now());
  };
  while (true) {
    Item item;
    {
      std::unique_lock lock(mutex_);
      while (!ready()) {
        if (retry_.empty()) {
          cv_.wait(lock, stop, ready);
        } else {
          cv_.wait_until(lock, stop, retry_.front().ready, ready);
        }
        if (stop.stop_requested()) return;
      }
      // Retries whose backoff has expired go first so a settling file is not starved.
      auto& source = !retry_.empty() && retry_.front().ready <= std::chrono::steady_clock::now() ? retry_ : queue_;
      item = std::move(source.front());
      source.pop_front();
      ++in_flight_;
      if (!first_start_) first_start_ = std::chrono::steady_clock::now();
    }
    process(item, stop);
  }
}

// A failed read is requeued after a backoff instead of holding the worker, so
// the rest of the queue keeps moving while the file settles.
bool ImageQueue::schedule_retry(Item item, const std::exception& error, std::stop_token stop) {
  if (item.attempts >= options_.read_retries || stop.stop_requested()) return false;
  spdlog::debug("retrying {} after: {}", item.path, error.what());
  {
    std::lock_guard lock(mutex_);
    if (item.generation != generation_ || !active_) return false;
    --in_flight_;
    ++item.attempts;
    item.ready = std::chrono::steady_clock::now() + options_.retry_backoff;
    retry_.push_back(std::move(item));
  }
  cv_.notify_one();
  return true;
}

void ImageQueue::process(const Item& item, std::stop_token stop) {
  try {
    Frame frame;
    try {
      frame = load_frame(item.path);
    } catch (const IoError& e) {  // includes FormatError: a file may still be settling
      if (schedule_retry(item, e, stop)) return;
      throw;
    } catch (const fs::filesystem_error& e) {
      if (schedule_retry(item, e, stop)) return;
      throw IoError(e.what());
    }
    frame.source_path = display_path_for(item.path);

    RadialProfile profile = integrate_frame(*weights_, frame);
    ClassifierRecord record = classifiers(profile, cal_.q_start, cal_.q_stop);
    record.dataset = dataset_stem(item.path);

    const fs::path out = output_path_for(item.path);
    fs::create_directories(out.parent_path());
    write_chi(profile, out);

    if (!cal_.slices.empty()) {
      const auto slices = slice_profiles(frame, cal_.geometry, cal_.wavelength, cal_.slices, masks_);
      const std::string stem = out.stem().string();
      for (std::size_t k = 0; k < slices.size(); ++k) {
        write_slice_chi(slices[k], frame.source_path, out.parent_path() / (stem + "_slice" + std::to_string(k) + ".chi"));
      }
    }

    bool current;
    {
      std::lock_guard lock(mutex_);
      current = item.generation == generation_;
      if (current) latest_ = profile;
    }
    if (current) {
      history_.append(record);
      if (options_.on_result) options_.on_result(FrameResult{record, std::move(profile), out});
    }
    finish(item, true);
  } catch (const std::exception& e) {
    spdlog::warn("failed to process {}: {}", item.path, e.what());
    FailureRecord failure{item.path, e.what()};
    bool current;
    {
      std::lock_guard lock(mutex_);
      current = item.generation == generation_;
      if (current) failures_.push_back(failure);
    }
    if (current && options_.on_failure) options_.on_failure(failure);
    finish(item, false);
  }
}

void ImageQueue::finish(const Item& item, bool ok) {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
    if (item.generation == generation_) {
      (ok ? processed_ : failed_)++;
      const auto now = std::chrono::steady_clock::now();
      last_done_ = now;
      completions_.push_back(now);
      if (completions_.size() > 100) completions_.pop_front();
    }
  }
  idle_cv_.notify_all();
}

std::unique_ptr<ImageQueue> start_queue(Calibration cal, QueueOptions options) {
  auto queue = std::make_unique<ImageQueue>(std::move(cal), std::move(options));
  queue->start();
  return queue;
}

std::string history_csv(const std::vector<ClassifierRecord>& records) {
  auto value = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", *v);
    return std::string(buf);
  };
  std::string out = "source,dataset,acquired_at,time_source,total_intensity,invariant,correlation_length\n";
  for (const auto& r : records) {
    out += r.source_path + "," + r.dataset + "," + format_timestamp(r.acquired_at) + "," +
           std::string(to_string(r.time_source)) + "," + value(r.total_intensity) + "," + value(r.invariant) + "," +
           value(r.correlation_length) + "\n";
  }
  return out;
}

}  // namespace radpipe
