#pragma once

// Moves finished images from the acquisition directory to storage and
// announces each one with a "new file" event, strictly after its rename.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <stop_token>
#include <string>
#include <vector>

namespace radpipe::net {

struct FeederOptions {
  std::filesystem::path source_dir;
  std::filesystem::path storage_dir;
  std::vector<std::string> extensions{".tif", ".tiff"};
  std::chrono::milliseconds poll_interval{100};
  /// Copies `from` to the temporary `to`. Replaceable to simulate slow storage.
  std::function<void(const std::filesystem::path& from, const std::filesystem::path& to)> copier;
};

class Feeder {
 public:
  using Publish = std::function<void(const std::string& wire)>;

  Feeder(FeederOptions options, Publish publish);

  /// One scan: files seen with the same size and mtime as on the previous
  /// scan are copied, renamed into place, then published. Returns the number
  /// of events sent.
  std::size_t poll_once();

  /// Polls until stop is requested.
  void run(std::stop_token stop);

  std::size_t published() const noexcept { return published_; }
  std::size_t copy_failures() const noexcept { return copy_failures_; }

  /// Storage-side path for a source file.
  std::filesystem::path storage_path_for(const std::filesystem::path& source) const;

 private:
  struct Seen {
    std::uintmax_t size = 0;
    std::filesystem::file_time_type mtime;
    bool done = false;
  };
  bool transfer(const std::filesystem::path& source);

  FeederOptions options_;
  Publish publish_;
  std::map<std::filesystem::path, Seen> seen_;
  std::size_t published_ = 0;
  std::size_t copy_failures_ = 0;
};

}  // namespace radpipe::net
