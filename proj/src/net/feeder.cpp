#include "radpipe/net/feeder.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <thread>

#include "radpipe/errors.hpp"
#include "radpipe/net/protocol.hpp"
#include "radpipe/pipeline.hpp"

namespace radpipe::net {

namespace fs = std::filesystem;

Feeder::Feeder(FeederOptions options, Publish publish) : options_(std::move(options)), publish_(std::move(publish)) {
  if (!fs::is_directory(options_.source_dir)) throw IoError("not a directory: " + options_.source_dir.string());
  fs::create_directories(options_.storage_dir);
  if (!options_.copier) {
    options_.copier = [](const fs::path& from, const fs::path& to) {
      fs::copy_file(from, to, fs::copy_options::overwrite_existing);
    };
  }
}

fs::path Feeder::storage_path_for(const fs::path& source) const {
  const fs::path rel = source.lexically_relative(options_.source_dir);
  return fs::absolute(options_.storage_dir / rel).lexically_normal();
}

bool Feeder::transfer(const fs::path& source) {
  const fs::path target = storage_path_for(source);
  const fs::path temp = target.parent_path() / ("." + target.filename().string() + ".part");
  try {
    fs::create_directories(target.parent_path());
    options_.copier(source, temp);
    fs::last_write_time(temp, fs::last_write_time(source));
    fs::rename(temp, target);
  } catch (const std::exception& e) {
    std::error_code ec;
    fs::remove(temp, ec);
    ++copy_failures_;
    spdlog::error("copy of {} failed: {}", source.string(), e.what());
    return false;
  }
  publish_(new_file_event(target.string()).to_wire());
  ++published_;
  return true;
}

std::size_t Feeder::poll_once() {
  std::vector<fs::path> ready;
  std::error_code ec;
  for (auto it = fs::recursive_directory_iterator(options_.source_dir, fs::directory_options::skip_permission_denied, ec);
       !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
    const auto& entry = *it;
    if (!entry.is_regular_file() || !has_image_extension(entry.path(), options_.extensions)) continue;
    if (entry.path().filename().string().starts_with(".")) continue;
    std::error_code fe;
    const auto size = entry.file_size(fe);
    const auto mtime = entry.last_write_time(fe);
    if (fe) continue;
    auto [pos, inserted] = seen_.try_emplace(entry.path(), Seen{size, mtime, false});
    Seen& s = pos->second;
    if (inserted) continue;
    if (s.size != size || s.mtime != mtime) {
      s = Seen{size, mtime, false};  // still being written, or rewritten
      continue;
    }
    if (!s.done) ready.push_back(entry.path());
  }
  if (ec) throw IoError("cannot scan " + options_.source_dir.string() + ": " + ec.message());

  std::sort(ready.begin(), ready.end());
  std::size_t sent = 0;
  for (const auto& path : ready) {
    const bool ok = transfer(path);
    seen_[path].done = ok;  // a failed copy is tried again on the next scan
    if (ok) ++sent;
  }
  return sent;
}

void Feeder::run(std::stop_token stop) {
  while (!stop.stop_requested()) {
    poll_once();
    std::this_thread::sleep_for(options_.poll_interval);
  }
}

}  // namespace radpipe::net
