#include "radpipe/frame.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <regex>

#include "radpipe/errors.hpp"
#include "radpipe/tiff.hpp"

namespace radpipe {

namespace {

double file_time_seconds(const std::filesystem::path& path) {
  const auto ft = std::filesystem::last_write_time(path);
  const auto sys = std::chrono::file_clock::to_sys(ft);
  return std::chrono::duration<double>(sys.time_since_epoch()).count();
}

}  // namespace

std::string_view to_string(TimeSource source) { return source == TimeSource::Header ? "header" : "file"; }

std::optional<double> parse_timestamp(std::string_view text) {
  static const std::regex iso(R"((\d{4})[-:](\d{2})[-:](\d{2})[T ](\d{2}):(\d{2}):(\d{2})(\.\d+)?)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_search(text.begin(), text.end(), m, iso)) return std::nullopt;
  auto num = [&](int k) { return std::stoi(m[k].str()); };
  using namespace std::chrono;
  const year_month_day ymd{year{num(1)}, month{static_cast<unsigned>(num(2))}, day{static_cast<unsigned>(num(3))}};
  if (!ymd.ok()) return std::nullopt;
  const int hh = num(4), mm = num(5), ss = num(6);
  if (hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  double seconds = static_cast<double>(sys_days(ymd).time_since_epoch().count()) * 86400.0 + hh * 3600.0 + mm * 60.0 + ss;
  if (m[7].matched) seconds += std::stod("0" + m[7].str());
  return seconds;
}

std::string format_timestamp(double seconds) {
  using namespace std::chrono;
  const double whole = std::floor(seconds);
  auto micros = static_cast<long long>(std::llround((seconds - whole) * 1e6));
  auto secs = static_cast<long long>(whole);
  if (micros >= 1000000) {
    micros -= 1000000;
    ++secs;
  }
  const sys_seconds tp{std::chrono::seconds{secs}};
  const auto days = floor<std::chrono::days>(tp);
  const year_month_day ymd{days};
  const hh_mm_ss hms{tp - days};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d.%06lld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()), micros);
  return buf;
}

Frame load_frame(const std::filesystem::path& path) {
  tiff::Image image = tiff::read(path);
  Frame frame;
  frame.dims = {image.rows, image.cols};
  frame.pixels = std::move(image.pixels);
  frame.source_path = path.string();
  for (double v : frame.pixels) {
    if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite pixel value");
  }
  std::optional<double> stamp = parse_timestamp(image.description);
  if (!stamp) stamp = parse_timestamp(image.datetime);
  if (stamp) {
    frame.acquired_at = *stamp;
    frame.time_source = TimeSource::Header;
  } else {
    frame.acquired_at = file_time_seconds(path);
    frame.time_source = TimeSource::FileTime;
  }
  return frame;
}

void save_frame(const Frame& frame, const std::filesystem::path& path) {
  tiff::Image image;
  image.rows = frame.dims[0];
  image.cols = frame.dims[1];
  image.pixels = frame.pixels;
  tiff::WriteOptions options;
  options.type = tiff::SampleType::Int32;
  options.description = "# " + format_timestamp(frame.acquired_at);
  tiff::write(image, path, options);
}

}  // namespace radpipe
