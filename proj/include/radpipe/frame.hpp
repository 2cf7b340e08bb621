#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace radpipe {

enum class TimeSource { Header, FileTime };

std::string_view to_string(TimeSource source);

/// One detector image, flattened row-major.
struct Frame {
  std::array<int, 2> dims{0, 0};  // [rows, cols]
  std::vector<double> pixels;
  double acquired_at = 0.0;  // seconds since the Unix epoch (UTC)
  TimeSource time_source = TimeSource::FileTime;
  std::string source_path;

  std::size_t size() const noexcept { return pixels.size(); }
};

/// Reads a TIFF frame. The acquisition time comes from the image header
/// (a Pilatus-style "# 2024-01-31T12:00:00.123" description line or the
/// DateTime tag) and falls back to the file modification time.
Frame load_frame(const std::filesystem::path& path);

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]" or "YYYY:MM:DD HH:MM:SS"; nullopt if neither.
std::optional<double> parse_timestamp(std::string_view text);

/// Formats seconds since the epoch as "YYYY-MM-DDTHH:MM:SS.ffffff".
std::string format_timestamp(double seconds);

/// Writes a frame as an int32 TIFF carrying its acquisition time in the header.
void save_frame(const Frame& frame, const std::filesystem::path& path);

}  // namespace radpipe
