#pragma once

// Minimal baseline TIFF codec for single-channel, uncompressed detector images.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace radpipe::tiff {

enum class SampleType { UInt8, UInt16, UInt32, Int16, Int32, Float32, Float64 };

struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<double> pixels;  // row-major
  std::string description;     // ImageDescription tag, empty if absent
  std::string datetime;        // DateTime tag, empty if absent
};

/// Decodes an uncompressed grayscale TIFF (either byte order, strips).
/// Throws FormatError for anything else, IoError if the file cannot be read.
Image read(const std::filesystem::path& path);
Image decode(std::string_view bytes, const std::string& name = "<memory>");

struct WriteOptions {
  SampleType type = SampleType::Int32;
  std::string description;
  std::string datetime;
};

/// Little-endian, single strip. Pixel values are rounded for integer types.
std::string encode(const Image& image, const WriteOptions& options = {});
void write(const Image& image, const std::filesystem::path& path, const WriteOptions& options = {});

}  // namespace radpipe::tiff
