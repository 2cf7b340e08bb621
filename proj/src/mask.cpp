#include "radpipe/mask.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "radpipe/errors.hpp"

namespace radpipe {

namespace {

std::vector<char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mask file " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

// FIT2D mask layout: a 1024-byte header of little-endian 32-bit words whose
// first four words hold the characters 'M','A','S','K', word 4 the fast
// dimension (columns) and word 5 the slow dimension (rows). The body stores
// each row padded to a multiple of 32 bits, least significant bit first.
constexpr std::size_t kFit2dHeader = 1024;

std::uint32_t le32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return std::uint32_t{u[0]} | (std::uint32_t{u[1]} << 8) | (std::uint32_t{u[2]} << 16) | (std::uint32_t{u[3]} << 24);
}

void put_le32(char* p, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) p[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
}

MaskImage read_fit2d(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < kFit2dHeader) throw FormatError(path.string() + ": truncated FIT2D mask header");
  const char tag[4] = {'M', 'A', 'S', 'K'};
  for (int k = 0; k < 4; ++k) {
    if (bytes[static_cast<std::size_t>(4 * k)] != tag[k]) {
      throw FormatError(path.string() + ": not a FIT2D mask (bad magic)");
    }
  }
  const std::uint32_t cols = le32(bytes.data() + 16);
  const std::uint32_t rows = le32(bytes.data() + 20);
  if (cols == 0 || rows == 0 || cols > (1u << 20) || rows > (1u << 20)) {
    throw FormatError(path.string() + ": implausible FIT2D mask dimensions");
  }
  const std::size_t row_bytes = ((cols + 31) / 32) * 4;
  if (bytes.size() < kFit2dHeader + row_bytes * rows) throw FormatError(path.string() + ": truncated FIT2D mask body");

  MaskImage mask(static_cast<int>(rows), static_cast<int>(cols));
  for (std::uint32_t r = 0; r < rows; ++r) {
    const auto* row = reinterpret_cast<const unsigned char*>(bytes.data() + kFit2dHeader + r * row_bytes);
    for (std::uint32_t c = 0; c < cols; ++c) {
      if ((row[c / 8] >> (c % 8)) & 1u) mask.set(static_cast<int>(r), static_cast<int>(c));
    }
  }
  return mask;
}

void write_fit2d(const MaskImage& mask, const std::filesystem::path& path) {
  const auto cols = static_cast<std::uint32_t>(mask.cols());
  const auto rows = static_cast<std::uint32_t>(mask.rows());
  const std::size_t row_bytes = ((cols + 31) / 32) * 4;
  std::string out(kFit2dHeader + row_bytes * rows, '\0');
  out[0] = 'M';
  out[4] = 'A';
  out[8] = 'S';
  out[12] = 'K';
  put_le32(out.data() + 16, cols);
  put_le32(out.data() + 20, rows);
  put_le32(out.data() + 24, 1);
  for (std::uint32_t r = 0; r < rows; ++r) {
    auto* row = reinterpret_cast<unsigned char*>(out.data() + kFit2dHeader + r * row_bytes);
    for (std::uint32_t c = 0; c < cols; ++c) {
      if (mask.masked(static_cast<int>(r), static_cast<int>(c))) row[c / 8] |= static_cast<unsigned char>(1u << (c % 8));
    }
  }
  write_all(path, out);
}

// Binary (P5) or ASCII (P2) portable graymap.
MaskImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> long {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      throw FormatError(path.string() + ": malformed PGM header");
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > (1L << 24)) throw FormatError(path.string() + ": PGM value too large");
    }
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
    throw FormatError(path.string() + ": not a PGM file");
  }
  const bool binary = bytes[1] == '5';
  pos = 2;
  const long cols = read_uint();
  const long rows = read_uint();
  const long maxval = read_uint();
  if (cols < 1 || rows < 1 || maxval < 1 || maxval > 255) {
    throw FormatError(path.string() + ": unsupported PGM (need 8-bit grayscale)");
  }
  MaskImage mask(static_cast<int>(rows), static_cast<int>(cols));
  const std::size_t n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (binary) {
    ++pos;  // single whitespace after maxval
    if (bytes.size() < pos + n) throw FormatError(path.string() + ": truncated PGM body");
    for (std::size_t i = 0; i < n; ++i) {
      if (bytes[pos + i] != 0) mask.set(static_cast<int>(i / cols), static_cast<int>(i % cols));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      if (read_uint() != 0) mask.set(static_cast<int>(i / cols), static_cast<int>(i % cols));
    }
  }
  return mask;
}

void write_pgm(const MaskImage& mask, const std::filesystem::path& path) {
  std::string out = "P5\n" + std::to_string(mask.cols()) + " " + std::to_string(mask.rows()) + "\n255\n";
  out.reserve(out.size() + mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) out.push_back(mask.masked(i) ? static_cast<char>(255) : '\0');
  write_all(path, out);
}

MaskImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError(path.string() + ": " + image.message);
  }
  const int rows = static_cast<int>(image.height);
  const int cols = static_cast<int>(image.width);
  std::vector<std::uint8_t> masked(buffer.size());
  std::transform(buffer.begin(), buffer.end(), masked.begin(), [](png_byte b) { return b != 0 ? 1 : 0; });
  return MaskImage(rows, cols, std::move(masked));
}

void write_png(const MaskImage& mask, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(mask.cols());
  image.height = static_cast<png_uint_32>(mask.rows());
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) buffer[i] = mask.masked(i) ? 255 : 0;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
    throw IoError(path.string() + ": " + image.message);
  }
}

}  // namespace

MaskImage::MaskImage(int rows, int cols)
    : dims_{rows, cols}, masked_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0) {
  if (rows < 0 || cols < 0) throw DimensionError("negative mask dimensions");
}

MaskImage::MaskImage(int rows, int cols, std::vector<std::uint8_t> masked) : dims_{rows, cols}, masked_(std::move(masked)) {
  if (rows < 0 || cols < 0 || masked_.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw DimensionError("mask buffer does not match its dimensions");
  }
  for (auto& m : masked_) m = m != 0 ? 1 : 0;
}

std::size_t MaskImage::masked_count() const noexcept {
  return static_cast<std::size_t>(std::count(masked_.begin(), masked_.end(), std::uint8_t{1}));
}

MaskImage load_mask(const MaskSource& source) {
  switch (source.format) {
    case MaskFormat::Fit2d: return read_fit2d(source.path);
    case MaskFormat::Pgm: return read_pgm(source.path);
    case MaskFormat::Png: return read_png(source.path);
  }
  throw FormatError("unknown mask format");
}

void save_mask(const MaskImage& mask, const std::filesystem::path& path, MaskFormat format) {
  switch (format) {
    case MaskFormat::Fit2d: write_fit2d(mask, path); return;
    case MaskFormat::Pgm: write_pgm(mask, path); return;
    case MaskFormat::Png: write_png(mask, path); return;
  }
}

MaskImage combine_masks(std::span<const MaskImage> masks, std::array<int, 2> dims) {
  MaskImage out(dims[0], dims[1]);
  std::vector<std::uint8_t> bits(out.size(), 0);
  for (const auto& m : masks) {
    if (m.dims() != dims) {
      throw DimensionError("mask is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
                           std::to_string(dims[0]) + "x" + std::to_string(dims[1]));
    }
    const auto data = m.data();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] |= data[i];
  }
  return MaskImage(dims[0], dims[1], std::move(bits));
}

void check_mask_dims(const MaskImage& mask, const DetectorGeometry& geometry) {
  if (mask.rows() != geometry.rows() || mask.cols() != geometry.cols()) {
    throw DimensionError("mask is " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         " but the sensor is " + std::to_string(geometry.rows()) + "x" +
                         std::to_string(geometry.cols()));
  }
}

}  // namespace radpipe
