#include "radpipe/tiff.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "radpipe/errors.hpp"

namespace radpipe::tiff {

namespace {

enum Tag : std::uint16_t {
  kImageWidth = 256,
  kImageLength = 257,
  kBitsPerSample = 258,
  kCompression = 259,
  kPhotometric = 262,
  kImageDescription = 270,
  kStripOffsets = 273,
  kSamplesPerPixel = 277,
  kRowsPerStrip = 278,
  kStripByteCounts = 279,
  kDateTime = 306,
  kSampleFormat = 339,
};

enum FieldType : std::uint16_t { kByte = 1, kAscii = 2, kShort = 3, kLong = 4 };

std::size_t field_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
  }
}

class ByteView {
 public:
  ByteView(std::string_view data, bool little, const std::string& name) : data_(data), little_(little), name_(name) {}

  std::uint16_t u16(std::size_t at) const {
    check(at, 2);
    const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + at);
    return little_ ? static_cast<std::uint16_t>(p[0] | (p[1] << 8)) : static_cast<std::uint16_t>((p[0] << 8) | p[1]);
  }
  std::uint32_t u32(std::size_t at) const {
    check(at, 4);
    const auto* p = reinterpret_cast<const unsigned char*>(data_.data() + at);
    return little_ ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 | std::uint32_t{p[3]} << 24)
                   : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[0]} << 24);
  }
  std::uint64_t u64(std::size_t at) const {
    const std::uint64_t a = u32(at), b = u32(at + 4);
    return little_ ? (a | (b << 32)) : ((a << 32) | b);
  }
  std::string_view slice(std::size_t at, std::size_t n) const {
    check(at, n);
    return data_.substr(at, n);
  }
  void check(std::size_t at, std::size_t n) const {
    if (at > data_.size() || data_.size() - at < n) throw FormatError(name_ + ": truncated TIFF");
  }
  bool little() const { return little_; }

 private:
  std::string_view data_;
  bool little_;
  const std::string& name_;
};

struct Field {
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t offset = 0;  // where the values live
};

std::vector<std::uint64_t> values(const ByteView& view, const Field& f) {
  std::vector<std::uint64_t> out(f.count);
  for (std::uint32_t k = 0; k < f.count; ++k) {
    switch (f.type) {
      case kByte: out[k] = static_cast<unsigned char>(view.slice(f.offset + k, 1)[0]); break;
      case kShort: out[k] = view.u16(f.offset + 2 * k); break;
      case kLong: out[k] = view.u32(f.offset + 4 * k); break;
      default: throw FormatError("unsupported TIFF field type " + std::to_string(f.type));
    }
  }
  return out;
}

template <typename T>
T load(const char* p, bool swap) {
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if (swap) std::reverse(b.begin(), b.end());
  return std::bit_cast<T>(b);
}

template <typename T>
void convert(std::string_view raw, bool swap, std::vector<double>& out) {
  const char* p = raw.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(load<T>(p + i * sizeof(T), swap));
}

}  // namespace

Image decode(std::string_view bytes, const std::string& name) {
  if (bytes.size() < 8) throw FormatError(name + ": not a TIFF file");
  bool little;
  if (bytes.substr(0, 2) == "II") {
    little = true;
  } else if (bytes.substr(0, 2) == "MM") {
    little = false;
  } else {
    throw FormatError(name + ": not a TIFF file (bad byte-order mark)");
  }
  const ByteView view(bytes, little, name);
  if (view.u16(2) != 42) throw FormatError(name + ": not a classic TIFF file");

  const std::size_t ifd = view.u32(4);
  const std::uint16_t n_entries = view.u16(ifd);
  std::map<std::uint16_t, Field> fields;
  for (std::uint16_t e = 0; e < n_entries; ++e) {
    const std::size_t at = ifd + 2 + 12u * e;
    Field f;
    const std::uint16_t tag = view.u16(at);
    f.type = view.u16(at + 2);
    f.count = view.u32(at + 4);
    const std::size_t size = field_size(f.type) * f.count;
    f.offset = size <= 4 ? at + 8 : view.u32(at + 8);
    if (size > 0) view.check(f.offset, size);
    fields[tag] = f;
  }

  auto scalar = [&](std::uint16_t tag, std::optional<std::uint64_t> fallback) -> std::uint64_t {
    auto it = fields.find(tag);
    if (it == fields.end()) {
      if (fallback) return *fallback;
      throw FormatError(name + ": missing TIFF tag " + std::to_string(tag));
    }
    const auto v = values(view, it->second);
    if (v.empty()) throw FormatError(name + ": empty TIFF tag " + std::to_string(tag));
    return v.front();
  };
  auto ascii = [&](std::uint16_t tag) -> std::string {
    auto it = fields.find(tag);
    if (it == fields.end() || it->second.type != kAscii) return {};
    std::string s(view.slice(it->second.offset, it->second.count));
    if (auto nul = s.find('\0'); nul != std::string::npos) s.resize(nul);
    return s;
  };

  Image image;
  image.cols = static_cast<int>(scalar(kImageWidth, std::nullopt));
  image.rows = static_cast<int>(scalar(kImageLength, std::nullopt));
  const auto bits = scalar(kBitsPerSample, 1);
  const auto compression = scalar(kCompression, 1);
  const auto samples = scalar(kSamplesPerPixel, 1);
  const auto format = scalar(kSampleFormat, 1);
  if (compression != 1) throw FormatError(name + ": compressed TIFF is not supported");
  if (samples != 1) throw FormatError(name + ": only single-channel TIFF is supported");
  if (image.rows < 1 || image.cols < 1 || image.rows > (1 << 16) || image.cols > (1 << 16)) {
    throw FormatError(name + ": implausible TIFF dimensions");
  }

  auto offsets_it = fields.find(kStripOffsets);
  auto counts_it = fields.find(kStripByteCounts);
  if (offsets_it == fields.end() || counts_it == fields.end()) throw FormatError(name + ": TIFF has no strips");
  const auto offsets = values(view, offsets_it->second);
  const auto counts = values(view, counts_it->second);
  if (offsets.size() != counts.size()) throw FormatError(name + ": inconsistent strip tables");

  const std::size_t n = static_cast<std::size_t>(image.rows) * static_cast<std::size_t>(image.cols);
  const std::size_t bytes_per_sample = bits / 8;
  if (bits % 8 != 0 || bytes_per_sample == 0) throw FormatError(name + ": unsupported bit depth");
  const std::size_t needed = n * bytes_per_sample;

  std::string contiguous;
  std::string_view raw;
  if (offsets.size() == 1) {
    if (counts[0] < needed) throw FormatError(name + ": truncated TIFF image data");
    raw = view.slice(offsets[0], needed);
  } else {
    contiguous.reserve(needed);
    for (std::size_t s = 0; s < offsets.size() && contiguous.size() < needed; ++s) {
      contiguous.append(view.slice(offsets[s], counts[s]));
    }
    if (contiguous.size() < needed) throw FormatError(name + ": truncated TIFF image data");
    raw = std::string_view(contiguous).substr(0, needed);
  }

  const bool swap = little != (std::endian::native == std::endian::little);
  image.pixels.resize(n);
  switch (format * 100 + bits) {
    case 108: convert<std::uint8_t>(raw, swap, image.pixels); break;
    case 116: convert<std::uint16_t>(raw, swap, image.pixels); break;
    case 132: convert<std::uint32_t>(raw, swap, image.pixels); break;
    case 208: convert<std::int8_t>(raw, swap, image.pixels); break;
    case 216: convert<std::int16_t>(raw, swap, image.pixels); break;
    case 232: convert<std::int32_t>(raw, swap, image.pixels); break;
    case 332: convert<float>(raw, swap, image.pixels); break;
    case 364: convert<double>(raw, swap, image.pixels); break;
    default:
      throw FormatError(name + ": unsupported sample format " + std::to_string(format) + "/" + std::to_string(bits));
  }
  image.description = ascii(kImageDescription);
  image.datetime = ascii(kDateTime);
  return image;
}

Image read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot read " + path.string());
  std::string bytes(static_cast<std::size_t>(size), '\0');
  in.seekg(0);
  in.read(bytes.data(), size);
  if (!in) throw IoError("short read from " + path.string());
  return decode(bytes, path.string());
}

std::string encode(const Image& image, const WriteOptions& options) {
  struct Layout {
    std::uint16_t bits, format;
  };
  Layout layout{};
  switch (options.type) {
    case SampleType::UInt8: layout = {8, 1}; break;
    case SampleType::UInt16: layout = {16, 1}; break;
    case SampleType::UInt32: layout = {32, 1}; break;
    case SampleType::Int16: layout = {16, 2}; break;
    case SampleType::Int32: layout = {32, 2}; break;
    case SampleType::Float32: layout = {32, 3}; break;
    case SampleType::Float64: layout = {64, 3}; break;
  }
  const std::size_t n = static_cast<std::size_t>(image.rows) * static_cast<std::size_t>(image.cols);
  if (image.pixels.size() != n) throw DimensionError("TIFF pixel buffer does not match its dimensions");

  std::string out;
  auto put16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
  };
  auto put32 = [&](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  };

  struct Entry {
    std::uint16_t tag, type;
    std::uint32_t count, value;
  };
  std::vector<Entry> entries;
  const std::string description = options.description.empty() ? std::string() : options.description + '\0';
  const std::string datetime = options.datetime.empty() ? std::string() : options.datetime + '\0';
  const std::size_t data_bytes = n * (layout.bits / 8);

  const std::uint16_t n_entries = 10 + (description.empty() ? 0 : 1) + (datetime.empty() ? 0 : 1);
  const std::uint32_t ifd_end = 8 + 2 + 12u * n_entries + 4;
  std::uint32_t cursor = ifd_end;
  const std::uint32_t description_at = cursor;
  cursor += static_cast<std::uint32_t>(description.size());
  const std::uint32_t datetime_at = cursor;
  cursor += static_cast<std::uint32_t>(datetime.size());
  cursor += (8 - cursor % 8) % 8;
  const std::uint32_t data_at = cursor;

  entries.push_back({kImageWidth, kLong, 1, static_cast<std::uint32_t>(image.cols)});
  entries.push_back({kImageLength, kLong, 1, static_cast<std::uint32_t>(image.rows)});
  entries.push_back({kBitsPerSample, kShort, 1, layout.bits});
  entries.push_back({kCompression, kShort, 1, 1});
  entries.push_back({kPhotometric, kShort, 1, 1});
  if (!description.empty()) {
    entries.push_back({kImageDescription, kAscii, static_cast<std::uint32_t>(description.size()), description_at});
  }
  entries.push_back({kStripOffsets, kLong, 1, data_at});
  entries.push_back({kSamplesPerPixel, kShort, 1, 1});
  entries.push_back({kRowsPerStrip, kLong, 1, static_cast<std::uint32_t>(image.rows)});
  entries.push_back({kStripByteCounts, kLong, 1, static_cast<std::uint32_t>(data_bytes)});
  if (!datetime.empty()) entries.push_back({kDateTime, kAscii, static_cast<std::uint32_t>(datetime.size()), datetime_at});
  entries.push_back({kSampleFormat, kShort, 1, layout.format});

  out.reserve(data_at + data_bytes);
  out.append("II");
  put16(42);
  put32(8);
  put16(n_entries);
  for (const auto& e : entries) {
    put16(e.tag);
    put16(e.type);
    put32(e.count);
    if (e.type == kShort) {
      put16(static_cast<std::uint16_t>(e.value));
      put16(0);
    } else if (e.type == kAscii && e.count <= 4) {
      std::string inline_value = (e.tag == kImageDescription ? description : datetime);
      inline_value.resize(4, '\0');
      out.append(inline_value);
    } else {
      put32(e.value);
    }
  }
  put32(0);
  if (description.size() > 4) out.append(description); else out.append(description.size(), '\0');
  if (datetime.size() > 4) out.append(datetime); else out.append(datetime.size(), '\0');
  out.resize(data_at, '\0');

  out.resize(data_at + data_bytes);
  char* dst = out.data() + data_at;
  auto store = [&]<typename T>(T) {
    for (std::size_t i = 0; i < n; ++i) {
      T v;
      if constexpr (std::is_integral_v<T>) {
        v = static_cast<T>(std::llround(image.pixels[i]));
      } else {
        v = static_cast<T>(image.pixels[i]);
      }
      auto b = std::bit_cast<std::array<char, sizeof(T)>>(v);
      if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
      std::memcpy(dst + i * sizeof(T), b.data(), sizeof(T));
    }
  };
  switch (options.type) {
    case SampleType::UInt8: store(std::uint8_t{}); break;
    case SampleType::UInt16: store(std::uint16_t{}); break;
    case SampleType::UInt32: store(std::uint32_t{}); break;
    case SampleType::Int16: store(std::int16_t{}); break;
    case SampleType::Int32: store(std::int32_t{}); break;
    case SampleType::Float32: store(float{}); break;
    case SampleType::Float64: store(double{}); break;
  }
  return out;
}

void write(const Image& image, const std::filesystem::path& path, const WriteOptions& options) {
  const std::string bytes = encode(image, options);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace radpipe::tiff
