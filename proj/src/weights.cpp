#include "radpipe/weights.hpp"

#include <sodium.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>

#include "radpipe/errors.hpp"

namespace radpipe {

namespace {

struct Entry {
  std::uint32_t bin;
  std::uint32_t pixel;
  double weight;
};

// Weights for pixel rows [row_begin, row_end), in pixel order.
std::vector<Entry> build_rows(const Calibration& cal, const MaskImage& mask, const geometry::QGrid& grid,
                              int row_begin, int row_end) {
  const auto& g = cal.geometry;
  const int s = cal.oversampling;
  const double inv = 1.0 / static_cast<double>(s);
  const double per_subpixel_total = static_cast<double>(s) * static_cast<double>(s);

  std::vector<Entry> out;
  out.reserve(static_cast<std::size_t>(row_end - row_begin) * static_cast<std::size_t>(g.cols()) * 11 / 10);
  std::vector<std::pair<std::uint32_t, int>> counts;
  counts.reserve(static_cast<std::size_t>(s) * static_cast<std::size_t>(s));

  for (int row = row_begin; row < row_end; ++row) {
    for (int col = 0; col < g.cols(); ++col) {
      const auto pixel = static_cast<std::uint32_t>(static_cast<std::size_t>(row) * static_cast<std::size_t>(g.cols()) +
                                                    static_cast<std::size_t>(col));
      if (mask.masked(pixel)) continue;
      counts.clear();
      for (int a = 0; a < s; ++a) {
        const double v = row + (a + 0.5) * inv;
        for (int b = 0; b < s; ++b) {
          const double h = col + (b + 0.5) * inv;
          const long bin = geometry::bin_index(grid, geometry::scatter(g, cal.wavelength, v, h).q);
          if (bin < 0) continue;
          const auto ubin = static_cast<std::uint32_t>(bin);
          auto it = std::find_if(counts.begin(), counts.end(), [ubin](const auto& c) { return c.first == ubin; });
          if (it == counts.end()) {
            counts.emplace_back(ubin, 1);
          } else {
            ++it->second;
          }
        }
      }
      std::sort(counts.begin(), counts.end());
      for (const auto& [bin, count] : counts) {
        out.push_back({bin, pixel, static_cast<double>(count) / per_subpixel_total});
      }
    }
  }
  return out;
}

std::string hex(std::span<const unsigned char> bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

class Hasher {
 public:
  Hasher() {
    if (sodium_init() < 0) throw Error("libsodium initialisation failed");
    crypto_generichash_init(&state_, nullptr, 0, kBytes);
  }
  Hasher& add(const void* data, std::size_t n) {
    crypto_generichash_update(&state_, static_cast<const unsigned char*>(data), n);
    return *this;
  }
  Hasher& add(double v) { return add_bits(std::bit_cast<std::uint64_t>(v)); }
  Hasher& add(std::int64_t v) { return add_bits(static_cast<std::uint64_t>(v)); }
  Hasher& add_bits(std::uint64_t bits) {
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
    return add(b, 8);
  }
  std::string hex_digest() {
    unsigned char out[kBytes];
    crypto_generichash_final(&state_, out, kBytes);
    return hex(out);
  }

 private:
  static constexpr std::size_t kBytes = 16;
  crypto_generichash_state state_{};
};

// Little-endian serialization helpers for the cache file.
class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf_.push_back(static_cast<char>((v >> (8 * k)) & 0xffu));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t{static_cast<unsigned char>(data_[pos_ + k])} << (8 * k);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + k])} << (8 * k);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::string_view raw(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("weight cache truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kCacheMagic = "RPWMCACH";
constexpr std::uint32_t kCacheVersion = 1;

void finish_matrix(WeightingMatrix& w) {
  w.area = area_vector(w);
  w.q_centers.resize(w.q_edges.size() - 1);
  for (std::size_t k = 0; k + 1 < w.q_edges.size(); ++k) w.q_centers[k] = 0.5 * (w.q_edges[k] + w.q_edges[k + 1]);
}

}  // namespace

WeightingMatrix build_weight_matrix(const Calibration& cal, const MaskImage& mask, BuildOptions options) {
  check_mask_dims(mask, cal.geometry);
  const auto& g = cal.geometry;
  if (g.pixel_count() > std::numeric_limits<std::uint32_t>::max()) throw DimensionError("image too large");

  const geometry::QGrid grid = geometry::q_grid(cal);
  if (grid.bins() == 0) throw ValidationError("empty q grid");

  const int workers = std::clamp(options.threads, 1, std::max(1, g.rows()));
  std::vector<std::vector<Entry>> parts(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) {
      const int begin = static_cast<int>(static_cast<long>(g.rows()) * t / workers);
      const int end = static_cast<int>(static_cast<long>(g.rows()) * (t + 1) / workers);
      pool.emplace_back([&, t, begin, end] { parts[static_cast<std::size_t>(t)] = build_rows(cal, mask, grid, begin, end); });
    }
  }

  WeightingMatrix w;
  w.dims = g.image_size;
  w.oversampling = cal.oversampling;
  w.pixels_per_radial_element = cal.pixels_per_radial_element;
  w.q_edges = grid.edges;

  // Counting sort by bin; parts are in pixel order, so rows stay sorted by pixel.
  const std::size_t n_bins = grid.bins();
  w.row_offsets.assign(n_bins + 1, 0);
  std::size_t nnz = 0;
  for (const auto& part : parts) {
    for (const auto& e : part) ++w.row_offsets[e.bin + 1];
    nnz += part.size();
  }
  for (std::size_t j = 0; j < n_bins; ++j) w.row_offsets[j + 1] += w.row_offsets[j];
  w.pixel_index.resize(nnz);
  w.weight.resize(nnz);
  std::vector<std::size_t> cursor(w.row_offsets.begin(), w.row_offsets.end() - 1);
  for (const auto& part : parts) {
    for (const auto& e : part) {
      const std::size_t at = cursor[e.bin]++;
      w.pixel_index[at] = e.pixel;
      w.weight[at] = e.weight;
    }
  }

  finish_matrix(w);
  w.geometry_digest = geometry_digest(cal);
  w.mask_digest = mask_digest(mask);
  return w;
}

std::vector<double> area_vector(const WeightingMatrix& w) {
  std::vector<double> area(w.row_offsets.empty() ? 0 : w.row_offsets.size() - 1, 0.0);
  for (std::size_t j = 0; j < area.size(); ++j) {
    double sum = 0.0;
    for (std::size_t k = w.row_offsets[j]; k < w.row_offsets[j + 1]; ++k) sum += w.weight[k];
    area[j] = sum;
  }
  return area;
}

std::string geometry_digest(const Calibration& cal) {
  const auto& g = cal.geometry;
  Hasher h;
  h.add(g.beamcenter[0]).add(g.beamcenter[1]).add(g.detector_distance);
  h.add(std::int64_t{g.image_size[0]}).add(std::int64_t{g.image_size[1]});
  h.add(g.pixel_size[0]).add(g.pixel_size[1]).add(g.tilt_rotation).add(g.tilt_angle);
  h.add(cal.wavelength);
  return h.hex_digest();
}

std::string mask_digest(const MaskImage& mask) {
  Hasher h;
  h.add(std::int64_t{mask.rows()}).add(std::int64_t{mask.cols()});
  const auto data = mask.data();
  h.add(data.data(), data.size());
  return h.hex_digest();
}

void save_weight_cache(const WeightingMatrix& w, const std::filesystem::path& path) {
  Writer out;
  out.raw(kCacheMagic);
  out.u32(kCacheVersion);
  out.str(w.geometry_digest);
  out.str(w.mask_digest);
  out.u32(static_cast<std::uint32_t>(w.oversampling));
  out.f64(w.pixels_per_radial_element);
  out.u32(static_cast<std::uint32_t>(w.dims[0]));
  out.u32(static_cast<std::uint32_t>(w.dims[1]));
  out.u64(w.n_bins());
  out.u64(w.nonzeros());
  for (double e : w.q_edges) out.f64(e);
  for (auto o : w.row_offsets) out.u64(o);
  for (std::size_t k = 0; k < w.nonzeros(); ++k) {
    out.u32(w.pixel_index[k]);
    out.f64(w.weight[k]);
  }

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write weight cache " + tmp.string());
    f.write(out.bytes().data(), static_cast<std::streamsize>(out.bytes().size()));
    if (!f) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::optional<WeightingMatrix> load_weight_cache(const std::filesystem::path& path, const Calibration& cal,
                                                 const MaskImage& mask) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  const std::string data{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  try {
    Reader in(data);
    if (in.raw(kCacheMagic.size()) != kCacheMagic || in.u32() != kCacheVersion) return std::nullopt;
    WeightingMatrix w;
    w.geometry_digest = in.str();
    w.mask_digest = in.str();
    w.oversampling = static_cast<int>(in.u32());
    w.pixels_per_radial_element = in.f64();
    w.dims = {static_cast<int>(in.u32()), static_cast<int>(in.u32())};
    if (w.geometry_digest != geometry_digest(cal) || w.mask_digest != mask_digest(mask) ||
        w.oversampling != cal.oversampling || w.pixels_per_radial_element != cal.pixels_per_radial_element ||
        w.dims != cal.geometry.image_size) {
      return std::nullopt;
    }
    const auto n_bins = in.u64();
    const auto nnz = in.u64();
    if (n_bins > in.remaining() / 8 || nnz > in.remaining() / 12) return std::nullopt;
    w.q_edges.resize(n_bins + 1);
    for (auto& e : w.q_edges) e = in.f64();
    w.row_offsets.resize(n_bins + 1);
    for (auto& o : w.row_offsets) o = in.u64();
    if (w.row_offsets.front() != 0 || w.row_offsets.back() != nnz ||
        !std::is_sorted(w.row_offsets.begin(), w.row_offsets.end())) {
      return std::nullopt;
    }
    w.pixel_index.resize(nnz);
    w.weight.resize(nnz);
    for (std::size_t k = 0; k < nnz; ++k) {
      w.pixel_index[k] = in.u32();
      w.weight[k] = in.f64();
      if (w.pixel_index[k] >= w.n_pixels()) return std::nullopt;
    }
    if (!in.at_end()) return std::nullopt;
    finish_matrix(w);
    return w;
  } catch (const FormatError&) {
    return std::nullopt;
  }
}

std::filesystem::path weight_cache_path(const std::filesystem::path& cache_dir, const Calibration& cal,
                                        const MaskImage& mask) {
  Hasher h;
  const auto g = geometry_digest(cal);
  const auto m = mask_digest(mask);
  h.add(g.data(), g.size()).add(m.data(), m.size());
  h.add(std::int64_t{cal.oversampling}).add(cal.pixels_per_radial_element);
  return cache_dir / ("weights-" + h.hex_digest() + ".bin");
}

WeightingMatrix build_or_load_weights(const Calibration& cal, const MaskImage& mask,
                                      const std::filesystem::path& cache_dir, BuildOptions options) {
  if (cache_dir.empty()) return build_weight_matrix(cal, mask, options);
  const auto path = weight_cache_path(cache_dir, cal, mask);
  if (auto cached = load_weight_cache(path, cal, mask)) {
    spdlog::info("loaded weighting matrix from {}", path.string());
    return std::move(*cached);
  }
  auto w = build_weight_matrix(cal, mask, options);
  try {
    std::filesystem::create_directories(cache_dir);
    save_weight_cache(w, path);
  } catch (const std::exception& e) {
    spdlog::warn("could not store weighting matrix cache: {}", e.what());
  }
  return w;
}

}  // namespace radpipe
