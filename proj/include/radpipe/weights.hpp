#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radpipe/calib.hpp"
#include "radpipe/geometry.hpp"
#include "radpipe/mask.hpp"

namespace radpipe {

/// Sparse pixel -> radial bin weights, stored row-major by bin (CSR).
/// Row j lists (pixel index, weight) pairs with ascending pixel index.
struct WeightingMatrix {
  std::array<int, 2> dims{0, 0};
  int oversampling = 1;
  double pixels_per_radial_element = 1.0;

  std::vector<std::size_t> row_offsets;  // n_bins + 1
  std::vector<std::uint32_t> pixel_index;
  std::vector<double> weight;

  std::vector<double> area;  // row sums
  std::vector<double> q_edges;
  std::vector<double> q_centers;

  std::string geometry_digest;
  std::string mask_digest;

  std::size_t n_bins() const noexcept { return q_centers.size(); }
  std::size_t n_pixels() const noexcept {
    return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]);
  }
  std::size_t nonzeros() const noexcept { return weight.size(); }

  std::span<const std::uint32_t> row_pixels(std::size_t bin) const {
    return {pixel_index.data() + row_offsets[bin], row_offsets[bin + 1] - row_offsets[bin]};
  }
  std::span<const double> row_weights(std::size_t bin) const {
    return {weight.data() + row_offsets[bin], row_offsets[bin + 1] - row_offsets[bin]};
  }

  bool operator==(const WeightingMatrix&) const = default;
};

struct BuildOptions {
  int threads = 1;  // pixel-range parallelism; output does not depend on it
};

/// Splits every unmasked pixel into s x s subpixels, maps each subpixel
/// center to q and gives it weight 1/s^2 in its bin. Subpixels beyond the
/// last bin edge are dropped.
WeightingMatrix build_weight_matrix(const Calibration& cal, const MaskImage& mask, BuildOptions options = {});

/// Row sums of the matrix (the effective pixel count per bin).
std::vector<double> area_vector(const WeightingMatrix& w);

/// Content digests (hex) used to key the on-disk cache.
std::string geometry_digest(const Calibration& cal);
std::string mask_digest(const MaskImage& mask);

/// Versioned little-endian cache file. `load` returns nullopt when the file
/// is missing, damaged, or was built for different inputs.
void save_weight_cache(const WeightingMatrix& w, const std::filesystem::path& path);
std::optional<WeightingMatrix> load_weight_cache(const std::filesystem::path& path, const Calibration& cal,
                                                 const MaskImage& mask);

/// Cache file name for the given inputs inside `cache_dir`.
std::filesystem::path weight_cache_path(const std::filesystem::path& cache_dir, const Calibration& cal,
                                        const MaskImage& mask);

/// Loads from `cache_dir` when a matching file exists, otherwise builds and
/// stores it. An empty `cache_dir` disables caching.
WeightingMatrix build_or_load_weights(const Calibration& cal, const MaskImage& mask,
                                      const std::filesystem::path& cache_dir, BuildOptions options = {});

}  // namespace radpipe
