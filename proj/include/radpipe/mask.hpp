#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "radpipe/calib.hpp"

namespace radpipe {

/// Boolean exclusion mask in storage order (row-major, row = vertical index).
/// A set pixel is excluded from integration.
class MaskImage {
 public:
  MaskImage() = default;
  MaskImage(int rows, int cols);
  MaskImage(int rows, int cols, std::vector<std::uint8_t> masked);

  int rows() const noexcept { return dims_[0]; }
  int cols() const noexcept { return dims_[1]; }
  std::array<int, 2> dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return masked_.size(); }

  bool masked(int row, int col) const noexcept { return masked_[index(row, col)] != 0; }
  bool masked(std::size_t i) const noexcept { return masked_[i] != 0; }
  void set(int row, int col, bool value = true) noexcept { masked_[index(row, col)] = value ? 1 : 0; }
  std::size_t masked_count() const noexcept;

  std::span<const std::uint8_t> data() const noexcept { return masked_; }

  bool operator==(const MaskImage&) const = default;

 private:
  std::size_t index(int row, int col) const noexcept {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(dims_[1]) + static_cast<std::size_t>(col);
  }

  std::array<int, 2> dims_{0, 0};
  std::vector<std::uint8_t> masked_;
};

/// Reads a mask file. For grayscale images nonzero means masked; for FIT2D
/// .msk files set bits mean masked.
MaskImage load_mask(const MaskSource& source);

/// Writes a mask; grayscale output uses 255 for masked and 0 for clear.
void save_mask(const MaskImage& mask, const std::filesystem::path& path, MaskFormat format);

/// Pixel-wise union. An empty list yields an all-clear mask of `dims`.
MaskImage combine_masks(std::span<const MaskImage> masks, std::array<int, 2> dims);

/// Throws DimensionError unless the mask matches the sensor size.
void check_mask_dims(const MaskImage& mask, const DetectorGeometry& geometry);

}  // namespace radpipe
