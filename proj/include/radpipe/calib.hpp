#pragma once

// Integration calibration: detector geometry, masks, binning and queue settings.
//
// Values are held in the units of the calibration file (pixels, mm, um, degrees,
// Angstrom, nm^-1) so that parse/serialize is bit-exact; the accessors on
// DetectorGeometry return the SI-ish internal units used by the math (mm, rad).

#include <array>
#include <cstddef>
#include <filesystem>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace radpipe {

inline constexpr double kDegree = std::numbers::pi / 180.0;

struct DetectorGeometry {
  std::array<double, 2> beamcenter{0.0, 0.0};  // [vertical, horizontal], pixels
  double detector_distance = 0.0;              // mm
  std::array<int, 2> image_size{0, 0};         // [vertical, horizontal], pixels
  std::array<double, 2> pixel_size{0.0, 0.0};  // [vertical, horizontal], um
  double tilt_rotation = 0.0;                  // degrees
  double tilt_angle = 0.0;                     // degrees

  int rows() const noexcept { return image_size[0]; }
  int cols() const noexcept { return image_size[1]; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(image_size[0]) * static_cast<std::size_t>(image_size[1]);
  }
  double pixel_mm(int axis) const noexcept { return pixel_size[static_cast<std::size_t>(axis)] * 1e-3; }
  double tilt_rotation_rad() const noexcept { return tilt_rotation * kDegree; }
  double tilt_angle_rad() const noexcept { return tilt_angle * kDegree; }

  bool operator==(const DetectorGeometry&) const = default;
};

enum class MaskFormat { Fit2d, Pgm, Png };

std::string_view to_string(MaskFormat format);
MaskFormat mask_format_from_string(std::string_view name);
/// Guesses the format from the file extension (.msk, .pgm, .png).
MaskFormat mask_format_from_path(const std::filesystem::path& path);

struct MaskSource {
  std::string path;
  MaskFormat format = MaskFormat::Fit2d;

  bool operator==(const MaskSource&) const = default;
};

enum class SliceDirection { X, Y };
enum class SlicePlane { InPlane, Vertical };

/// A GISAXS line cut in detector coordinates. An x-slice runs along a row
/// (position is a row coordinate), a y-slice along a column.
struct SliceSpec {
  SliceDirection direction = SliceDirection::X;
  SlicePlane plane = SlicePlane::InPlane;
  double position = 0.0;  // pixels
  int margin = 0;         // pixels on each side; thickness = 2*margin + 1
  int mask_reference = 0; // index into Calibration::masks

  int thickness() const noexcept { return 2 * margin + 1; }
  bool operator==(const SliceSpec&) const = default;
};

struct Calibration {
  DetectorGeometry geometry;
  std::vector<MaskSource> masks;
  int oversampling = 1;
  double pixels_per_radial_element = 1.0;
  double q_start = 0.0;  // nm^-1
  double q_stop = 0.0;   // nm^-1
  double wavelength = 0.0;  // Angstrom
  std::vector<std::string> directory;
  int threads = 1;
  std::vector<SliceSpec> slices;

  // Optional settings.
  std::string output_directory;  // empty: "<directory[0]>/processed"
  std::vector<std::string> image_extensions{".tif", ".tiff"};

  // Keys not known to this version, kept so that documents round-trip.
  nlohmann::json extra = nlohmann::json::object();

  bool operator==(const Calibration&) const = default;
};

/// Parses and validates a calibration document.
/// Throws SchemaError for missing keys / wrong types and ValidationError for
/// invariant violations; invalid JSON is reported as SchemaError at "/".
Calibration parse_calibration(std::string_view text);
Calibration calibration_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const Calibration& cal);
std::string serialize_calibration(const Calibration& cal);

/// Checks every invariant; throws ValidationError naming the first violation.
void validate(const Calibration& cal);

/// Reads a calibration file and resolves relative mask and directory paths
/// against the file's own directory.
Calibration load_calibration_file(const std::filesystem::path& path);
void resolve_relative_paths(Calibration& cal, const std::filesystem::path& base);

/// Keys that must be present in every calibration document, as JSON pointers.
const std::vector<std::string>& mandatory_keys();

}  // namespace radpipe
