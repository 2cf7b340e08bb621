#pragma once

// Pixel -> scattering vector magnitude under a tilted detector.
//
// Coordinates: a continuous detector position is [v, h] in pixel units, where
// v follows the stored row index and h the column index; pixel (row, col)
// covers [row, row+1) x [col, col+1) so its center is (row + 0.5, col + 0.5).
// The azimuth psi is measured from the +v axis towards the +h axis, so a
// point at +v has psi = 0 and a point at +h has psi = pi/2.
//
// Tilt reduces to a per-pixel distortion angle alpha (the in-plane direction
// to the pixel makes an angle pi/2 + alpha with the beam at the beam center):
//
//   sin(alpha) = sin(tau) * sin(psi + phi + pi/2)
//   l^2        = d^2 + r^2 - 2 d r cos(pi/2 + alpha)
//   cos(2theta) = (l^2 + d^2 - r^2) / (2 l d),   q = 4 pi / lambda * sin(theta)
//
// The last line is the law of cosines for the sample / beam center / pixel
// triangle; at tau = 0 it reduces to tan(2theta) = r / d.

#include <vector>

#include "radpipe/calib.hpp"

namespace radpipe::geometry {

struct PixelPolar {
  double r = 0.0;    // mm, beam center to pixel in the detector plane
  double psi = 0.0;  // rad, [0, 2pi)
};

struct Scattering {
  double two_theta = 0.0;  // rad
  double q = 0.0;          // nm^-1
};

struct ScatterCoords {
  double alpha = 0.0;        // rad
  double path_length = 0.0;  // mm
  double two_theta = 0.0;    // rad
  double q = 0.0;            // nm^-1
};

PixelPolar pixel_polar(const DetectorGeometry& geom, double v, double h);

double distortion_angle(double tilt_angle, double tilt_rotation, double psi);

/// Sample-to-pixel distance. Evaluated as sqrt(d^2 + r^2 + 2 d r sin(alpha)),
/// the same expression with cos(pi/2 + alpha) = -sin(alpha) substituted.
double path_length(double distance, double r, double alpha);

/// Scattering angle and q from the triangle (l, r, d); wavelength in Angstrom.
/// Throws DomainError if the sides violate the triangle inequality.
Scattering scattering_q(double path_length, double r, double distance, double wavelength);

/// Full chain for one continuous detector position.
ScatterCoords scatter(const DetectorGeometry& geom, double wavelength, double v, double h);

/// q of a point at in-plane radius r (mm) along the alpha = 0 direction.
double q_at_radius(const DetectorGeometry& geom, double wavelength, double r);

/// Radial step of the binning grid in mm (mean of the two pixel pitches).
double radial_step_mm(const DetectorGeometry& geom, double pixels_per_radial_element);

struct QGrid {
  std::vector<double> edges;    // strictly increasing, edges[0] = 0
  std::vector<double> centers;  // midpoints of consecutive edges
  std::size_t bins() const noexcept { return centers.size(); }
};

/// Bin edges at radii 0, w, 2w, ... mapped to q along alpha = 0; the last edge
/// lies at or beyond the sensor corner farthest from the beam center.
QGrid q_grid(const Calibration& cal);

/// Index of the bin containing q, or -1 when q lies outside [edges.front(), edges.back()).
long bin_index(const QGrid& grid, double q);

}  // namespace radpipe::geometry
