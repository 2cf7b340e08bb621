#include "radpipe/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "radpipe/errors.hpp"

namespace radpipe::geometry {

namespace {

constexpr double kPi = std::numbers::pi;

// q in nm^-1 from the full scattering angle and a wavelength in Angstrom.
double q_from_two_theta(double two_theta, double wavelength) {
  return 4.0 * kPi / wavelength * std::sin(0.5 * two_theta) * 10.0;
}

}  // namespace

PixelPolar pixel_polar(const DetectorGeometry& geom, double v, double h) {
  const double dv = (v - geom.beamcenter[0]) * geom.pixel_mm(0);
  const double dh = (h - geom.beamcenter[1]) * geom.pixel_mm(1);
  PixelPolar p;
  p.r = std::hypot(dv, dh);
  double psi = std::atan2(dh, dv);
  if (psi < 0.0) psi += 2.0 * kPi;
  if (psi >= 2.0 * kPi) psi = 0.0;
  p.psi = psi;
  return p;
}

double distortion_angle(double tilt_angle, double tilt_rotation, double psi) {
  const double s = std::sin(tilt_angle) * std::sin(psi + tilt_rotation + kPi / 2.0);
  return std::asin(std::clamp(s, -1.0, 1.0));
}

double path_length(double distance, double r, double alpha) {
  return std::sqrt(distance * distance + r * r + 2.0 * distance * r * std::sin(alpha));
}

Scattering scattering_q(double l, double r, double d, double wavelength) {
  if (!(l > 0.0) || !(d > 0.0) || r < 0.0) throw DomainError("scattering_q: need l > 0, d > 0, r >= 0");
  // Half-angle form of the law of cosines, with Kahan's ordering of the
  // Heron product so thin triangles (r << d) keep full relative precision.
  std::array<double, 3> s{l, d, r};
  std::sort(s.begin(), s.end(), std::greater<>());
  const double a = s[0], b = s[1], c = s[2];
  const double gap = c - (a - b);
  if (gap < -1e-12 * a) {
    throw DomainError("scattering_q: sides l=" + std::to_string(l) + " r=" + std::to_string(r) +
                      " d=" + std::to_string(d) + " violate the triangle inequality");
  }
  const double heron = (a + (b + c)) * std::max(gap, 0.0) * (c + (a - b)) * (a + (b - c));
  const double theta = std::atan2(std::sqrt(heron), (l + d + r) * (l + d - r));
  return {2.0 * theta, 4.0 * kPi / wavelength * std::sin(theta) * 10.0};
}

ScatterCoords scatter(const DetectorGeometry& geom, double wavelength, double v, double h) {
  const PixelPolar polar = pixel_polar(geom, v, h);
  const double d = geom.detector_distance;
  ScatterCoords out;
  out.alpha = distortion_angle(geom.tilt_angle_rad(), geom.tilt_rotation_rad(), polar.psi);
  out.path_length = path_length(d, polar.r, out.alpha);
  // Same triangle as scattering_q, using sin(2theta) = r cos(alpha) / l and
  // cos(2theta) = (d + r sin(alpha)) / l so that l's rounding does not enter.
  out.two_theta = std::atan2(polar.r * std::cos(out.alpha), d + polar.r * std::sin(out.alpha));
  out.q = q_from_two_theta(out.two_theta, wavelength);
  return out;
}

double q_at_radius(const DetectorGeometry& geom, double wavelength, double r) {
  return q_from_two_theta(std::atan2(r, geom.detector_distance), wavelength);
}

double radial_step_mm(const DetectorGeometry& geom, double pixels_per_radial_element) {
  return pixels_per_radial_element * 0.5 * (geom.pixel_mm(0) + geom.pixel_mm(1));
}

QGrid q_grid(const Calibration& cal) {
  const auto& g = cal.geometry;
  double r_max = 0.0;
  for (double v : {0.0, static_cast<double>(g.rows())}) {
    for (double h : {0.0, static_cast<double>(g.cols())}) {
      r_max = std::max(r_max, pixel_polar(g, v, h).r);
    }
  }
  const double step = radial_step_mm(g, cal.pixels_per_radial_element);
  const auto n_bins = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(r_max / step)));

  QGrid grid;
  grid.edges.resize(n_bins + 1);
  for (std::size_t k = 0; k <= n_bins; ++k) {
    grid.edges[k] = q_at_radius(g, cal.wavelength, static_cast<double>(k) * step);
  }
  grid.centers.resize(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) grid.centers[k] = 0.5 * (grid.edges[k] + grid.edges[k + 1]);
  return grid;
}

long bin_index(const QGrid& grid, double q) {
  if (grid.edges.size() < 2 || !(q >= grid.edges.front()) || !(q < grid.edges.back())) return -1;
  const auto it = std::upper_bound(grid.edges.begin(), grid.edges.end(), q);
  return static_cast<long>(it - grid.edges.begin()) - 1;
}

}  // namespace radpipe::geometry
