#include "radpipe/reduce.hpp"

#include <cmath>
#include <numbers>

#include "radpipe/errors.hpp"

namespace radpipe {

RadialProfile integrate_frame(const WeightingMatrix& w, const Frame& frame) {
  if (frame.dims != w.dims || frame.pixels.size() != w.n_pixels()) {
    throw DimensionError("frame is " + std::to_string(frame.dims[0]) + "x" + std::to_string(frame.dims[1]) +
                         " but the weighting matrix expects " + std::to_string(w.dims[0]) + "x" +
                         std::to_string(w.dims[1]));
  }
  const std::size_t n = w.n_bins();
  RadialProfile p;
  p.q = w.q_centers;
  p.area = w.area;
  p.weighted_sum.assign(n, 0.0);
  p.intensity.assign(n, 0.0);

  const double* pixels = frame.pixels.data();
  for (std::size_t j = 0; j < n; ++j) {
    double sum = 0.0;
    for (std::size_t k = w.row_offsets[j]; k < w.row_offsets[j + 1]; ++k) {
      sum += w.weight[k] * pixels[w.pixel_index[k]];
    }
    p.weighted_sum[j] = sum;
    if (w.area[j] > 0.0) p.intensity[j] = sum / w.area[j];
  }
  p.error = poisson_errors(p.intensity, p.area);
  p.acquired_at = frame.acquired_at;
  p.time_source = frame.time_source;
  p.source_path = frame.source_path;
  return p;
}

std::vector<double> poisson_errors(std::span<const double> intensity, std::span<const double> area) {
  if (intensity.size() != area.size()) throw DimensionError("intensity and area vectors differ in length");
  std::vector<double> e(intensity.size(), 0.0);
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (area[j] < 0.0) throw DomainError("negative area in bin " + std::to_string(j));
    if (intensity[j] < 0.0) {
      throw DomainError("negative mean intensity " + std::to_string(intensity[j]) + " in bin " + std::to_string(j));
    }
    if (area[j] > 0.0) e[j] = std::sqrt(intensity[j] / area[j]);
  }
  return e;
}

ClassifierRecord classifiers(const RadialProfile& profile, double q_start, double q_stop) {
  ClassifierRecord rec;
  rec.acquired_at = profile.acquired_at;
  rec.time_source = profile.time_source;
  rec.source_path = profile.source_path;
  if (!(q_start < q_stop)) throw ValidationError("classifiers need q_start < q_stop");

  double total = 0.0, first = 0.0, second = 0.0;
  std::size_t used = 0;
  double prev_q = 0.0, prev_i = 0.0;
  for (std::size_t j = 0; j < profile.size(); ++j) {
    const double q = profile.q[j];
    if (!(profile.area[j] > 0.0) || q < q_start || q > q_stop) continue;
    const double i = profile.intensity[j];
    if (used > 0) {
      const double dq = q - prev_q;
      total += 0.5 * dq * (prev_i + i);
      first += 0.5 * dq * (prev_q * prev_i + q * i);
      second += 0.5 * dq * (prev_q * prev_q * prev_i + q * q * i);
    }
    prev_q = q;
    prev_i = i;
    ++used;
  }
  if (used < 2) return rec;
  rec.total_intensity = total;
  rec.invariant = second;
  if (second != 0.0) rec.correlation_length = std::numbers::pi * first / second;
  return rec;
}

std::string SliceProfile::abscissa_label() const {
  return spec.plane == SlicePlane::InPlane ? "q_H [1/nm]" : "q_V [1/nm]";
}

double axis_q(double offset_mm, double distance_mm, double wavelength) {
  const double magnitude = 4.0 * std::numbers::pi / wavelength *
                           std::sin(0.5 * std::atan(std::abs(offset_mm) / distance_mm)) * 10.0;
  return offset_mm < 0.0 ? -magnitude : magnitude;
}

std::vector<SliceProfile> slice_profiles(const Frame& frame, const DetectorGeometry& geom, double wavelength,
                                         std::span<const SliceSpec> specs, std::span<const MaskImage> masks) {
  const int rows = geom.rows(), cols = geom.cols();
  if (frame.dims != geom.image_size) throw DimensionError("frame does not match the sensor size");

  std::vector<SliceProfile> out;
  out.reserve(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const SliceSpec& spec = specs[k];
    if (spec.mask_reference < 0 || static_cast<std::size_t>(spec.mask_reference) >= masks.size()) {
      throw ValidationError("slice " + std::to_string(k) + ": mask_reference " + std::to_string(spec.mask_reference) +
                            " out of range");
    }
    const MaskImage& mask = masks[static_cast<std::size_t>(spec.mask_reference)];
    check_mask_dims(mask, geom);

    const bool along_row = spec.direction == SliceDirection::X;
    const int across_extent = along_row ? rows : cols;  // window runs across this axis
    const int length = along_row ? cols : rows;         // profile runs along this axis
    const long center = std::lround(spec.position);
    const long lo = std::max<long>(0, center - spec.margin);
    const long hi = std::min<long>(across_extent - 1, center + spec.margin);
    if (lo > hi) throw ValidationError("slice " + std::to_string(k) + ": window lies entirely outside the sensor");

    SliceProfile p;
    p.spec = spec;
    p.q.resize(static_cast<std::size_t>(length));
    p.intensity.assign(static_cast<std::size_t>(length), 0.0);
    p.count.assign(static_cast<std::size_t>(length), 0.0);

    const int axis = along_row ? 1 : 0;
    for (int t = 0; t < length; ++t) {
      const double offset = (t + 0.5 - geom.beamcenter[static_cast<std::size_t>(axis)]) * geom.pixel_mm(axis);
      p.q[static_cast<std::size_t>(t)] = axis_q(offset, geom.detector_distance, wavelength);
      double sum = 0.0;
      int count = 0;
      for (long u = lo; u <= hi; ++u) {
        const int row = along_row ? static_cast<int>(u) : t;
        const int col = along_row ? t : static_cast<int>(u);
        if (mask.masked(row, col)) continue;
        sum += frame.pixels[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(col)];
        ++count;
      }
      if (count > 0) p.intensity[static_cast<std::size_t>(t)] = sum / count;
      p.count[static_cast<std::size_t>(t)] = count;
    }
    p.error = poisson_errors(p.intensity, p.count);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace radpipe
