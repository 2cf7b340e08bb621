#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "radpipe/calib.hpp"
#include "radpipe/frame.hpp"
#include "radpipe/mask.hpp"
#include "radpipe/weights.hpp"

namespace radpipe {

struct RadialProfile {
  std::vector<double> q;             // nm^-1, bin centers
  std::vector<double> intensity;     // mean intensity per bin
  std::vector<double> error;         // Poisson error per bin
  std::vector<double> area;          // effective pixel count per bin
  std::vector<double> weighted_sum;  // sum_i C_ji p_i before normalization
  double acquired_at = 0.0;
  TimeSource time_source = TimeSource::FileTime;
  std::string source_path;

  std::size_t size() const noexcept { return q.size(); }
};

struct ClassifierRecord {
  std::optional<double> total_intensity;     // integral of I dq
  std::optional<double> invariant;           // integral of q^2 I dq
  std::optional<double> correlation_length;  // pi * integral(q I) / integral(q^2 I)
  double acquired_at = 0.0;
  TimeSource time_source = TimeSource::FileTime;
  std::string source_path;
  std::string dataset;

  bool operator==(const ClassifierRecord&) const = default;
};

/// I_j = (sum_i C_ji p_i) / A_j where A_j > 0, otherwise 0.
RadialProfile integrate_frame(const WeightingMatrix& w, const Frame& frame);

/// E_j = sqrt(I_j / A_j) for A_j > 0, else 0. Negative intensities are a DomainError.
std::vector<double> poisson_errors(std::span<const double> intensity, std::span<const double> area);

/// Trapezoidal integral parameters over the bins with q in [q_start, q_stop]
/// and A > 0. With fewer than two such bins every value is unavailable.
ClassifierRecord classifiers(const RadialProfile& profile, double q_start, double q_stop);

struct SliceProfile {
  SliceSpec spec;
  std::vector<double> q;          // signed detector-plane component (q_H or q_V), nm^-1
  std::vector<double> intensity;  // window mean
  std::vector<double> error;
  std::vector<double> count;      // unmasked pixels in the window

  std::string abscissa_label() const;
};

/// Line cuts in detector coordinates, without Ewald-sphere correction.
/// `masks` is indexed by each spec's mask_reference.
std::vector<SliceProfile> slice_profiles(const Frame& frame, const DetectorGeometry& geom, double wavelength,
                                         std::span<const SliceSpec> specs, std::span<const MaskImage> masks);

/// q along one detector axis for a signed in-plane offset in mm.
double axis_q(double offset_mm, double distance_mm, double wavelength);

}  // namespace radpipe
