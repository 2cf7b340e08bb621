#pragma once

// .chi text profiles: four header lines (source, abscissa label, ordinate
// label, point count) followed by one "q I E" line per point.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "radpipe/reduce.hpp"

namespace radpipe {

struct ChiData {
  std::string source;
  std::string abscissa_label;
  std::string ordinate_label;
  std::vector<double> q;
  std::vector<double> intensity;
  std::vector<double> error;
};

std::string format_chi(const std::string& source, const std::string& abscissa_label, std::span<const double> q,
                       std::span<const double> intensity, std::span<const double> error);
std::string format_chi(const RadialProfile& profile);

/// Writes through a temporary file and a rename so readers never see a partial file.
void write_chi(const RadialProfile& profile, const std::filesystem::path& path);
void write_slice_chi(const SliceProfile& slice, const std::string& source, const std::filesystem::path& path);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

ChiData read_chi(const std::filesystem::path& path);
ChiData parse_chi(const std::string& text);

}  // namespace radpipe
