#include "radpipe/chi.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "radpipe/errors.hpp"

namespace radpipe {

namespace {

constexpr const char* kIntensityLabel = "I [a.u.]";

void append_value(std::string& out, double v) {
  // 17 significant digits: the printed value parses back to the same double.
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.16e", v);
  out.append(buf, static_cast<std::size_t>(n));
}

}  // namespace

std::string format_chi(const std::string& source, const std::string& abscissa_label, std::span<const double> q,
                       std::span<const double> intensity, std::span<const double> error) {
  if (q.size() != intensity.size() || q.size() != error.size()) {
    throw DimensionError("chi columns differ in length");
  }
  std::string out;
  out.reserve(80 + q.size() * 72);
  out += source;
  out += '\n';
  out += abscissa_label;
  out += '\n';
  out += kIntensityLabel;
  out += '\n';
  out += std::to_string(q.size());
  out += '\n';
  for (std::size_t j = 0; j < q.size(); ++j) {
    append_value(out, q[j]);
    out += ' ';
    append_value(out, intensity[j]);
    out += ' ';
    append_value(out, error[j]);
    out += '\n';
  }
  return out;
}

std::string format_chi(const RadialProfile& profile) {
  return format_chi(profile.source_path, "q [1/nm]", profile.q, profile.intensity, profile.error);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  static std::atomic<unsigned long> counter{0};
  auto tmp = path;
  tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 100000) + "_" +
         std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename onto " + path.string());
  }
}

void write_chi(const RadialProfile& profile, const std::filesystem::path& path) {
  write_text_atomic(path, format_chi(profile));
}

void write_slice_chi(const SliceProfile& slice, const std::string& source, const std::filesystem::path& path) {
  write_text_atomic(path, format_chi(source, slice.abscissa_label(), slice.q, slice.intensity, slice.error));
}

ChiData parse_chi(const std::string& text) {
  std::istringstream in(text);
  ChiData data;
  std::string count_line;
  if (!std::getline(in, data.source) || !std::getline(in, data.abscissa_label) ||
      !std::getline(in, data.ordinate_label) || !std::getline(in, count_line)) {
    throw FormatError("chi: truncated header");
  }
  std::size_t count = 0;
  const auto [ptr, ec] = std::from_chars(count_line.data(), count_line.data() + count_line.size(), count);
  if (ec != std::errc() || ptr != count_line.data() + count_line.size()) throw FormatError("chi: bad point count");
  data.q.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("chi: fewer data lines than declared");
    std::istringstream fields(line);
    double q, i, e;
    if (!(fields >> q >> i >> e)) throw FormatError("chi: malformed data line " + std::to_string(j + 1));
    data.q.push_back(q);
    data.intensity.push_back(i);
    data.error.push_back(e);
  }
  return data;
}

ChiData read_chi(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_chi(buffer.str());
}

}  // namespace radpipe
