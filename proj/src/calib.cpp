#include "radpipe/calib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "radpipe/errors.hpp"

namespace radpipe {

using nlohmann::json;

namespace {

const char* type_name(const json& value) { return value.type_name(); }

std::string child(const std::string& path, std::string_view key) {
  return (path == "/" ? std::string("/") : path + "/") + std::string(key);
}

std::string child(const std::string& path, std::size_t index) {
  return child(path, std::to_string(index));
}

const json& require(const json& obj, std::string_view key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError(path, "missing mandatory key \"" + std::string(key) + "\"");
  }
  return *it;
}

void expect_object(const json& value, const std::string& path) {
  if (!value.is_object()) {
    throw SchemaError(path, std::string("expected object, got ") + type_name(value));
  }
}

void expect_array(const json& value, const std::string& path) {
  if (!value.is_array()) {
    throw SchemaError(path, std::string("expected array, got ") + type_name(value));
  }
}

double as_number(const json& value, const std::string& path) {
  if (!value.is_number()) {
    throw SchemaError(path, std::string("expected number, got ") + type_name(value));
  }
  return value.get<double>();
}

int as_integer(const json& value, const std::string& path) {
  if (!value.is_number_integer()) {
    throw SchemaError(path, std::string("expected integer, got ") + type_name(value));
  }
  const auto v = value.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    throw SchemaError(path, "integer out of range");
  }
  return static_cast<int>(v);
}

std::string as_string(const json& value, const std::string& path) {
  if (!value.is_string()) {
    throw SchemaError(path, std::string("expected string, got ") + type_name(value));
  }
  return value.get<std::string>();
}

template <typename T, typename F>
std::array<T, 2> as_pair(const json& value, const std::string& path, F element) {
  expect_array(value, path);
  if (value.size() != 2) {
    throw SchemaError(path, "expected array of 2 elements, got " + std::to_string(value.size()));
  }
  return {element(value[0], child(path, std::size_t{0})), element(value[1], child(path, std::size_t{1}))};
}

DetectorGeometry parse_geometry(const json& g, const std::string& path) {
  expect_object(g, path);
  DetectorGeometry geom;
  geom.beamcenter = as_pair<double>(require(g, "beamcenter", path), child(path, "beamcenter"), as_number);
  geom.detector_distance = as_number(require(g, "detector_distance", path), child(path, "detector_distance"));
  geom.image_size = as_pair<int>(require(g, "image_size", path), child(path, "image_size"), as_integer);
  geom.pixel_size = as_pair<double>(require(g, "pixel_size", path), child(path, "pixel_size"), as_number);
  const std::string tilt_path = child(path, "tilt");
  const json& tilt = require(g, "tilt", path);
  expect_object(tilt, tilt_path);
  geom.tilt_rotation = as_number(require(tilt, "tilt_rotation", tilt_path), child(tilt_path, "tilt_rotation"));
  geom.tilt_angle = as_number(require(tilt, "tilt_angle", tilt_path), child(tilt_path, "tilt_angle"));
  return geom;
}

MaskSource parse_mask(const json& m, const std::string& path) {
  expect_object(m, path);
  MaskSource source;
  source.path = as_string(require(m, "path_to_file", path), child(path, "path_to_file"));
  if (auto it = m.find("format"); it != m.end()) {
    const auto name = as_string(*it, child(path, "format"));
    try {
      source.format = mask_format_from_string(name);
    } catch (const ValidationError& e) {
      throw SchemaError(child(path, "format"), e.what());
    }
  } else {
    try {
      source.format = mask_format_from_path(source.path);
    } catch (const ValidationError& e) {
      throw SchemaError(child(path, "path_to_file"), e.what());
    }
  }
  return source;
}

SliceSpec parse_slice(const json& s, const std::string& path) {
  expect_object(s, path);
  SliceSpec spec;
  const auto direction = as_string(require(s, "direction", path), child(path, "direction"));
  if (direction == "x") {
    spec.direction = SliceDirection::X;
  } else if (direction == "y") {
    spec.direction = SliceDirection::Y;
  } else {
    throw SchemaError(child(path, "direction"), "expected \"x\" or \"y\", got \"" + direction + "\"");
  }
  const auto plane = as_string(require(s, "plane", path), child(path, "plane"));
  if (plane == "InPlane") {
    spec.plane = SlicePlane::InPlane;
  } else if (plane == "Vertical") {
    spec.plane = SlicePlane::Vertical;
  } else {
    throw SchemaError(child(path, "plane"), "expected \"InPlane\" or \"Vertical\", got \"" + plane + "\"");
  }
  spec.position = as_number(require(s, "position", path), child(path, "position"));
  spec.margin = as_integer(require(s, "margin", path), child(path, "margin"));
  spec.mask_reference = as_integer(require(s, "mask_reference", path), child(path, "mask_reference"));
  return spec;
}

const std::set<std::string, std::less<>>& known_top_level_keys() {
  static const std::set<std::string, std::less<>> keys{
      "geometry", "masks", "oversampling", "pixels_per_radial_element", "q_start", "q_stop",
      "wavelength", "directory", "threads", "slices", "output_directory", "image_extensions"};
  return keys;
}

}  // namespace

std::string_view to_string(MaskFormat format) {
  switch (format) {
    case MaskFormat::Fit2d: return "msk";
    case MaskFormat::Pgm: return "pgm";
    case MaskFormat::Png: return "png";
  }
  return "msk";
}

MaskFormat mask_format_from_string(std::string_view name) {
  if (name == "msk") return MaskFormat::Fit2d;
  if (name == "pgm") return MaskFormat::Pgm;
  if (name == "png") return MaskFormat::Png;
  throw ValidationError("unknown mask format \"" + std::string(name) + "\"");
}

MaskFormat mask_format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext.empty()) {
    throw ValidationError("cannot infer mask format of \"" + path.string() + "\"");
  }
  return mask_format_from_string(ext.substr(1));
}

const std::vector<std::string>& mandatory_keys() {
  static const std::vector<std::string> keys{
      "/geometry",
      "/geometry/beamcenter",
      "/geometry/detector_distance",
      "/geometry/image_size",
      "/geometry/pixel_size",
      "/geometry/tilt",
      "/geometry/tilt/tilt_rotation",
      "/geometry/tilt/tilt_angle",
      "/masks",
      "/oversampling",
      "/pixels_per_radial_element",
      "/q_start",
      "/q_stop",
      "/wavelength",
      "/directory",
      "/threads",
  };
  return keys;
}

Calibration calibration_from_json(const json& doc) {
  const std::string root = "/";
  expect_object(doc, root);
  Calibration cal;
  cal.geometry = parse_geometry(require(doc, "geometry", root), "/geometry");

  const json& masks = require(doc, "masks", root);
  expect_array(masks, "/masks");
  for (std::size_t i = 0; i < masks.size(); ++i) {
    cal.masks.push_back(parse_mask(masks[i], child("/masks", i)));
  }

  cal.oversampling = as_integer(require(doc, "oversampling", root), "/oversampling");
  cal.pixels_per_radial_element =
      as_number(require(doc, "pixels_per_radial_element", root), "/pixels_per_radial_element");
  cal.q_start = as_number(require(doc, "q_start", root), "/q_start");
  cal.q_stop = as_number(require(doc, "q_stop", root), "/q_stop");
  cal.wavelength = as_number(require(doc, "wavelength", root), "/wavelength");

  // Usually an array of directories; a bare string is accepted too.
  const json& dir = require(doc, "directory", root);
  if (dir.is_string()) {
    cal.directory.push_back(dir.get<std::string>());
  } else {
    expect_array(dir, "/directory");
    for (std::size_t i = 0; i < dir.size(); ++i) {
      cal.directory.push_back(as_string(dir[i], child("/directory", i)));
    }
  }

  cal.threads = as_integer(require(doc, "threads", root), "/threads");

  if (auto it = doc.find("slices"); it != doc.end()) {
    expect_array(*it, "/slices");
    for (std::size_t i = 0; i < it->size(); ++i) {
      cal.slices.push_back(parse_slice((*it)[i], child("/slices", i)));
    }
  }
  if (auto it = doc.find("output_directory"); it != doc.end()) {
    cal.output_directory = as_string(*it, "/output_directory");
  }
  if (auto it = doc.find("image_extensions"); it != doc.end()) {
    expect_array(*it, "/image_extensions");
    cal.image_extensions.clear();
    for (std::size_t i = 0; i < it->size(); ++i) {
      cal.image_extensions.push_back(as_string((*it)[i], child("/image_extensions", i)));
    }
  }

  for (const auto& [key, value] : doc.items()) {
    if (!known_top_level_keys().contains(key)) cal.extra[key] = value;
  }

  validate(cal);
  return cal;
}

Calibration parse_calibration(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("/", std::string("invalid JSON: ") + e.what());
  }
  return calibration_from_json(doc);
}

void validate(const Calibration& cal) {
  const auto& g = cal.geometry;
  auto fail = [](const std::string& what) { throw ValidationError(what); };
  auto finite = [](double v) { return std::isfinite(v); };

  if (!finite(g.beamcenter[0]) || !finite(g.beamcenter[1])) fail("geometry.beamcenter must be finite");
  if (!(g.detector_distance > 0.0) || !finite(g.detector_distance)) fail("geometry.detector_distance must be > 0");
  if (g.image_size[0] < 1 || g.image_size[1] < 1) fail("geometry.image_size components must be >= 1");
  if (!(g.pixel_size[0] > 0.0) || !(g.pixel_size[1] > 0.0) || !finite(g.pixel_size[0]) || !finite(g.pixel_size[1])) {
    fail("geometry.pixel_size components must be > 0");
  }
  if (!finite(g.tilt_rotation)) fail("geometry.tilt.tilt_rotation must be finite");
  if (!(std::abs(g.tilt_angle) < 90.0)) fail("geometry.tilt.tilt_angle must satisfy |tilt_angle| < 90");
  if (cal.oversampling < 1) fail("oversampling must be >= 1");
  if (!(cal.pixels_per_radial_element > 0.0) || !finite(cal.pixels_per_radial_element)) {
    fail("pixels_per_radial_element must be > 0");
  }
  if (!finite(cal.q_start) || !finite(cal.q_stop) || !(cal.q_start < cal.q_stop)) fail("q_start must be < q_stop");
  if (!(cal.wavelength > 0.0) || !finite(cal.wavelength)) fail("wavelength must be > 0");
  if (cal.threads < 1) fail("threads must be >= 1");

  for (std::size_t k = 0; k < cal.slices.size(); ++k) {
    const auto& s = cal.slices[k];
    const std::string name = "slices[" + std::to_string(k) + "]";
    if (s.margin < 0) fail(name + ".margin must be >= 0");
    if (s.mask_reference < 0 || static_cast<std::size_t>(s.mask_reference) >= cal.masks.size()) {
      fail(name + ".mask_reference " + std::to_string(s.mask_reference) + " does not index an entry of masks");
    }
    const int extent = s.direction == SliceDirection::X ? g.rows() : g.cols();
    const long center = std::lround(s.position);
    if (!finite(s.position) || center + s.margin < 0 || center - s.margin >= extent) {
      fail(name + " window lies entirely outside the sensor");
    }
  }
}

json to_json(const Calibration& cal) {
  json doc = cal.extra.is_object() ? cal.extra : json::object();
  const auto& g = cal.geometry;
  doc["geometry"] = {
      {"beamcenter", {g.beamcenter[0], g.beamcenter[1]}},
      {"detector_distance", g.detector_distance},
      {"image_size", {g.image_size[0], g.image_size[1]}},
      {"pixel_size", {g.pixel_size[0], g.pixel_size[1]}},
      {"tilt", {{"tilt_rotation", g.tilt_rotation}, {"tilt_angle", g.tilt_angle}}},
  };
  json masks = json::array();
  for (const auto& m : cal.masks) {
    masks.push_back({{"path_to_file", m.path}, {"format", std::string(to_string(m.format))}});
  }
  doc["masks"] = std::move(masks);
  doc["oversampling"] = cal.oversampling;
  doc["pixels_per_radial_element"] = cal.pixels_per_radial_element;
  doc["q_start"] = cal.q_start;
  doc["q_stop"] = cal.q_stop;
  doc["wavelength"] = cal.wavelength;
  doc["directory"] = cal.directory;
  doc["threads"] = cal.threads;
  json slices = json::array();
  for (const auto& s : cal.slices) {
    slices.push_back({
        {"direction", s.direction == SliceDirection::X ? "x" : "y"},
        {"plane", s.plane == SlicePlane::InPlane ? "InPlane" : "Vertical"},
        {"position", s.position},
        {"margin", s.margin},
        {"mask_reference", s.mask_reference},
    });
  }
  doc["slices"] = std::move(slices);
  doc["output_directory"] = cal.output_directory;
  doc["image_extensions"] = cal.image_extensions;
  return doc;
}

std::string serialize_calibration(const Calibration& cal) { return to_json(cal).dump(2) + "\n"; }

void resolve_relative_paths(Calibration& cal, const std::filesystem::path& base) {
  namespace fs = std::filesystem;
  auto resolve = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  for (auto& m : cal.masks) resolve(m.path);
  for (auto& d : cal.directory) resolve(d);
  resolve(cal.output_directory);
}

Calibration load_calibration_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open calibration file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  Calibration cal = parse_calibration(buffer.str());
  resolve_relative_paths(cal, std::filesystem::absolute(path).parent_path());
  return cal;
}

}  // namespace radpipe
