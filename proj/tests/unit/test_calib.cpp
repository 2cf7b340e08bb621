#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "radpipe/calib.hpp"
#include "radpipe/errors.hpp"

using namespace radpipe;
using nlohmann::json;

namespace {

const char* kFullDocument = R"({
  "geometry": {
    "beamcenter": [512.5, 498.25],
    "detector_distance": 1043.2,
    "image_size": [1043, 981],
    "pixel_size": [172, 172],
    "tilt": {"tilt_rotation": -12.5, "tilt_angle": 0.75}
  },
  "masks": [{"path_to_file": "masks/beamstop.msk", "format": "msk"},
            {"path_to_file": "masks/gaps.png"}],
  "oversampling": 3,
  "pixels_per_radial_element": 1.5,
  "q_start": 0.1,
  "q_stop": 2.5,
  "wavelength": 1.5406,
  "directory": ["/data/run7"],
  "threads": 8,
  "slices": [{"direction": "x", "plane": "InPlane", "position": 300, "margin": 7, "mask_reference": 1}]
})";

json minimal() {
  return json::parse(R"({
    "geometry": {"beamcenter": [1, 2], "detector_distance": 100, "image_size": [4, 4],
                 "pixel_size": [100, 100], "tilt": {"tilt_rotation": 0, "tilt_angle": 0}},
    "masks": [], "oversampling": 1, "pixels_per_radial_element": 1, "q_start": 0, "q_stop": 1,
    "wavelength": 1, "directory": ["/tmp"], "threads": 1})");
}

std::string schema_path(const json& doc) {
  try {
    calibration_from_json(doc);
  } catch (const SchemaError& e) {
    return e.path();
  }
  return "<no error>";
}

}  // namespace

TEST(Calibration, ParsesEveryTableField) {
  const Calibration cal = parse_calibration(kFullDocument);
  EXPECT_EQ(cal.geometry.beamcenter[0], 512.5);
  EXPECT_EQ(cal.geometry.beamcenter[1], 498.25);
  EXPECT_EQ(cal.geometry.detector_distance, 1043.2);
  EXPECT_EQ(cal.geometry.image_size[0], 1043);
  EXPECT_EQ(cal.geometry.image_size[1], 981);
  EXPECT_EQ(cal.geometry.pixel_size[0], 172.0);
  EXPECT_EQ(cal.geometry.tilt_rotation, -12.5);
  EXPECT_EQ(cal.geometry.tilt_angle, 0.75);
  EXPECT_DOUBLE_EQ(cal.geometry.tilt_angle_rad(), 0.75 * std::numbers::pi / 180.0);
  EXPECT_DOUBLE_EQ(cal.geometry.pixel_mm(0), 0.172);
  ASSERT_EQ(cal.masks.size(), 2u);
  EXPECT_EQ(cal.masks[0].format, MaskFormat::Fit2d);
  EXPECT_EQ(cal.masks[1].format, MaskFormat::Png);  // inferred from the extension
  EXPECT_EQ(cal.oversampling, 3);
  EXPECT_EQ(cal.pixels_per_radial_element, 1.5);
  EXPECT_EQ(cal.q_start, 0.1);
  EXPECT_EQ(cal.q_stop, 2.5);
  EXPECT_EQ(cal.wavelength, 1.5406);
  ASSERT_EQ(cal.directory.size(), 1u);
  EXPECT_EQ(cal.directory[0], "/data/run7");
  EXPECT_EQ(cal.threads, 8);
  ASSERT_EQ(cal.slices.size(), 1u);
  EXPECT_EQ(cal.slices[0].direction, SliceDirection::X);
  EXPECT_EQ(cal.slices[0].margin, 7);
  EXPECT_EQ(cal.slices[0].thickness(), 15);
  EXPECT_EQ(cal.slices[0].mask_reference, 1);
}

TEST(Calibration, OptionalFieldsDefault) {
  const Calibration cal = calibration_from_json(minimal());
  EXPECT_TRUE(cal.slices.empty());
  EXPECT_TRUE(cal.output_directory.empty());
  EXPECT_EQ(cal.image_extensions, (std::vector<std::string>{".tif", ".tiff"}));
}

TEST(Calibration, DirectoryAcceptsBareString) {
  json doc = minimal();
  doc["directory"] = "/data/x";
  EXPECT_EQ(calibration_from_json(doc).directory, std::vector<std::string>{"/data/x"});
}

TEST(Calibration, SerializeParseIsIdentity) {
  const Calibration cal = parse_calibration(kFullDocument);
  EXPECT_EQ(parse_calibration(serialize_calibration(cal)), cal);
}

TEST(Calibration, MinimalDocumentRoundTripsToItsNormalForm) {
  const json doc = minimal();
  const json once = json::parse(serialize_calibration(calibration_from_json(doc)));
  const json twice = json::parse(serialize_calibration(parse_calibration(once.dump())));
  EXPECT_EQ(once, twice);
  for (const auto& key : mandatory_keys()) {
    EXPECT_EQ(once.at(json::json_pointer(key)), doc.at(json::json_pointer(key))) << key;
  }
}

TEST(Calibration, RandomRoundTrips) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.01, 1000.0);
  for (int t = 0; t < 200; ++t) {
    Calibration cal;
    cal.geometry.beamcenter = {u(rng) - 500.0, u(rng)};
    cal.geometry.detector_distance = u(rng);
    cal.geometry.image_size = {1 + t, 2 + t};
    cal.geometry.pixel_size = {u(rng), u(rng)};
    cal.geometry.tilt_rotation = u(rng) - 500.0;
    cal.geometry.tilt_angle = std::fmod(u(rng), 89.0);
    cal.masks = {{"a.msk", MaskFormat::Fit2d}, {"b.pgm", MaskFormat::Pgm}};
    cal.oversampling = 1 + t % 5;
    cal.pixels_per_radial_element = u(rng);
    cal.q_start = u(rng) / 1000.0;
    cal.q_stop = cal.q_start + u(rng);
    cal.wavelength = u(rng) / 100.0;
    cal.directory = {"/d" + std::to_string(t)};
    cal.threads = 1 + t % 16;
    cal.slices = {{SliceDirection::Y, SlicePlane::Vertical, 0.5, t % 9, 1}};
    validate(cal);
    EXPECT_EQ(parse_calibration(serialize_calibration(cal)), cal);
  }
}

TEST(Calibration, UnknownKeysSurviveRoundTrip) {
  json doc = minimal();
  doc["operator_note"] = {{"shift", "night"}};
  const json out = json::parse(serialize_calibration(calibration_from_json(doc)));
  EXPECT_EQ(out["operator_note"]["shift"], "night");
}

TEST(Calibration, MissingWavelengthNamesTheKey) {
  json doc = minimal();
  doc.erase("wavelength");
  try {
    calibration_from_json(doc);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("wavelength"), std::string::npos);
  }
}

TEST(Calibration, EveryMandatoryKeyIsEnforced) {
  for (const auto& key : mandatory_keys()) {
    json doc = minimal();
    const json::json_pointer ptr(key);
    doc[ptr.parent_pointer()].erase(ptr.back());
    try {
      calibration_from_json(doc);
      ADD_FAILURE() << "no error for missing " << key;
    } catch (const SchemaError& e) {
      EXPECT_NE(std::string(e.what()).find(ptr.back()), std::string::npos) << key;
    }
  }
}

TEST(Calibration, TypeMismatchReportsJsonPath) {
  json doc = minimal();
  doc["geometry"]["beamcenter"][1] = "middle";
  EXPECT_EQ(schema_path(doc), "/geometry/beamcenter/1");
  doc = minimal();
  doc["threads"] = 2.5;
  EXPECT_EQ(schema_path(doc), "/threads");
  doc = minimal();
  doc["geometry"]["tilt"] = 3;
  EXPECT_EQ(schema_path(doc), "/geometry/tilt");
}

TEST(Calibration, InvalidJsonIsASchemaError) { EXPECT_THROW(parse_calibration("{\"geometry\": "), SchemaError); }

TEST(Calibration, InvariantViolations) {
  auto expect_invalid = [](const std::function<void(json&)>& edit) {
    json doc = minimal();
    edit(doc);
    EXPECT_THROW(calibration_from_json(doc), ValidationError) << doc.dump();
  };
  expect_invalid([](json& d) { d["q_start"] = 2; });
  expect_invalid([](json& d) { d["q_stop"] = 0; });
  expect_invalid([](json& d) { d["wavelength"] = 0; });
  expect_invalid([](json& d) { d["oversampling"] = 0; });
  expect_invalid([](json& d) { d["pixels_per_radial_element"] = -1; });
  expect_invalid([](json& d) { d["threads"] = 0; });
  expect_invalid([](json& d) { d["geometry"]["image_size"] = {0, 4}; });
  expect_invalid([](json& d) { d["geometry"]["pixel_size"] = {100, 0}; });
  expect_invalid([](json& d) { d["geometry"]["detector_distance"] = -5; });
  expect_invalid([](json& d) { d["geometry"]["tilt"]["tilt_angle"] = 90; });
  expect_invalid([](json& d) {
    d["slices"] = json::array({{{"direction", "x"}, {"plane", "InPlane"}, {"position", 1}, {"margin", 0},
                                {"mask_reference", 0}}});
  });
}

TEST(Calibration, SliceMaskReferenceMustIndexAMask) {
  json doc = minimal();
  doc["masks"] = json::array({{{"path_to_file", "m.pgm"}}});
  doc["slices"] = json::array(
      {{{"direction", "y"}, {"plane", "Vertical"}, {"position", 2}, {"margin", 1}, {"mask_reference", 0}}});
  EXPECT_NO_THROW(calibration_from_json(doc));
  doc["slices"][0]["mask_reference"] = 1;
  EXPECT_THROW(calibration_from_json(doc), ValidationError);
}

TEST(Calibration, FileLoadResolvesRelativePaths) {
  fixtures::TempDir dir("calib");
  json doc = minimal();
  doc["directory"] = "images";
  doc["masks"] = json::array({{{"path_to_file", "m.pgm"}}});
  fixtures::write_file(dir / "cal.json", doc.dump());
  const Calibration cal = load_calibration_file(dir / "cal.json");
  EXPECT_EQ(std::filesystem::path(cal.directory[0]), dir.path() / "images");
  EXPECT_EQ(std::filesystem::path(cal.masks[0].path), dir.path() / "m.pgm");
}
