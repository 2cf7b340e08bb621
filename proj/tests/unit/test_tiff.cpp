#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "fixtures.hpp"
#include "radpipe/errors.hpp"
#include "radpipe/frame.hpp"
#include "radpipe/tiff.hpp"

using namespace radpipe;

namespace {

// Big-endian TIFF, 16-bit unsigned, split into one strip per row, assembled by hand.
std::string big_endian_u16(int rows, int cols, const std::vector<std::uint16_t>& px, const std::string& datetime) {
  std::string out;
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  };
  auto u32 = [&](std::uint32_t v) {
    for (int k = 3; k >= 0; --k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  };
  out = "MM";
  u16(42);
  u32(8);
  const int n_entries = 8;
  const std::uint32_t ifd_size = 2 + 12 * n_entries + 4;
  const std::uint32_t offsets_at = 8 + ifd_size;
  const std::uint32_t counts_at = offsets_at + 4 * rows;
  const std::uint32_t dt_at = counts_at + 4 * rows;
  const std::uint32_t data_at = dt_at + static_cast<std::uint32_t>(datetime.size() + 1);
  u16(n_entries);
  auto entry = [&](std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::uint32_t value) {
    u16(tag);
    u16(type);
    u32(count);
    if (type == 3 && count == 1) {
      u16(static_cast<std::uint16_t>(value));
      u16(0);
    } else {
      u32(value);
    }
  };
  entry(256, 4, 1, static_cast<std::uint32_t>(cols));
  entry(257, 4, 1, static_cast<std::uint32_t>(rows));
  entry(258, 3, 1, 16);
  entry(259, 3, 1, 1);
  entry(273, 4, static_cast<std::uint32_t>(rows), offsets_at);
  entry(277, 3, 1, 1);
  entry(279, 4, static_cast<std::uint32_t>(rows), counts_at);
  entry(306, 2, static_cast<std::uint32_t>(datetime.size() + 1), dt_at);
  u32(0);
  for (int r = 0; r < rows; ++r) u32(data_at + static_cast<std::uint32_t>(2 * cols * r));
  for (int r = 0; r < rows; ++r) u32(static_cast<std::uint32_t>(2 * cols));
  out += datetime;
  out.push_back('\0');
  for (auto v : px) u16(v);
  return out;
}

}  // namespace

TEST(Tiff, DecodesHandBuiltBigEndianStrips) {
  std::vector<std::uint16_t> px;
  for (int k = 0; k < 12; ++k) px.push_back(static_cast<std::uint16_t>(1000 * k + 7));
  const tiff::Image img = tiff::decode(big_endian_u16(3, 4, px, "2024:01:31 12:00:00"));
  ASSERT_EQ(img.rows, 3);
  ASSERT_EQ(img.cols, 4);
  for (int k = 0; k < 12; ++k) EXPECT_EQ(img.pixels[static_cast<std::size_t>(k)], px[static_cast<std::size_t>(k)]);
  EXPECT_EQ(img.datetime, "2024:01:31 12:00:00");
}

TEST(Tiff, EncodeDecodeEverySampleType) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(0, 200);
  tiff::Image img;
  img.rows = 5;
  img.cols = 9;
  for (int k = 0; k < 45; ++k) img.pixels.push_back(u(rng));
  for (auto type : {tiff::SampleType::UInt8, tiff::SampleType::UInt16, tiff::SampleType::UInt32, tiff::SampleType::Int16,
                    tiff::SampleType::Int32, tiff::SampleType::Float32, tiff::SampleType::Float64}) {
    const tiff::Image back = tiff::decode(tiff::encode(img, {type, "desc", "2020:02:02 02:02:02"}));
    EXPECT_EQ(back.rows, 5);
    EXPECT_EQ(back.cols, 9);
    EXPECT_EQ(back.pixels, img.pixels);
    EXPECT_EQ(back.description, "desc");
    EXPECT_EQ(back.datetime, "2020:02:02 02:02:02");
  }
}

TEST(Tiff, NegativeCountsSurviveSignedTypes) {
  tiff::Image img{1, 3, {-2.0, -1.0, 5.0}, "", ""};
  EXPECT_EQ(tiff::decode(tiff::encode(img, {tiff::SampleType::Int32, "", ""})).pixels, img.pixels);
}

TEST(Tiff, GarbageIsAFormatError) {
  EXPECT_THROW(tiff::decode("definitely not a tiff"), FormatError);
  EXPECT_THROW(tiff::decode(""), FormatError);
  tiff::Image img{4, 4, std::vector<double>(16, 1.0), "", ""};
  const std::string good = tiff::encode(img);
  EXPECT_THROW(tiff::decode(good.substr(0, good.size() - 10)), FormatError);
}

TEST(Tiff, UnreadableFileIsAnIoError) { EXPECT_THROW(tiff::read("/nonexistent/frame.tif"), IoError); }

TEST(Timestamp, ParsesBothHeaderStyles) {
  EXPECT_EQ(parse_timestamp("2024-01-31T12:00:00"), 1706702400.0);
  EXPECT_EQ(parse_timestamp("2024:01:31 12:00:00"), 1706702400.0);
  EXPECT_DOUBLE_EQ(*parse_timestamp("# 2024-01-31T12:00:00.250"), 1706702400.25);
  EXPECT_FALSE(parse_timestamp("no time here"));
  EXPECT_FALSE(parse_timestamp("2024-13-01T00:00:00"));
}

TEST(Timestamp, FormatParseRoundTrip) {
  for (double t : {0.0, 1706702400.25, 1.7e9 + 0.123456, 951782400.5}) {
    EXPECT_NEAR(*parse_timestamp(format_timestamp(t)), t, 1e-6) << format_timestamp(t);
  }
  EXPECT_EQ(format_timestamp(1706702400.25), "2024-01-31T12:00:00.250000");
}

TEST(Frame, SaveLoadKeepsPixelsAndHeaderTime) {
  fixtures::TempDir dir("frame");
  Frame f;
  f.dims = {6, 7};
  for (int k = 0; k < 42; ++k) f.pixels.push_back(k * 3);
  f.acquired_at = 1.7e9 + 0.5;
  save_frame(f, dir / "a.tif");
  const Frame g = load_frame(dir / "a.tif");
  EXPECT_EQ(g.dims, f.dims);
  EXPECT_EQ(g.pixels, f.pixels);
  EXPECT_EQ(g.acquired_at, f.acquired_at);
  EXPECT_EQ(g.time_source, TimeSource::Header);
  EXPECT_EQ(g.source_path, (dir / "a.tif").string());
}

TEST(Frame, DateTimeTagIsUsedWhenNoDescription) {
  fixtures::TempDir dir("frame");
  fixtures::write_file(dir / "b.tif", big_endian_u16(1, 2, {1, 2}, "2021:06:01 00:00:01"));
  const Frame f = load_frame(dir / "b.tif");
  EXPECT_EQ(f.time_source, TimeSource::Header);
  EXPECT_EQ(f.acquired_at, 1622505601.0);
}

TEST(Frame, FallsBackToModificationTime) {
  fixtures::TempDir dir("frame");
  tiff::write({2, 2, {1, 2, 3, 4}, "", ""}, dir / "c.tif");
  const auto when = std::chrono::file_clock::from_sys(std::chrono::sys_seconds{std::chrono::seconds{1600000000}});
  std::filesystem::last_write_time(dir / "c.tif", when);
  const Frame f = load_frame(dir / "c.tif");
  EXPECT_EQ(f.time_source, TimeSource::FileTime);
  EXPECT_NEAR(f.acquired_at, 1600000000.0, 1e-6);
  EXPECT_EQ(to_string(f.time_source), "file");
}

TEST(Frame, NonFinitePixelsAreRejected) {
  fixtures::TempDir dir("frame");
  tiff::write({1, 2, {1.0, std::nan("")}, "", ""}, dir / "n.tif", {tiff::SampleType::Float64, "", ""});
  EXPECT_THROW(load_frame(dir / "n.tif"), FormatError);
}
