#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>

#include "fixtures.hpp"
#include "radpipe/chi.hpp"
#include "radpipe/net/config.hpp"

using namespace radpipe;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(RADPIPE_CLI) + " -q " + args + " 2>&1";
  CliRun r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path write_calibration(const fs::path& dir, const fs::path& images) {
  fixtures::write_file(dir / "cal.json", serialize_calibration(fixtures::small_calibration(24, 20, images, 2)));
  return dir / "cal.json";
}

}  // namespace

TEST(Cli, EmptyDirectoryIsNotAnError) {
  fixtures::TempDir dir("cli");
  fs::create_directories(dir / "in");
  const CliRun r = run("local --calibration " + q(write_calibration(dir.path(), dir / "in")) + " --out " + q(dir / "out"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("0 frames"), std::string::npos) << r.out;
}

TEST(Cli, LocalModeWritesOneProfilePerFrame) {
  fixtures::TempDir dir("cli");
  for (int k = 0; k < 10; ++k) fixtures::write_frame(dir / "in" / ("s_" + std::to_string(k) + ".tif"), 24, 20, k, 1.7e9 + k);
  const CliRun r = run("local --calibration " + q(write_calibration(dir.path(), dir / "in")) + " --out " + q(dir / "out"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("10 frames"), std::string::npos) << r.out;
  EXPECT_EQ(fixtures::snapshot(dir / "out", ".chi").size(), 10u);
  const std::string csv = fixtures::read_file(dir / "out" / "summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 11);
}

TEST(Cli, CorruptFrameGivesExitOne) {
  fixtures::TempDir dir("cli");
  for (int k = 0; k < 10; ++k) fixtures::write_frame(dir / "in" / ("s_" + std::to_string(k) + ".tif"), 24, 20, k, 1.7e9 + k);
  fixtures::write_file(dir / "in" / "s_4.tif", "broken");
  const CliRun r = run("local --calibration " + q(write_calibration(dir.path(), dir / "in")) + " --out " + q(dir / "out"));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_EQ(fixtures::snapshot(dir / "out", ".chi").size(), 9u);
  EXPECT_NE(r.out.find("s_4.tif"), std::string::npos);
}

TEST(Cli, DirOverrideAndThreads) {
  fixtures::TempDir dir("cli");
  for (int k = 0; k < 3; ++k) fixtures::write_frame(dir / "other" / ("s_" + std::to_string(k) + ".tif"), 24, 20, k, 1.7e9);
  fs::create_directories(dir / "in");
  const CliRun r = run("local --calibration " + q(write_calibration(dir.path(), dir / "in")) + " --dir " + q(dir / "other") +
                    " --threads 3 --out " + q(dir / "out"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(fixtures::snapshot(dir / "out", ".chi").size(), 3u);
}

TEST(Cli, UsageErrorsGiveExitTwo) {
  fixtures::TempDir dir("cli");
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("local").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("local --calibration " + q(dir / "missing.json")).code, 2);
  fixtures::write_file(dir / "bad.json", R"({"geometry": {}})");
  const CliRun bad = run("local --calibration " + q(dir / "bad.json"));
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.out.find("/geometry"), std::string::npos) << bad.out;
}

TEST(Cli, NetconfWritesTheDotfile) {
  fixtures::TempDir dir("cli");
  const fs::path conf = dir / ".radpipe-network";
  const CliRun r = run("netconf --config " + q(conf) + " --secret abc --server 10.1.1.1:7000 --results-port 7001");
  EXPECT_EQ(r.code, 0) << r.out;
  const net::NetworkConfig c = net::load_network_config(conf);
  EXPECT_EQ(c.secret, "abc");
  EXPECT_EQ(c.server, (net::Endpoint{"10.1.1.1", 7000}));
  EXPECT_EQ(c.results_port, 7001);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run("--help").code, 0); }
