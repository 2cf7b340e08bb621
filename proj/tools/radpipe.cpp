// radpipe: serve | feed | gateway | local | netconf | bench
//
// Exit codes: 0 success, 1 runtime failure (e.g. a frame failed), 2 usage error.

#include <CLI11.hpp>
#include <signal.h>
#include <sodium.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "radpipe/bench.hpp"
#include "radpipe/calib.hpp"
#include "radpipe/chi.hpp"
#include "radpipe/errors.hpp"
#include "radpipe/net/config.hpp"
#include "radpipe/net/feeder.hpp"
#include "radpipe/net/gateway.hpp"
#include "radpipe/net/protocol.hpp"
#include "radpipe/net/server.hpp"
#include "radpipe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace radpipe;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

class Progress {
 public:
  Progress() : tty_(::isatty(STDERR_FILENO) != 0) {}

  void update(const QueueStatus& s) {
    const std::size_t done = s.processed + s.failed;
    char line[160];
    std::snprintf(line, sizeof line, "%zu/%zu frames  %zu failed  %.1f fps", done, s.total_enqueued, s.failed,
                  s.rate_fps);
    if (tty_) {
      std::fprintf(stderr, "\r%-70s", line);
      std::fflush(stderr);
    } else if (std::chrono::steady_clock::now() - last_ >= 2s) {
      spdlog::info("{}", line);
      last_ = std::chrono::steady_clock::now();
    }
  }
  void finish() {
    if (tty_) std::fputc('\n', stderr);
  }

 private:
  bool tty_;
  std::chrono::steady_clock::time_point last_{};
};

// Blocks SIGINT/SIGTERM in every thread; the main thread waits for them.
sigset_t block_stop_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

void wait_for_stop_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("received signal {}, shutting down", sig);
}

net::NetworkConfig load_config(const std::string& path) {
  return net::load_network_config(path.empty() ? net::default_network_config_path() : fs::path(path));
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    const int v = std::stoi(item, &used);
    if (used != item.size() || v < 1) throw ValidationError("bad worker count '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("empty worker list");
  return out;
}

std::array<int, 2> parse_size(const std::string& text) {
  const auto x = text.find_first_of("xX");
  if (x == std::string::npos) throw ValidationError("size must look like VxH, got '" + text + "'");
  std::size_t a = 0, b = 0;
  const int v = std::stoi(text.substr(0, x), &a);
  const int h = std::stoi(text.substr(x + 1), &b);
  if (a != x || b != text.size() - x - 1 || v < 1 || h < 1) throw ValidationError("bad size '" + text + "'");
  return {v, h};
}

struct LocalArgs {
  std::string calibration, dir, out, cache;
  int threads = 0;
};

int run_local(const LocalArgs& args) {
  Calibration cal;
  try {
    cal = load_calibration_file(args.calibration);
  } catch (const SchemaError& e) {
    std::cerr << "calibration " << args.calibration << ": " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    std::cerr << "calibration " << args.calibration << ": " << e.what() << "\n";
    return kUsage;
  }
  if (!args.dir.empty()) cal.directory = {fs::absolute(args.dir).string()};
  if (args.threads > 0) cal.threads = args.threads;
  if (cal.directory.empty()) {
    std::cerr << "no image directory: pass --dir or set \"directory\" in the calibration\n";
    return kUsage;
  }
  for (const auto& d : cal.directory) {
    if (!fs::is_directory(d)) {
      std::cerr << "not a directory: " << d << "\n";
      return kUsage;
    }
  }

  QueueOptions qo;
  if (!args.out.empty()) qo.output_root = args.out;
  if (!args.cache.empty()) qo.cache_dir = args.cache;
  ImageQueue queue(cal, qo);
  queue.start();
  std::size_t total = 0;
  for (const auto& d : cal.directory) total += queue.walk_directory(d);

  Progress progress;
  const auto t0 = std::chrono::steady_clock::now();
  while (!queue.wait_idle(200ms)) progress.update(queue.status());
  progress.update(queue.status());
  progress.finish();
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const QueueStatus st = queue.status();
  queue.abort();

  const fs::path summary = queue.output_root() / "summary.csv";
  fs::create_directories(queue.output_root());
  write_text_atomic(summary, history_csv(queue.history().query()));

  for (const auto& f : queue.failures()) std::cerr << "FAILED " << f.path << ": " << f.error << "\n";
  const double fps = wall > 0.0 && total > 0 ? static_cast<double>(st.processed + st.failed) / wall : 0.0;
  std::printf("%zu frames: %zu processed, %zu failed, %.2f fps, output %s\n", total, st.processed, st.failed, fps,
              queue.output_root().string().c_str());
  return st.failed == 0 ? kOk : kFailure;
}

struct ServeArgs {
  std::string config, calibration, out, cache;
  bool open_queries = false;
  bool no_feeder = false;
};

int run_serve(const ServeArgs& args) {
  const net::NetworkConfig config = load_config(args.config);
  net::require_secret(config);
  const sigset_t signals = block_stop_signals();

  net::ServerOptions so;
  so.control = {"*", config.server.port};
  so.results = {"*", config.results_port};
  if (!args.no_feeder) so.feeder = config.feeder;
  so.secret = config.secret;
  so.open_queries = args.open_queries;
  so.cache_dir = args.cache;
  so.output_root = args.out;
  net::Server server(so);
  server.start();
  if (!args.calibration.empty()) {
    const json reply = server.execute(net::make_request(net::command::kSetCalibration,
                                                        to_json(load_calibration_file(args.calibration))));
    if (!reply.value("ok", false)) {
      std::cerr << "calibration rejected: " << reply.value("error", "") << "\n";
      return kFailure;
    }
  }
  wait_for_stop_signal(signals);
  server.stop();
  return kOk;
}

struct FeedArgs {
  std::string config, dir, out;
  int poll_ms = 100;
};

int run_feed(const FeedArgs& args) {
  const net::NetworkConfig config = load_config(args.config);
  const sigset_t signals = block_stop_signals();
  net::Publisher publisher({"*", config.feeder.port});
  net::FeederOptions fo;
  fo.source_dir = args.dir;
  fo.storage_dir = args.out;
  fo.poll_interval = std::chrono::milliseconds(args.poll_ms);
  net::Feeder feeder(fo, [&](const std::string& wire) {
    publisher.publish(wire);
    spdlog::info("published {}", wire);
  });
  spdlog::info("feeder watching {} -> {}, publishing on port {}", args.dir, args.out, publisher.port());
  int status = kOk;
  std::jthread watcher([&](std::stop_token stop) {
    try {
      feeder.run(stop);
    } catch (const std::exception& e) {
      spdlog::error("watch failed: {}", e.what());
      status = kFailure;
      kill(getpid(), SIGTERM);
    }
  });
  wait_for_stop_signal(signals);
  watcher.request_stop();
  watcher.join();
  return status;
}

struct GatewayArgs {
  std::string config, static_dir;
};

int run_gateway(const GatewayArgs& args) {
  const net::NetworkConfig config = load_config(args.config);
  net::require_secret(config);
  const sigset_t signals = block_stop_signals();
  net::GatewayOptions go;
  go.listen = config.gateway;
  go.server = config.server;
  go.results = config.results();
  go.secret = config.secret;
  go.static_dir = args.static_dir;
  net::Gateway gateway(go);
  gateway.start();
  wait_for_stop_signal(signals);
  gateway.stop();
  return kOk;
}

struct NetconfArgs {
  std::string config, secret, feeder, server, gateway;
  int results_port = -1;
  bool generate_secret = false;
  bool show = false;
};

int run_netconf(const NetconfArgs& args) {
  const fs::path path = args.config.empty() ? net::default_network_config_path() : fs::path(args.config);
  net::NetworkConfig config = net::load_network_config(path);
  bool changed = false;
  if (!args.feeder.empty()) config.feeder = net::parse_endpoint(args.feeder), changed = true;
  if (!args.server.empty()) config.server = net::parse_endpoint(args.server), changed = true;
  if (!args.gateway.empty()) config.gateway = net::parse_endpoint(args.gateway), changed = true;
  if (args.results_port >= 0) config.results_port = static_cast<std::uint16_t>(args.results_port), changed = true;
  if (!args.secret.empty()) config.secret = args.secret, changed = true;
  if (args.generate_secret) {
    if (sodium_init() < 0) throw Error("libsodium initialization failed");
    unsigned char raw[24];
    randombytes_buf(raw, sizeof raw);
    char hex[49];
    sodium_bin2hex(hex, sizeof hex, raw, sizeof raw);
    config.secret = hex;
    changed = true;
  }
  if (changed || !fs::exists(path)) {
    net::save_network_config(config, path);
    std::printf("wrote %s\n", path.string().c_str());
  }
  if (args.show || !changed) {
    json shown = net::to_json(config);
    if (!config.secret.empty()) shown["secret"] = "<set>";
    std::printf("%s\n", shown.dump(2).c_str());
  }
  return kOk;
}

struct BenchArgs {
  std::size_t frames = 100;
  std::string size = "1024x1024";
  std::string threads = "1,4";
  int repeats = 3;
  int oversampling = 2;
  std::string report, work;
  bool keep = false;
};

int run_bench_cmd(const BenchArgs& args) {
  BenchOptions bo;
  try {
    bo.threads = parse_int_list(args.threads);
    const auto size = parse_size(args.size);
    bo.rows = size[0];
    bo.cols = size[1];
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
  bo.frames = args.frames;
  bo.repeats = args.repeats;
  bo.oversampling = args.oversampling;
  bo.work_dir = args.work;
  bo.keep_files = args.keep;
  bo.progress = [](const std::string& m) { spdlog::info("bench: {}", m); };
  const BenchReport report = run_bench(bo);
  const std::string text = report.to_json().dump(2) + "\n";
  if (args.report.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text_atomic(args.report, text);
    spdlog::info("report written to {}", args.report);
  }
  bool failed = !report.deterministic;
  for (const auto& r : report.runs) failed = failed || r.failed > 0;
  return failed ? kFailure : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Azimuthal integration pipeline for 2D detector images"};
  app.require_subcommand(1);
  int verbosity = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbosity, "More log output (repeatable)");
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  LocalArgs local;
  auto* cmd_local = app.add_subcommand("local", "Walk a directory and integrate every image on this machine");
  cmd_local->add_option("--calibration", local.calibration, "Calibration JSON file")->required();
  cmd_local->add_option("--dir", local.dir, "Image directory (default: the calibration's directory)");
  cmd_local->add_option("--threads", local.threads, "Worker count (default: the calibration's threads)")
      ->check(CLI::PositiveNumber);
  cmd_local->add_option("--out", local.out, "Output root (default: <dir>/processed)");
  cmd_local->add_option("--cache", local.cache, "Weighting matrix cache directory");

  ServeArgs serve;
  auto* cmd_serve = app.add_subcommand("serve", "Run the integration server");
  cmd_serve->add_option("--config", serve.config, "Network dotfile (default: ~/.radpipe-network)");
  cmd_serve->add_option("--calibration", serve.calibration, "Calibration to load at startup")->check(CLI::ExistingFile);
  cmd_serve->add_option("--out", serve.out, "Output root override");
  cmd_serve->add_option("--cache", serve.cache, "Weighting matrix cache directory");
  cmd_serve->add_flag("--open-queries", serve.open_queries, "Answer query_* commands without authentication");
  cmd_serve->add_flag("--no-feeder", serve.no_feeder, "Do not subscribe to the feeder");

  FeedArgs feed;
  auto* cmd_feed = app.add_subcommand("feed", "Copy new images to storage and publish \"new file\" events");
  cmd_feed->add_option("--config", feed.config, "Network dotfile (default: ~/.radpipe-network)");
  cmd_feed->add_option("--dir", feed.dir, "Acquisition directory to watch")->required()->check(CLI::ExistingDirectory);
  cmd_feed->add_option("--out", feed.out, "Storage directory")->required();
  cmd_feed->add_option("--poll-ms", feed.poll_ms, "Scan interval in milliseconds")->check(CLI::PositiveNumber);

  GatewayArgs gw;
  auto* cmd_gateway = app.add_subcommand("gateway", "Bridge the control protocol to HTTP for the web console");
  cmd_gateway->add_option("--config", gw.config, "Network dotfile (default: ~/.radpipe-network)");
  cmd_gateway->add_option("--static", gw.static_dir, "Directory with the web console build")
      ->check(CLI::ExistingDirectory);

  NetconfArgs nc;
  auto* cmd_netconf = app.add_subcommand("netconf", "Show or edit the network dotfile");
  cmd_netconf->add_option("--config", nc.config, "Network dotfile (default: ~/.radpipe-network)");
  cmd_netconf->add_option("--secret", nc.secret, "Shared secret");
  cmd_netconf->add_flag("--generate-secret", nc.generate_secret, "Store a fresh random secret");
  cmd_netconf->add_option("--feeder", nc.feeder, "Feeder event endpoint host:port");
  cmd_netconf->add_option("--server", nc.server, "Server control endpoint host:port");
  cmd_netconf->add_option("--results-port", nc.results_port, "Server results stream port")->check(CLI::Range(0, 65535));
  cmd_netconf->add_option("--gateway", nc.gateway, "Gateway endpoint host:port");
  cmd_netconf->add_flag("--show", nc.show, "Print the resulting configuration");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "Throughput benchmark on synthetic frames");
  cmd_bench->add_option("--frames", bench.frames, "Frames per run")->check(CLI::PositiveNumber);
  cmd_bench->add_option("--size", bench.size, "Frame size VxH");
  cmd_bench->add_option("--threads", bench.threads, "Comma-separated worker counts");
  cmd_bench->add_option("--repeats", bench.repeats, "Repeats per worker count")->check(CLI::PositiveNumber);
  cmd_bench->add_option("--oversampling", bench.oversampling, "Subpixel factor")->check(CLI::PositiveNumber);
  cmd_bench->add_option("--report", bench.report, "Write the JSON report here instead of stdout");
  cmd_bench->add_option("--work", bench.work, "Scratch directory for frames and outputs");
  cmd_bench->add_flag("--keep", bench.keep, "Keep generated frames and outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  auto logger = spdlog::stderr_color_mt("radpipe");
  spdlog::set_default_logger(logger);
  spdlog::set_level(quiet ? spdlog::level::warn : verbosity > 0 ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*cmd_local) return run_local(local);
    if (*cmd_serve) return run_serve(serve);
    if (*cmd_feed) return run_feed(feed);
    if (*cmd_gateway) return run_gateway(gw);
    if (*cmd_netconf) return run_netconf(nc);
    if (*cmd_bench) return run_bench_cmd(bench);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
