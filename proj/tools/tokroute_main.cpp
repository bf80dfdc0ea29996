// tokroute: run one experiment from a JSON config and write CSV reports.
//
//   tokroute equivalence --config cfg.json --out results/
//
// Exit status: 0 success, 1 a check failed, 2 bad config or usage.

#include <fmt/core.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "tokroute/errors.h"
#include "tokroute/experiments.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw tokroute::ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

using Runner = std::function<tokroute::Report(const std::string&, const std::filesystem::path&)>;

int execute(const Runner& run, const std::string& config_path, const std::string& out_dir) {
  try {
    const tokroute::Report report = run(read_text(config_path), out_dir);
    for (const auto& line : report.summary) fmt::print("{}\n", line);
    for (const auto& file : report.files) fmt::print("wrote {}\n", file.string());
    for (const auto& failure : report.failures) fmt::print(stderr, "FAIL: {}\n", failure);
    return report.ok() ? kExitOk : kExitCheckFailed;
  } catch (const tokroute::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const tokroute::TrainingError& e) {
    fmt::print(stderr, "training diverged: {}\n", e.what());
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitCheckFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-token adapter routing experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  Runner runner;

  auto add = [&](const char* name, const char* help, Runner run) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", out_dir, "output directory for CSV files");
    sub->callback([&runner, run] { runner = run; });
  };

  add("equivalence", "per-token vs per-sequence vs reference forward, with work accounting",
      [](const std::string& text, const std::filesystem::path& out) {
        return tokroute::run_equivalence(tokroute::parse_equivalence_config(text), out);
      });
  add("memsim", "hot-set vs paging residency simulation and latency ladder",
      [](const std::string& text, const std::filesystem::path& out) {
        return tokroute::run_memory_sim(tokroute::parse_memsim_config(text), out);
      });
  add("molora", "train the learned router on a synthetic task",
      [](const std::string& text, const std::filesystem::path& out) {
        return tokroute::run_molora(tokroute::parse_molora_config(text), out);
      });
  add("dispatch", "modeled cost of adaptive vs fixed tiles",
      [](const std::string& text, const std::filesystem::path& out) {
        return tokroute::run_dispatch_bench(tokroute::parse_dispatch_config(text), out);
      });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }
  return execute(runner, config_path, out_dir);
}
