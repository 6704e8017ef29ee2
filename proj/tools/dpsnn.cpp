// dpsnn: run, verify or sweep the simulator.
//
//   dpsnn run    --grid 1x1 --procs 1 --warmup 1 --measure 2 --out out/
//   dpsnn verify --grid 1x1 --verify 1,2,4,8
//   dpsnn sweep  --grid 4x4 --sweep strong --points 1,2,4 --out out/
//
// Exit status: 0 ok, 1 runtime failure, 2 configuration or usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dpsnn/bench.hpp"

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

const Flag kFlags[] = {
    {"--grid", "grid", "column grid CxR"},
    {"--procs", "procs", "number of simulation processes H"},
    {"--backend", "backend", "inproc or tcp"},
    {"--roster", "roster", "tcp roster file (process_id host:port per line)"},
    {"--rank", "rank", "tcp: run only this process"},
    {"--seed", "seed", "master seed"},
    {"--warmup", "warmup", "warmup seconds (simulated)"},
    {"--measure", "measure", "measured seconds (simulated)"},
    {"--out", "out", "output directory"},
    {"--trace", "trace", "comma-separated gids whose membrane potential is recorded"},
    {"--contexts", "contexts", "threads the processes are multiplexed on"},
    {"--multiplex", "contexts", "same as --contexts"},
    {"--dt", "dt", "time step in ms"},
    {"--timeout", "timeout", "transport timeout in seconds"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed polychronous spiking network simulator with STDP"};
  app.set_help_flag("-h,--help", "print help");

  std::string command = "run";
  app.add_option("command", command, "run | verify | sweep")->check(CLI::IsMember({"run", "verify", "sweep"}));

  std::string config_file;
  app.add_option("--config", config_file, "key = value configuration file");
  std::vector<std::pair<std::string, std::string>> overrides;
  for (std::size_t i = 0; i < std::size(kFlags); ++i) {
    const Flag f = kFlags[i];
    app.add_option_function<std::string>(
        f.name, [&overrides, f](const std::string& v) { overrides.emplace_back(f.key, v); }, f.help);
  }
  app.add_flag_callback("--no-barrier", [&] { overrides.emplace_back("barrier", "false"); },
                        "skip the per-step barrier");
  std::vector<std::string> sets;
  app.add_option("--set", sets, "extra key=value settings")->take_all();
  std::string verify_list, sweep_axis, points = "1,2,4";
  app.add_option("--verify", verify_list, "process counts to compare, e.g. 1,2,4,8");
  app.add_option("--sweep", sweep_axis, "strong or weak")->check(CLI::IsMember({"strong", "weak"}));
  app.add_option("--points", points, "contexts per sweep point, e.g. 1,2,4");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (!verify_list.empty()) command = "verify";
  if (!sweep_axis.empty()) command = "sweep";

  dpsnn::RunConfig cfg;
  try {
    if (!config_file.empty()) dpsnn::load_config_file(cfg, config_file);
    for (const auto& [k, v] : overrides) dpsnn::apply_setting(cfg, k, v);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw dpsnn::ConfigError("--set expects key=value, got '" + s + "'");
      dpsnn::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }

    if (command == "verify") {
      const auto hs = dpsnn::parse_uint_list(verify_list);
      if (hs.size() < 2) throw dpsnn::ConfigError("--verify needs at least two process counts");
      const auto report = dpsnn::verify(cfg, hs);
      dpsnn::print_verify(std::cout, report);
      return report.pass ? 0 : 1;
    }

    if (command == "sweep") {
      if (sweep_axis.empty()) throw dpsnn::ConfigError("sweep needs --sweep strong|weak");
      const auto pts = dpsnn::parse_uint_list(points);
      for (auto n : pts) {
        dpsnn::RunConfig c = cfg;
        c.procs = n;
        c.contexts = n;
        if (sweep_axis == "weak") {
          auto [x, y] = dpsnn::near_square_grid(cfg.engine.grid.cft() * n);
          c.engine.grid.cfx = x;
          c.engine.grid.cfy = y;
        }
        c.validate();
      }
      const auto runs = dpsnn::sweep(cfg, sweep_axis, pts, &std::cerr);
      const auto rows = dpsnn::scaling_table(runs);
      dpsnn::write_scaling_csv(std::cout, rows);
      if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::ofstream f(std::filesystem::path(cfg.out_dir) / "scaling.csv");
        dpsnn::write_scaling_csv(f, rows);
      }
      return 0;
    }

    cfg.validate();
    const auto result = dpsnn::simulate(cfg);
    if (!result.is_root) {
      std::cout << "process " << cfg.rank << " finished\n";
      return 0;
    }
    dpsnn::print_summary(std::cout, cfg, result);
    if (!cfg.out_dir.empty()) dpsnn::write_outputs(cfg.out_dir, cfg, result);
    return 0;
  } catch (const dpsnn::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
