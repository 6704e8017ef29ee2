#pragma once

// Run configuration: a flat `key = value` file, `#` comments, later settings
// override earlier ones. Command-line flags are applied as the same keys.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dpsnn/engine.hpp"

namespace dpsnn {

enum class Backend { inproc, tcp };

struct RunConfig {
  EngineConfig engine;
  std::uint32_t procs = 1;
  std::uint32_t contexts = 0;  // threads; 0 means one per process
  Backend backend = Backend::inproc;
  std::string roster;  // tcp only; empty means loopback ports chosen at startup
  int rank = -1;       // tcp only; >= 0 runs just this rank in this OS process
  double warmup_seconds = 1.0;
  double measure_seconds = 2.0;
  std::string out_dir;
  double timeout_seconds = 120.0;

  std::uint32_t effective_contexts() const { return contexts == 0 ? procs : contexts; }
  std::int64_t warmup_steps() const;
  std::int64_t measure_steps() const;
  /// Everything that can be checked before allocating a network.
  void validate() const;
};

/// Throws ConfigError for unknown keys or malformed values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
void load_config(RunConfig& cfg, std::istream& in);
void load_config_file(RunConfig& cfg, const std::string& path);
/// Every key with its resolved value; load_config reads it back unchanged.
void write_config(std::ostream& out, const RunConfig& cfg);

/// Shortest text that parses back to the same double.
std::string format_double(double v);
std::vector<std::uint32_t> parse_uint_list(std::string_view text);

}  // namespace dpsnn
