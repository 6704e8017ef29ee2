#pragma once

// Run orchestration: spawn the processes of one configuration over a backend,
// construct, warm up, measure, gather everything at process 0, and write the
// output files. Also the determinism check and the scaling sweeps.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpsnn/config.hpp"
#include "dpsnn/engine.hpp"
#include "dpsnn/observables.hpp"

namespace dpsnn {

struct SimulationOptions {
  /// Sees every frame sent by any local endpoint.
  TrafficTap tap;
  /// Replaces the grid generator.
  SynapseGenerator generator;
  /// Called on each local process after construction, from its own thread.
  std::function<void(Process&)> after_construction;
  /// Called on each local process before each of its steps, from its own thread.
  std::function<void(Process&)> before_step;
};

struct SimulationResult {
  bool is_root = true;  // false on a tcp rank other than 0; nothing below is filled
  std::uint32_t steps_per_ms = 1;
  std::vector<SpikeRecord> spikes;  // whole run, (step, gid) sorted
  std::vector<PotentialSample> potentials;
  std::vector<BlockTimer> timers;   // measured window, per process
  std::vector<Counts> construction_outgoing;  // per process
  std::vector<Counts> construction_incoming;
  std::vector<std::uint64_t> weight_histogram;  // excitatory weights at the end
  RunMetrics metrics;
  double construction_seconds = 0.0;
};

SimulationResult simulate(const RunConfig& cfg, const SimulationOptions& opts = {});

std::string rastergram_text(const SimulationResult& r);
void write_outputs(const std::string& dir, const RunConfig& cfg, const SimulationResult& r);
void print_summary(std::ostream& os, const RunConfig& cfg, const SimulationResult& r);

/// First record present in one list but not at the same position in the other.
std::optional<SpikeRecord> first_divergence(std::span<const SpikeRecord> a, std::span<const SpikeRecord> b);

struct VerifyOutcome {
  std::uint32_t procs = 0;
  std::uint64_t spikes = 0;
  bool identical = true;
  std::optional<SpikeRecord> divergence;
};

struct VerifyReport {
  bool pass = true;
  std::vector<VerifyOutcome> runs;
};

/// Runs `base` once per process count and byte-compares the rastergrams with
/// the first run. Needs at least two process counts.
VerifyReport verify(const RunConfig& base, std::span<const std::uint32_t> process_counts);
void print_verify(std::ostream& os, const VerifyReport& r);

/// strong: base grid, H = contexts = each point.
/// weak: base grid is the per-context share; point n uses n times as many
/// columns, laid out as close to square as possible, with H = contexts = n.
/// A failing point is recorded with its error and the sweep goes on.
std::vector<ScalingRun> sweep(const RunConfig& base, const std::string& axis,
                              std::span<const std::uint32_t> points, std::ostream* log = nullptr);

/// Grid of `columns` columns with cfy the largest divisor not above sqrt.
std::pair<std::uint32_t, std::uint32_t> near_square_grid(std::uint32_t columns);

}  // namespace dpsnn
