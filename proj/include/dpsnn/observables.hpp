#pragma once

// Spike and membrane-potential recording, per-block wall-clock profiling,
// firing-rate and scaling metrics, and the output file formats.

#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "dpsnn/network.hpp"

namespace dpsnn {

struct SpikeRecord {
  std::int64_t step = 0;
  Gid gid = 0;
  auto operator<=>(const SpikeRecord&) const = default;
};

struct PotentialSample {
  std::int64_t step = 0;
  Gid gid = 0;
  double v = 0.0;
  bool operator==(const PotentialSample&) const = default;
};

/// The functional blocks of one simulation iteration.
enum class Block : std::size_t {
  ltp_and_post_spike,
  barrier,
  spikes_dim,
  spikes_payload,
  intra_multicast,
  currents_and_ltd,
  thalamic,
  neural_dynamic,
  stats,
  plasticity,
};
inline constexpr std::size_t kBlockCount = 10;

inline constexpr std::array<std::string_view, kBlockCount> kBlockNames = {
    "ltp_and_post_spike", "barrier",          "spikes_dim", "spikes_payload", "intra_multicast",
    "currents_and_ltd",   "thalamic",         "neural_dynamic", "stats",      "plasticity"};

class BlockTimer {
 public:
  using Clock = std::chrono::steady_clock;

  void add(Block b, double seconds) { seconds_[static_cast<std::size_t>(b)] += seconds; }
  /// Wall time of the enclosing loop phases, attributed or not.
  void add_total(double seconds) { total_ += seconds; }

  double seconds(Block b) const { return seconds_[static_cast<std::size_t>(b)]; }
  double total() const { return total_; }
  double attributed() const;
  const std::array<double, kBlockCount>& all() const { return seconds_; }

  void reset();
  void set(const std::array<double, kBlockCount>& blocks, double total) {
    seconds_ = blocks;
    total_ = total;
  }

 private:
  std::array<double, kBlockCount> seconds_{};
  double total_ = 0.0;
};

class ScopedBlock {
 public:
  ScopedBlock(BlockTimer& timer, Block block) : timer_(timer), block_(block), start_(BlockTimer::Clock::now()) {}
  ~ScopedBlock() {
    timer_.add(block_, std::chrono::duration<double>(BlockTimer::Clock::now() - start_).count());
  }
  ScopedBlock(const ScopedBlock&) = delete;
  ScopedBlock& operator=(const ScopedBlock&) = delete;

 private:
  BlockTimer& timer_;
  Block block_;
  BlockTimer::Clock::time_point start_;
};

/// Per-process spike and potential buffers.
class Recorder {
 public:
  void trace(std::span<const Gid> gids) { traced_.insert(gids.begin(), gids.end()); }
  bool traced(Gid gid) const { return traced_.contains(gid); }
  bool tracing() const { return !traced_.empty(); }

  void record_spike(std::int64_t step, Gid gid) { spikes_.push_back({step, gid}); }
  void record_potential(std::int64_t step, Gid gid, double v) { potentials_.push_back({step, gid, v}); }

  const std::vector<SpikeRecord>& spikes() const { return spikes_; }
  const std::vector<PotentialSample>& potentials() const { return potentials_; }

 private:
  std::unordered_set<Gid> traced_;
  std::vector<SpikeRecord> spikes_;
  std::vector<PotentialSample> potentials_;
};

/// Formats step * dt in ms: integral values without a decimal point.
std::string format_time_ms(std::int64_t step, std::uint32_t steps_per_ms);

inline constexpr std::string_view kRastergramHeader = "# dpsnn rastergram v1";

/// Header line, then `time_ms<TAB>gid` per spike. Input must be (time, gid) sorted.
void write_rastergram(std::ostream& os, std::span<const SpikeRecord> spikes, std::uint32_t steps_per_ms);
void write_potentials(std::ostream& os, std::span<const PotentialSample> samples, std::uint32_t steps_per_ms);

double mean_firing_rate(std::uint64_t spike_count, std::uint64_t neuron_count, double simulated_seconds);

/// execution time / (firing rate * synapses * simulated seconds)
double normalized_execution_time(double exec_seconds, double firing_rate_hz, double synapses,
                                 double simulated_seconds);

struct RunMetrics {
  double mean_firing_rate_hz = 0.0;
  double simulated_seconds = 0.0;
  double exec_seconds = 0.0;
  double exec_per_simulated_second = 0.0;
  double normalized_execution_time = 0.0;
  std::uint64_t total_synapses = 0;
  std::uint64_t total_neurons = 0;
  std::vector<std::uint64_t> per_process_spikes;
};

struct ProfileRow {
  std::string block;
  double mean_percent = 0.0;
  double stddev_percent = 0.0;
};

/// Share of each block in the total loop time, averaged over processes.
/// A final `unattributed` row carries loop time spent outside every block.
std::vector<ProfileRow> profile_report(std::span<const BlockTimer> timers);
void write_profile_csv(std::ostream& os, std::span<const ProfileRow> rows);

struct ScalingRun {
  std::string axis;  // "strong" or "weak"
  std::uint32_t cfx = 1;
  std::uint32_t cfy = 1;
  std::uint32_t processes = 1;
  std::uint32_t contexts = 1;
  double simulated_seconds = 0.0;
  double exec_seconds = 0.0;
  double firing_rate_hz = 0.0;
  double total_synapses = 0.0;
  std::string status = "ok";
};

struct ScalingRow {
  ScalingRun run;
  double exec_per_simulated_second = 0.0;
  double normalized_total = 0.0;     // per synapse
  double normalized_per_core = 0.0;  // per synapse assigned to a core
  double speedup = 0.0;              // against the fewest-contexts run of the same grid
};

std::vector<ScalingRow> scaling_table(std::span<const ScalingRun> runs);
void write_scaling_csv(std::ostream& os, std::span<const ScalingRow> rows);

/// Histogram of weights over [lo, hi] in `bins` equal bins.
std::vector<std::uint64_t> weight_histogram(std::span<const float> weights, double lo, double hi,
                                            std::size_t bins);

}  // namespace dpsnn
