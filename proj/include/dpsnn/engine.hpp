#pragma once

// One simulation process: a cluster of loc_n neurons, all synapses that
// target them, the delay ring and the per-step iteration.
//
// The iteration is split into phases that each end right after posting a
// transport round, so a driver can interleave several processes on a single
// thread: run phase k for all of them, then phase k + 1.
//
//   step_begin          plasticity epoch, LTP for last step's spikes, post barrier
//   step_send_counts    collect barrier, pack last step's spikes, post counters
//   step_send_payloads  collect counters, post spike payloads
//   step_finish         collect payloads, enqueue, multicast, currents,
//                       thalamic input, neuron update, LTD, stats
//
// Construction follows the same pattern with three phases.

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dpsnn/model.hpp"
#include "dpsnn/network.hpp"
#include "dpsnn/observables.hpp"
#include "dpsnn/transport.hpp"
#include "dpsnn/wire.hpp"

namespace dpsnn {

struct EngineConfig {
  GridConfig grid;
  StimulusConfig stimulus;
  StdpConfig stdp;
  IzhikevichParams excitatory = IzhikevichParams::regular_spiking();
  IzhikevichParams inhibitory = IzhikevichParams::fast_spiking();
  StepConfig step;
  bool barrier_enabled = true;
  std::vector<Gid> trace_gids;
  std::size_t weight_histogram_bins = 20;

  /// 1/dt; dt must divide 1 ms exactly.
  std::uint32_t steps_per_ms() const;
  void validate() const;
};

/// Fails with the process and time step where it happened.
class EngineError : public std::runtime_error {
 public:
  EngineError(int rank, std::int64_t step, const std::string& what);
  int rank() const { return rank_; }
  std::int64_t step() const { return step_; }

 private:
  int rank_;
  std::int64_t step_;
};

/// Incoming synapses of one process, stably sorted by (source, delay) so that
/// a (source, delay) group is a contiguous range.
class SynapseStore {
 public:
  struct Group {
    Gid source = 0;
    std::uint32_t delay = 0;  // ms
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  SynapseStore() = default;
  SynapseStore(std::vector<SynapseRecord> synapses, Gid first_local, std::uint32_t loc_n);

  std::span<const SynapseRecord> synapses() const { return synapses_; }
  std::span<SynapseRecord> synapses() { return synapses_; }
  std::span<const Group> groups() const { return groups_; }

  /// Groups of one source axon, ascending delay. Empty if none.
  std::span<const std::uint32_t> groups_of(Gid source) const;
  /// Indices of the synapses onto one local neuron.
  std::span<const std::uint32_t> incoming(std::uint32_t local) const;

 private:
  std::vector<SynapseRecord> synapses_;
  std::vector<Group> groups_;
  std::vector<std::uint32_t> group_index_;
  std::unordered_map<Gid, std::pair<std::uint32_t, std::uint32_t>> by_source_;
  std::vector<std::uint32_t> incoming_offsets_;
  std::vector<std::uint32_t> incoming_;
};

/// Ring of `slots` time steps; each slot holds the synapse groups whose
/// spikes take effect at that step.
class SpikeQueue {
 public:
  explicit SpikeQueue(std::size_t slots = 1) : slots_(slots) {}

  std::size_t size() const { return slots_.size(); }
  /// due - now must be in [0, size()).
  void schedule(std::int64_t now, std::int64_t due, std::uint32_t group);
  /// Takes the slot of `now`, sorted ascending.
  std::vector<std::uint32_t> take(std::int64_t now);
  std::size_t pending() const;

 private:
  std::vector<std::vector<std::uint32_t>> slots_;
};

/// For each local source neuron, the sorted list of processes holding at
/// least one of its synapses.
class TargetProcessIndex {
 public:
  TargetProcessIndex() = default;
  explicit TargetProcessIndex(std::uint32_t loc_n) : targets_(loc_n) {}

  void add(std::uint32_t local, std::uint32_t process);
  std::span<const std::uint32_t> targets(std::uint32_t local) const { return targets_.at(local); }
  std::uint32_t loc_n() const { return static_cast<std::uint32_t>(targets_.size()); }

 private:
  std::vector<std::vector<std::uint32_t>> targets_;
};

using SpikePackets = std::map<std::uint32_t, std::vector<AxonalSpike>>;

/// Groups spiking local neurons per target process. `spiking_locals` must be
/// ascending; packets come out gid-sorted.
SpikePackets pack_spikes(std::span<const std::uint32_t> spiking_locals, Gid first_gid,
                         std::uint32_t emission_step, const TargetProcessIndex& index);

/// Applies and clears every synapse's accumulated STDP delta.
void run_plasticity_epoch(std::span<SynapseRecord> synapses, const StdpConfig& cfg);

class Process {
 public:
  /// `generator` defaults to generate_forward_synapses over cfg.grid.
  Process(const EngineConfig& cfg, Transport& transport, SynapseGenerator generator = {});

  // construction
  void construct_begin();
  void construct_exchange();
  void construct_finish();
  /// All three phases back to back.
  void construct();

  // one time step
  void step_begin();
  void step_send_counts();
  void step_send_payloads();
  void step_finish();
  /// All four phases back to back.
  void step();

  void begin_measurement();
  void end_measurement();

  /// Next neuron update fires `gid` regardless of its input.
  void force_spike(Gid gid);

  int rank() const { return transport_.rank(); }
  std::int64_t clock() const { return clock_; }
  const ProcessMap& map() const { return map_; }
  Gid first_gid() const { return first_gid_; }
  std::uint32_t loc_n() const { return map_.loc_n(); }

  const NeuronState& neuron(std::uint32_t local) const { return neurons_.at(local); }
  /// Input current used by the most recent neuron update.
  double last_input(std::uint32_t local) const { return last_input_.at(local); }
  const SynapseStore& store() const { return store_; }
  const TargetProcessIndex& target_index() const { return target_index_; }
  std::span<const int> target_processes() const { return target_procs_; }
  std::span<const int> source_processes() const { return source_procs_; }
  const Counts& construction_outgoing() const { return construction_out_; }
  const Counts& construction_incoming() const { return construction_in_; }

  const Recorder& recorder() const { return recorder_; }
  const BlockTimer& timer() const { return timer_; }
  std::uint64_t measured_spikes() const { return measured_spikes_; }
  double measured_wall_seconds() const { return measured_wall_; }

  ProcessReport report() const;

 private:
  template <class F>
  void guarded(F&& f);
  void apply_ltp(std::int64_t post_step, std::uint32_t local);
  void enqueue(const AxonalSpike& spike);

  EngineConfig cfg_;
  Transport& transport_;
  SynapseGenerator generator_;
  ProcessMap map_;
  Gid first_gid_;
  std::uint32_t steps_per_ms_;

  std::vector<NeuronState> neurons_;
  std::vector<std::int32_t> last_spike_step_;
  std::vector<double> pending_;
  std::vector<double> last_input_;
  std::vector<std::uint8_t> forced_;

  SynapseStore store_;
  SpikeQueue queue_;
  TargetProcessIndex target_index_;
  std::vector<int> target_procs_;
  std::vector<int> source_procs_;
  Counts construction_out_;
  Counts construction_in_;
  std::vector<std::vector<SynapseRecord>> outgoing_buckets_;
  bool constructed_ = false;

  std::vector<double> ltp_table_;
  std::vector<double> ltd_table_;

  std::int64_t clock_ = 0;
  std::vector<std::uint32_t> spiked_prev_;  // ascending locals
  std::vector<std::uint32_t> spiked_now_;
  Counts step_counts_;
  Counts step_incoming_;
  SpikePackets step_packets_;
  std::vector<std::uint32_t> arrivals_;  // synapse indices in injection order

  Recorder recorder_;
  BlockTimer timer_;
  bool measuring_ = false;
  std::uint64_t measured_spikes_ = 0;
  BlockTimer::Clock::time_point measure_start_{};
  double measured_wall_ = 0.0;
};

}  // namespace dpsnn
