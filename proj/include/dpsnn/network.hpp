#pragma once

// Distribution-invariant network construction: neuron <-> process mapping,
// the periodic column grid, forward synapse projection and the thalamic
// stimulus. Everything here is a pure function of the grid configuration.

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dpsnn/model.hpp"

namespace dpsnn {

using Gid = std::uint32_t;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ProjectionFractions {
  double same = 0.76;
  double first_each = 0.03;
  double second_each = 0.02;
  double third_each = 0.01;
};

struct InitialWeights {
  double excitatory = 2.0;
  double inhibitory = -2.0;
};

struct GridConfig {
  std::uint32_t cfx = 1;
  std::uint32_t cfy = 1;
  std::uint32_t neurons_per_column = 1000;
  double excitatory_fraction = 0.8;
  std::uint32_t forward_synapses_per_neuron = 200;
  ProjectionFractions projection_fractions;
  std::uint32_t delay_min = 1;   // ms
  std::uint32_t delay_max = 20;  // ms
  std::uint64_t master_seed = 1;
  InitialWeights initial_weights;

  std::uint32_t cft() const { return cfx * cfy; }
  std::uint64_t total_neurons() const { return std::uint64_t{cft()} * neurons_per_column; }
  std::uint64_t total_synapses() const { return total_neurons() * forward_synapses_per_neuron; }
  std::uint32_t excitatory_per_column() const;

  void validate() const;
};

/// Synapses per column in each projection group (own column, each first,
/// second and third neighbour).
struct GroupCounts {
  std::uint32_t same = 0;
  std::uint32_t first_each = 0;
  std::uint32_t second_each = 0;
  std::uint32_t third_each = 0;

  std::uint32_t total() const { return same + 4 * (first_each + second_each + third_each); }
};

GroupCounts group_counts(const GridConfig& grid);

class ProcessMap {
 public:
  /// Validates that every process holds an integral number of neurons and
  /// either whole columns or 1/2, 1/4 or 1/8 of a column.
  ProcessMap(const GridConfig& grid, std::uint32_t process_count);

  std::uint32_t process_count() const { return process_count_; }
  std::uint64_t total_neurons() const { return total_neurons_; }
  std::uint32_t loc_n() const { return loc_n_; }

  std::uint32_t process_of(Gid gid) const { return gid / loc_n_; }
  std::uint32_t local_of(Gid gid) const { return gid % loc_n_; }
  Gid first_gid(std::uint32_t process) const { return process * loc_n_; }

 private:
  std::uint32_t process_count_;
  std::uint64_t total_neurons_;
  std::uint32_t loc_n_;
};

struct ColumnCoord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  bool operator==(const ColumnCoord&) const = default;
};

inline std::uint32_t column_id(const GridConfig& grid, ColumnCoord c) { return c.y * grid.cfx + c.x; }
inline ColumnCoord column_coord(const GridConfig& grid, std::uint32_t col) {
  return {col % grid.cfx, col / grid.cfx};
}

struct NeuronLocus {
  std::uint32_t process = 0;
  std::uint32_t local = 0;
  std::uint32_t column = 0;
  NeuronKind kind = NeuronKind::excitatory;
};

NeuronLocus neuron_locus(Gid gid, const GridConfig& grid, const ProcessMap& map);
NeuronKind neuron_kind(Gid gid, const GridConfig& grid);

struct NeighborColumns {
  std::array<std::uint32_t, 4> first{};   // (-1,0) (+1,0) (0,-1) (0,+1)
  std::array<std::uint32_t, 4> second{};  // (-1,-1) (-1,+1) (+1,-1) (+1,+1)
  std::array<std::uint32_t, 4> third{};   // (-2,0) (+2,0) (0,-2) (0,+2)
};

/// Periodic neighbourhood of a column. Duplicates are kept on small grids.
NeighborColumns neighbor_columns(const GridConfig& grid, std::uint32_t col);

inline constexpr std::int32_t kNeverStep = std::numeric_limits<std::int32_t>::min();

struct SynapseRecord {
  Gid source_gid = 0;
  Gid target_gid = 0;
  float weight = 0.0f;
  std::uint8_t delay = 1;  // ms
  NeuronKind source_kind = NeuronKind::excitatory;
  std::int32_t last_presyn_arrival = kNeverStep;  // time step of the latest arrival
  double stdp_accumulator = 0.0;
};

/// Forward synapses of one neuron, exactly forward_synapses_per_neuron of them,
/// in synapse-index order. Excitatory sources fill own column, then the first,
/// second and third neighbour groups; inhibitory sources target excitatory
/// neurons of their own column with the minimum delay.
std::vector<SynapseRecord> generate_forward_synapses(Gid gid, const GridConfig& grid);

/// Function from a source neuron to its forward synapses. The grid generator
/// is the default; tests substitute hand-built connectivity.
using SynapseGenerator = std::function<std::vector<SynapseRecord>(Gid)>;

double initial_weight(NeuronKind kind, const InitialWeights& weights = {});

struct StimulusConfig {
  std::uint32_t rate = 60;    // events per ms per column
  double amplitude = 20.0;    // current units
};

struct ThalamicEvent {
  Gid target_gid = 0;
  std::uint32_t time_ms = 0;
  double amplitude = 0.0;
  bool operator==(const ThalamicEvent&) const = default;
};

std::vector<ThalamicEvent> thalamic_events(std::uint32_t column, std::uint32_t time_ms,
                                           const GridConfig& grid, const StimulusConfig& stim);

}  // namespace dpsnn
