#include "dpsnn/network.hpp"

#include <cmath>
#include <string>

#include "dpsnn/rng.hpp"

namespace dpsnn {

namespace {

std::uint32_t exact_count(double fraction, std::uint32_t m, const char* what) {
  const double raw = fraction * m;
  const double rounded = std::round(raw);
  if (std::fabs(raw - rounded) > 1e-9 || rounded < 0)
    throw ConfigError(std::string("projection fraction '") + what + "' times M=" +
                      std::to_string(m) + " is not an integer synapse count");
  return static_cast<std::uint32_t>(rounded);
}

std::uint32_t wrap(std::int64_t v, std::uint32_t n) {
  const std::int64_t m = v % static_cast<std::int64_t>(n);
  return static_cast<std::uint32_t>(m < 0 ? m + n : m);
}

}  // namespace

std::uint32_t GridConfig::excitatory_per_column() const {
  return static_cast<std::uint32_t>(std::llround(excitatory_fraction * neurons_per_column));
}

void GridConfig::validate() const {
  if (cfx == 0 || cfy == 0) throw ConfigError("grid dimensions must be positive");
  if (neurons_per_column == 0) throw ConfigError("neurons_per_column must be positive");
  if (!(excitatory_fraction >= 0.0 && excitatory_fraction <= 1.0))
    throw ConfigError("excitatory_fraction must be in [0, 1]");
  if (delay_min < 1) throw ConfigError("delay_min must be >= 1");
  if (delay_max < delay_min) throw ConfigError("delay_max must be >= delay_min");
  if (delay_max > 255) throw ConfigError("delay_max must fit the 8-bit wire field");
  if (total_neurons() > std::numeric_limits<Gid>::max())
    throw ConfigError("network too large for 32-bit neuron ids");
  const auto& f = projection_fractions;
  const double sum = f.same + 4.0 * (f.first_each + f.second_each + f.third_each);
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("projection fractions must sum to 1 (got " + std::to_string(sum) + ")");
  if (group_counts(*this).total() != forward_synapses_per_neuron)
    throw ConfigError("projection group counts do not add up to M");
  if (forward_synapses_per_neuron > 0 && excitatory_per_column() == 0)
    throw ConfigError("inhibitory neurons need at least one excitatory target per column");
}

GroupCounts group_counts(const GridConfig& grid) {
  const auto m = grid.forward_synapses_per_neuron;
  const auto& f = grid.projection_fractions;
  return {exact_count(f.same, m, "same"), exact_count(f.first_each, m, "first_each"),
          exact_count(f.second_each, m, "second_each"), exact_count(f.third_each, m, "third_each")};
}

ProcessMap::ProcessMap(const GridConfig& grid, std::uint32_t process_count)
    : process_count_(process_count), total_neurons_(grid.total_neurons()), loc_n_(0) {
  if (process_count == 0) throw ConfigError("process count must be positive");
  if (total_neurons_ % process_count != 0)
    throw ConfigError("N=" + std::to_string(total_neurons_) + " is not divisible by H=" +
                      std::to_string(process_count));
  loc_n_ = static_cast<std::uint32_t>(total_neurons_ / process_count);
  const std::uint32_t npc = grid.neurons_per_column;
  const bool whole_columns = loc_n_ % npc == 0;
  bool column_fraction = false;
  for (std::uint32_t parts : {2u, 4u, 8u})
    if (npc % parts == 0 && loc_n_ == npc / parts) column_fraction = true;
  if (!whole_columns && !column_fraction)
    throw ConfigError("H=" + std::to_string(process_count) + " gives loc_n=" +
                      std::to_string(loc_n_) +
                      ", which is neither whole columns nor 1/2, 1/4, 1/8 of a column");
}

NeuronKind neuron_kind(Gid gid, const GridConfig& grid) {
  return (gid % grid.neurons_per_column) < grid.excitatory_per_column() ? NeuronKind::excitatory
                                                                        : NeuronKind::inhibitory;
}

NeuronLocus neuron_locus(Gid gid, const GridConfig& grid, const ProcessMap& map) {
  if (gid >= map.total_neurons())
    throw std::out_of_range("gid " + std::to_string(gid) + " out of range [0, " +
                            std::to_string(map.total_neurons()) + ")");
  return {map.process_of(gid), map.local_of(gid), gid / grid.neurons_per_column,
          neuron_kind(gid, grid)};
}

NeighborColumns neighbor_columns(const GridConfig& grid, std::uint32_t col) {
  const ColumnCoord c = column_coord(grid, col);
  const auto at = [&](int dx, int dy) {
    return column_id(grid, {wrap(std::int64_t{c.x} + dx, grid.cfx), wrap(std::int64_t{c.y} + dy, grid.cfy)});
  };
  NeighborColumns n;
  n.first = {at(-1, 0), at(1, 0), at(0, -1), at(0, 1)};
  n.second = {at(-1, -1), at(-1, 1), at(1, -1), at(1, 1)};
  n.third = {at(-2, 0), at(2, 0), at(0, -2), at(0, 2)};
  return n;
}

double initial_weight(NeuronKind kind, const InitialWeights& weights) {
  return kind == NeuronKind::excitatory ? weights.excitatory : weights.inhibitory;
}

std::vector<SynapseRecord> generate_forward_synapses(Gid gid, const GridConfig& grid) {
  const std::uint32_t m = grid.forward_synapses_per_neuron;
  const std::uint32_t npc = grid.neurons_per_column;
  const std::uint32_t col = gid / npc;
  const NeuronKind kind = neuron_kind(gid, grid);
  const float w = static_cast<float>(initial_weight(kind, grid.initial_weights));

  std::vector<SynapseRecord> out;
  out.reserve(m);

  const auto emit = [&](std::uint32_t index, std::uint32_t target_col, std::uint32_t range,
                        bool fixed_delay) {
    KeyedStream rng(grid.master_seed, {kSynapseDomain, gid, index});
    SynapseRecord s;
    s.source_gid = gid;
    s.target_gid = target_col * npc + rng.uniform(range);
    s.delay = static_cast<std::uint8_t>(
        fixed_delay ? grid.delay_min : rng.uniform_between(grid.delay_min, grid.delay_max));
    s.weight = w;
    s.source_kind = kind;
    out.push_back(s);
  };

  if (kind == NeuronKind::inhibitory) {
    for (std::uint32_t j = 0; j < m; ++j) emit(j, col, grid.excitatory_per_column(), true);
    return out;
  }

  const GroupCounts counts = group_counts(grid);
  const NeighborColumns nb = neighbor_columns(grid, col);
  std::uint32_t j = 0;
  for (std::uint32_t k = 0; k < counts.same; ++k) emit(j++, col, npc, false);
  for (std::uint32_t target : nb.first)
    for (std::uint32_t k = 0; k < counts.first_each; ++k) emit(j++, target, npc, false);
  for (std::uint32_t target : nb.second)
    for (std::uint32_t k = 0; k < counts.second_each; ++k) emit(j++, target, npc, false);
  for (std::uint32_t target : nb.third)
    for (std::uint32_t k = 0; k < counts.third_each; ++k) emit(j++, target, npc, false);
  return out;
}

std::vector<ThalamicEvent> thalamic_events(std::uint32_t column, std::uint32_t time_ms,
                                           const GridConfig& grid, const StimulusConfig& stim) {
  std::vector<ThalamicEvent> out;
  out.reserve(stim.rate);
  for (std::uint32_t e = 0; e < stim.rate; ++e) {
    KeyedStream rng(grid.master_seed, {kThalamicDomain, column, time_ms, e});
    out.push_back({column * grid.neurons_per_column + rng.uniform(grid.neurons_per_column), time_ms,
                   stim.amplitude});
  }
  return out;
}

}  // namespace dpsnn
