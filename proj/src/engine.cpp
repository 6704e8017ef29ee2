#include "dpsnn/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dpsnn {

std::uint32_t EngineConfig::steps_per_ms() const {
  if (!(step.dt > 0.0)) throw ConfigError("dt must be > 0");
  const double inv = 1.0 / step.dt;
  const double k = std::round(inv);
  if (k < 1.0 || std::fabs(k * step.dt - 1.0) > 1e-9)
    throw ConfigError("dt must be 1/k ms for a positive integer k (got " + std::to_string(step.dt) + ")");
  return static_cast<std::uint32_t>(k);
}

void EngineConfig::validate() const {
  grid.validate();
  const auto wrap = [](const char* what, auto&& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  wrap("stdp", [&] { stdp.validate(); });
  wrap("step", [&] { step.validate(); });
  wrap("excitatory params", [&] { excitatory.validate(); });
  wrap("inhibitory params", [&] { inhibitory.validate(); });
  const std::uint32_t k = steps_per_ms();
  const double interval = stdp.apply_interval * k;
  if (std::fabs(interval - std::round(interval)) > 1e-9 || interval < 1.0)
    throw ConfigError("plasticity interval must be a whole number of time steps");
  if (std::uint64_t{grid.delay_max} * k > 1u << 20) throw ConfigError("delay_max / dt too large");
  for (Gid g : trace_gids)
    if (g >= grid.total_neurons()) throw ConfigError("trace gid " + std::to_string(g) + " out of range");
}

EngineError::EngineError(int rank, std::int64_t step, const std::string& what)
    : std::runtime_error("process " + std::to_string(rank) + ", step " + std::to_string(step) + ": " + what),
      rank_(rank),
      step_(step) {}

SynapseStore::SynapseStore(std::vector<SynapseRecord> synapses, Gid first_local, std::uint32_t loc_n)
    : synapses_(std::move(synapses)) {
  std::stable_sort(synapses_.begin(), synapses_.end(), [](const SynapseRecord& a, const SynapseRecord& b) {
    return a.source_gid != b.source_gid ? a.source_gid < b.source_gid : a.delay < b.delay;
  });

  for (std::uint32_t i = 0; i < synapses_.size(); ++i) {
    const auto& s = synapses_[i];
    if (groups_.empty() || groups_.back().source != s.source_gid || groups_.back().delay != s.delay) {
      groups_.push_back({s.source_gid, s.delay, i, i + 1});
    } else {
      groups_.back().end = i + 1;
    }
  }
  group_index_.resize(groups_.size());
  std::iota(group_index_.begin(), group_index_.end(), 0u);
  for (std::uint32_t g = 0; g < groups_.size(); ++g) {
    auto [it, fresh] = by_source_.try_emplace(groups_[g].source, g, g + 1);
    if (!fresh) it->second.second = g + 1;
  }

  incoming_offsets_.assign(std::size_t{loc_n} + 1, 0);
  for (const auto& s : synapses_) ++incoming_offsets_[s.target_gid - first_local + 1];
  std::partial_sum(incoming_offsets_.begin(), incoming_offsets_.end(), incoming_offsets_.begin());
  incoming_.resize(synapses_.size());
  std::vector<std::uint32_t> fill(incoming_offsets_.begin(), incoming_offsets_.end() - 1);
  for (std::uint32_t i = 0; i < synapses_.size(); ++i) incoming_[fill[synapses_[i].target_gid - first_local]++] = i;
}

std::span<const std::uint32_t> SynapseStore::groups_of(Gid source) const {
  auto it = by_source_.find(source);
  if (it == by_source_.end()) return {};
  return std::span(group_index_).subspan(it->second.first, it->second.second - it->second.first);
}

std::span<const std::uint32_t> SynapseStore::incoming(std::uint32_t local) const {
  if (incoming_offsets_.empty()) return {};
  const auto b = incoming_offsets_.at(local);
  const auto e = incoming_offsets_.at(std::size_t{local} + 1);
  return std::span(incoming_).subspan(b, e - b);
}

void SpikeQueue::schedule(std::int64_t now, std::int64_t due, std::uint32_t group) {
  if (due < now || due - now >= static_cast<std::int64_t>(slots_.size()))
    throw std::logic_error("spike due at step " + std::to_string(due) + " outside the delay window at step " +
                           std::to_string(now));
  slots_[static_cast<std::size_t>(due % static_cast<std::int64_t>(slots_.size()))].push_back(group);
}

std::vector<std::uint32_t> SpikeQueue::take(std::int64_t now) {
  std::vector<std::uint32_t> out;
  out.swap(slots_[static_cast<std::size_t>(now % static_cast<std::int64_t>(slots_.size()))]);
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t SpikeQueue::pending() const {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.size();
  return n;
}

void TargetProcessIndex::add(std::uint32_t local, std::uint32_t process) {
  auto& t = targets_.at(local);
  auto it = std::lower_bound(t.begin(), t.end(), process);
  if (it == t.end() || *it != process) t.insert(it, process);
}

SpikePackets pack_spikes(std::span<const std::uint32_t> spiking_locals, Gid first_gid,
                         std::uint32_t emission_step, const TargetProcessIndex& index) {
  SpikePackets out;
  for (std::uint32_t local : spiking_locals)
    for (std::uint32_t p : index.targets(local)) out[p].push_back({first_gid + local, emission_step});
  return out;
}

void run_plasticity_epoch(std::span<SynapseRecord> synapses, const StdpConfig& cfg) {
  for (auto& s : synapses) {
    if (s.source_kind == NeuronKind::excitatory)
      s.weight = static_cast<float>(apply_plasticity(s.weight, s.stdp_accumulator, cfg, s.source_kind));
    s.stdp_accumulator = 0.0;
  }
}

namespace {

double seconds_since(BlockTimer::Clock::time_point t0) {
  return std::chrono::duration<double>(BlockTimer::Clock::now() - t0).count();
}

}  // namespace

Process::Process(const EngineConfig& cfg, Transport& transport, SynapseGenerator generator)
    : cfg_(cfg),
      transport_(transport),
      generator_(std::move(generator)),
      map_((cfg.validate(), cfg.grid), static_cast<std::uint32_t>(transport.size())),
      first_gid_(map_.first_gid(static_cast<std::uint32_t>(transport.rank()))),
      steps_per_ms_(cfg.steps_per_ms()),
      queue_(std::size_t{cfg.grid.delay_max} * cfg.steps_per_ms() + 1),
      target_index_(map_.loc_n()),
      construction_out_(static_cast<std::size_t>(transport.size()), 0),
      construction_in_(static_cast<std::size_t>(transport.size()), 0) {
  if (!generator_) {
    const GridConfig grid = cfg_.grid;
    generator_ = [grid](Gid gid) { return generate_forward_synapses(gid, grid); };
  }
  const std::uint32_t n = map_.loc_n();
  neurons_.reserve(n);
  for (std::uint32_t l = 0; l < n; ++l) {
    const NeuronKind kind = neuron_kind(first_gid_ + l, cfg_.grid);
    neurons_.push_back(NeuronState::resting(kind == NeuronKind::excitatory ? cfg_.excitatory : cfg_.inhibitory, kind));
  }
  last_spike_step_.assign(n, kNeverStep);
  pending_.assign(n, 0.0);
  last_input_.assign(n, 0.0);
  forced_.assign(n, 0);

  std::vector<Gid> traced;
  for (Gid g : cfg_.trace_gids)
    if (map_.process_of(g) == static_cast<std::uint32_t>(rank())) traced.push_back(g);
  recorder_.trace(traced);

  // Exact stdp_delta values for the first few time constants; the tail
  // falls back to the formula.
  const double k = steps_per_ms_;
  const auto window = [&](double tau) { return static_cast<std::size_t>(std::ceil(8.0 * tau * k)) + 1; };
  ltp_table_.resize(window(cfg_.stdp.tau_plus));
  for (std::size_t d = 0; d < ltp_table_.size(); ++d) ltp_table_[d] = stdp_delta(d / k, 0.0, 0.0, cfg_.stdp);
  ltd_table_.resize(window(cfg_.stdp.tau_minus));
  for (std::size_t d = 0; d < ltd_table_.size(); ++d) ltd_table_[d] = stdp_delta(0.0, d / k, 0.0, cfg_.stdp);
}

template <class F>
void Process::guarded(F&& f) {
  try {
    f();
  } catch (const EngineError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw EngineError(rank(), clock_, e.what());
  }
}

void Process::construct_begin() {
  guarded([&] {
    const auto h = static_cast<std::size_t>(transport_.size());
    const std::uint64_t n = map_.total_neurons();
    outgoing_buckets_.assign(h, {});
    for (std::uint32_t l = 0; l < map_.loc_n(); ++l) {
      const Gid gid = first_gid_ + l;
      for (auto& s : generator_(gid)) {
        if (s.source_gid != gid)
          throw ConfigError("generator returned a synapse of neuron " + std::to_string(s.source_gid) +
                            " for neuron " + std::to_string(gid));
        if (s.target_gid >= n) throw ConfigError("synapse target " + std::to_string(s.target_gid) + " out of range");
        if (s.delay < cfg_.grid.delay_min || s.delay > cfg_.grid.delay_max)
          throw ConfigError("synapse delay " + std::to_string(s.delay) + " outside [delay_min, delay_max]");
        const std::uint32_t p = map_.process_of(s.target_gid);
        outgoing_buckets_[p].push_back(s);
        target_index_.add(l, p);
      }
    }
    target_procs_.clear();
    for (std::size_t p = 0; p < h; ++p) {
      construction_out_[p] = outgoing_buckets_[p].size();
      if (construction_out_[p] != 0) target_procs_.push_back(static_cast<int>(p));
    }
    transport_.post_counts(construction_out_, transport_.full_roster());
  });
}

void Process::construct_exchange() {
  guarded([&] {
    construction_in_ = transport_.collect_counts(transport_.full_roster());
    source_procs_.clear();
    for (std::size_t p = 0; p < construction_in_.size(); ++p)
      if (construction_in_[p] != 0) source_procs_.push_back(static_cast<int>(p));
    Payloads out;
    for (std::size_t p = 0; p < outgoing_buckets_.size(); ++p) {
      if (outgoing_buckets_[p].empty()) continue;
      out.emplace(static_cast<int>(p), encode_synapses(outgoing_buckets_[p]));
      std::vector<SynapseRecord>().swap(outgoing_buckets_[p]);
    }
    outgoing_buckets_.clear();
    transport_.post_payloads(std::move(out), kSynapseWireBytes);
  });
}

void Process::construct_finish() {
  guarded([&] {
    auto payloads = transport_.collect_payloads(construction_in_, kSynapseWireBytes);
    std::vector<SynapseRecord> incoming;
    std::uint64_t total = 0;
    for (std::uint64_t c : construction_in_) total += c;
    incoming.reserve(total);
    for (auto& [peer, bytes] : payloads) {
      for (const auto& s : decode_synapses(bytes)) {
        if (map_.process_of(s.target_gid) != static_cast<std::uint32_t>(rank()))
          throw ProtocolError("process " + std::to_string(peer) + " sent a synapse onto neuron " +
                              std::to_string(s.target_gid) + " to process " + std::to_string(rank()) +
                              ", which does not own it");
        if (s.delay < cfg_.grid.delay_min || s.delay > cfg_.grid.delay_max)
          throw ProtocolError("process " + std::to_string(peer) + " sent a synapse with delay " +
                              std::to_string(s.delay) + " to process " + std::to_string(rank()));
        incoming.push_back(s);
      }
      Bytes().swap(bytes);
    }
    store_ = SynapseStore(std::move(incoming), first_gid_, map_.loc_n());
    constructed_ = true;
  });
}

void Process::construct() {
  construct_begin();
  construct_exchange();
  construct_finish();
}

void Process::apply_ltp(std::int64_t post_step, std::uint32_t local) {
  auto syn = store_.synapses();
  for (std::uint32_t i : store_.incoming(local)) {
    SynapseRecord& s = syn[i];
    if (s.source_kind != NeuronKind::excitatory || s.last_presyn_arrival == kNeverStep) continue;
    const auto d = static_cast<std::size_t>(post_step - s.last_presyn_arrival);
    s.stdp_accumulator += d < ltp_table_.size()
                              ? ltp_table_[d]
                              : stdp_delta(static_cast<double>(d) / steps_per_ms_, 0.0, 0.0, cfg_.stdp);
  }
}

void Process::step_begin() {
  guarded([&] {
    if (!constructed_) throw std::logic_error("step before construction");
    const auto t0 = BlockTimer::Clock::now();
    const auto interval = static_cast<std::int64_t>(std::llround(cfg_.stdp.apply_interval * steps_per_ms_));
    if (clock_ > 0 && clock_ % interval == 0) {
      ScopedBlock b(timer_, Block::plasticity);
      run_plasticity_epoch(store_.synapses(), cfg_.stdp);
    }
    {
      ScopedBlock b(timer_, Block::ltp_and_post_spike);
      for (std::uint32_t l : spiked_prev_) apply_ltp(clock_ - 1, l);
    }
    if (cfg_.barrier_enabled) {
      ScopedBlock b(timer_, Block::barrier);
      transport_.post_barrier();
    }
    timer_.add_total(seconds_since(t0));
  });
}

void Process::step_send_counts() {
  guarded([&] {
    const auto t0 = BlockTimer::Clock::now();
    if (cfg_.barrier_enabled) {
      ScopedBlock b(timer_, Block::barrier);
      transport_.collect_barrier();
    }
    {
      ScopedBlock b(timer_, Block::spikes_dim);
      step_packets_ = pack_spikes(spiked_prev_, first_gid_, static_cast<std::uint32_t>(clock_ - 1), target_index_);
      step_counts_.assign(static_cast<std::size_t>(transport_.size()), 0);
      for (const auto& [p, spikes] : step_packets_) step_counts_[p] = spikes.size();
      transport_.post_counts(step_counts_, target_procs_);
    }
    timer_.add_total(seconds_since(t0));
  });
}

void Process::step_send_payloads() {
  guarded([&] {
    const auto t0 = BlockTimer::Clock::now();
    {
      ScopedBlock b(timer_, Block::spikes_dim);
      step_incoming_ = transport_.collect_counts(source_procs_);
    }
    {
      ScopedBlock b(timer_, Block::spikes_payload);
      Payloads out;
      for (const auto& [p, spikes] : step_packets_) out.emplace(static_cast<int>(p), encode_spikes(spikes));
      step_packets_.clear();
      transport_.post_payloads(std::move(out), kAxonalSpikeBytes);
    }
    timer_.add_total(seconds_since(t0));
  });
}

void Process::enqueue(const AxonalSpike& spike) {
  if (static_cast<std::int64_t>(spike.emission_time) != clock_ - 1)
    throw ProtocolError("spike of neuron " + std::to_string(spike.source_gid) + " stamped " +
                        std::to_string(spike.emission_time) + " arrived at step " + std::to_string(clock_));
  const auto groups = store_.groups_of(spike.source_gid);
  if (groups.empty())
    throw ProtocolError("process " + std::to_string(rank()) + " received a spike of neuron " +
                        std::to_string(spike.source_gid) + " but holds none of its synapses");
  for (std::uint32_t g : groups) {
    const std::int64_t due = spike.emission_time + std::int64_t{store_.groups()[g].delay} * steps_per_ms_;
    queue_.schedule(clock_, due, g);
  }
}

void Process::step_finish() {
  guarded([&] {
    const auto t0 = BlockTimer::Clock::now();
    Payloads payloads;
    {
      ScopedBlock b(timer_, Block::spikes_payload);
      payloads = transport_.collect_payloads(step_incoming_, kAxonalSpikeBytes);
    }
    auto syn = store_.synapses();
    {
      ScopedBlock b(timer_, Block::intra_multicast);
      for (const auto& [peer, bytes] : payloads)
        for (const auto& spike : decode_spikes(bytes)) enqueue(spike);
      arrivals_.clear();
      const auto clock32 = static_cast<std::int32_t>(clock_);
      for (std::uint32_t g : queue_.take(clock_)) {
        const auto& grp = store_.groups()[g];
        for (std::uint32_t i = grp.begin; i < grp.end; ++i) {
          syn[i].last_presyn_arrival = clock32;
          arrivals_.push_back(i);
        }
      }
    }
    {
      ScopedBlock b(timer_, Block::currents_and_ltd);
      for (std::uint32_t i : arrivals_) pending_[syn[i].target_gid - first_gid_] += syn[i].weight;
    }
    if (clock_ % steps_per_ms_ == 0) {
      ScopedBlock b(timer_, Block::thalamic);
      const auto ms = static_cast<std::uint32_t>(clock_ / steps_per_ms_);
      const std::uint32_t npc = cfg_.grid.neurons_per_column;
      const Gid last = first_gid_ + map_.loc_n() - 1;
      for (std::uint32_t col = first_gid_ / npc; col <= last / npc; ++col)
        for (const auto& ev : thalamic_events(col, ms, cfg_.grid, cfg_.stimulus))
          if (ev.target_gid >= first_gid_ && ev.target_gid <= last) pending_[ev.target_gid - first_gid_] += ev.amplitude;
    }
    spiked_now_.clear();
    {
      ScopedBlock b(timer_, Block::neural_dynamic);
      const double now_ms = static_cast<double>(clock_) / steps_per_ms_;
      for (std::uint32_t l = 0; l < neurons_.size(); ++l) {
        const auto& params = neurons_[l].kind == NeuronKind::excitatory ? cfg_.excitatory : cfg_.inhibitory;
        NeuronState in = neurons_[l];
        if (forced_[l]) {
          in.v = params.v_peak;
          forced_[l] = 0;
        }
        NeuronStepResult r;
        try {
          r = neuron_step(in, params, pending_[l], cfg_.step, now_ms);
        } catch (const NumericDivergence& e) {
          throw NumericDivergence("neuron " + std::to_string(first_gid_ + l) + ": " + e.what());
        }
        neurons_[l] = r.state;
        last_input_[l] = pending_[l];
        pending_[l] = 0.0;
        if (r.spiked) {
          spiked_now_.push_back(l);
          last_spike_step_[l] = static_cast<std::int32_t>(clock_);
        }
      }
    }
    {
      // Depression for arrivals onto targets that did not fire this step;
      // a target firing now is potentiated next step instead.
      ScopedBlock b(timer_, Block::currents_and_ltd);
      for (std::uint32_t i : arrivals_) {
        SynapseRecord& s = syn[i];
        if (s.source_kind != NeuronKind::excitatory) continue;
        const std::int32_t post = last_spike_step_[s.target_gid - first_gid_];
        if (post == kNeverStep || post == clock_) continue;
        const auto d = static_cast<std::size_t>(clock_ - post);
        s.stdp_accumulator += d < ltd_table_.size()
                                  ? ltd_table_[d]
                                  : stdp_delta(0.0, static_cast<double>(d) / steps_per_ms_, 0.0, cfg_.stdp);
      }
    }
    {
      ScopedBlock b(timer_, Block::stats);
      for (std::uint32_t l : spiked_now_) recorder_.record_spike(clock_, first_gid_ + l);
      if (measuring_) measured_spikes_ += spiked_now_.size();
      if (recorder_.tracing()) {
        for (std::uint32_t l = 0; l < neurons_.size(); ++l) {
          const Gid gid = first_gid_ + l;
          if (!recorder_.traced(gid)) continue;
          if (last_spike_step_[l] == clock_) {
            const auto& params = neurons_[l].kind == NeuronKind::excitatory ? cfg_.excitatory : cfg_.inhibitory;
            recorder_.record_potential(clock_, gid, params.v_peak);
          }
          recorder_.record_potential(clock_, gid, neurons_[l].v);
        }
      }
    }
    spiked_prev_.swap(spiked_now_);
    ++clock_;
    timer_.add_total(seconds_since(t0));
  });
}

void Process::step() {
  step_begin();
  step_send_counts();
  step_send_payloads();
  step_finish();
}

void Process::begin_measurement() {
  timer_.reset();
  measuring_ = true;
  measured_spikes_ = 0;
  measure_start_ = BlockTimer::Clock::now();
}

void Process::end_measurement() {
  if (!measuring_) return;
  measured_wall_ = seconds_since(measure_start_);
  measuring_ = false;
}

void Process::force_spike(Gid gid) {
  if (gid < first_gid_ || gid >= first_gid_ + map_.loc_n())
    throw std::out_of_range("neuron " + std::to_string(gid) + " is not local to process " + std::to_string(rank()));
  forced_[gid - first_gid_] = 1;
}

ProcessReport Process::report() const {
  ProcessReport r;
  r.rank = static_cast<std::uint32_t>(rank());
  r.spikes = recorder_.spikes();
  r.potentials = recorder_.potentials();
  r.timer = timer_;
  r.measured_wall_seconds = measured_wall_;
  r.measured_spikes = measured_spikes_;
  r.local_synapses = store_.synapses().size();
  std::vector<float> w;
  for (const auto& s : store_.synapses())
    if (s.source_kind == NeuronKind::excitatory) w.push_back(s.weight);
  r.weight_histogram = weight_histogram(w, cfg_.stdp.w_min, cfg_.stdp.w_max, cfg_.weight_histogram_bins);
  r.construction_outgoing = construction_out_;
  r.construction_incoming = construction_in_;
  return r;
}

}  // namespace dpsnn
