#pragma once

// Little-endian fixed-width record layouts exchanged between processes.
//
//   AxonalSpike   8 bytes  u32 gid | u32 emission_time (time step; ms at dt = 1)
//   SynapseRecord 16 bytes u32 source_gid | u32 target_gid | f32 weight |
//                          u8 delay | u8 kind | u16 pad (zero)

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dpsnn/network.hpp"
#include "dpsnn/observables.hpp"

namespace dpsnn {

using Bytes = std::vector<std::uint8_t>;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AxonalSpike {
  Gid source_gid = 0;
  std::uint32_t emission_time = 0;
  bool operator==(const AxonalSpike&) const = default;
};

inline constexpr std::size_t kAxonalSpikeBytes = 8;
inline constexpr std::size_t kSynapseWireBytes = 16;

void put_u16(Bytes& out, std::uint16_t v);
void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
void put_f32(Bytes& out, float v);
void put_f64(Bytes& out, double v);

/// Bounds-checked little-endian reader.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();

  bool done() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n);
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

Bytes encode_spikes(std::span<const AxonalSpike> spikes);
std::vector<AxonalSpike> decode_spikes(std::span<const std::uint8_t> bytes);

/// Wire form drops the plasticity bookkeeping fields.
Bytes encode_synapses(std::span<const SynapseRecord> synapses);
std::vector<SynapseRecord> decode_synapses(std::span<const std::uint8_t> bytes);

/// Everything a process hands to the root after a run.
struct ProcessReport {
  std::uint32_t rank = 0;
  std::vector<SpikeRecord> spikes;
  std::vector<PotentialSample> potentials;
  BlockTimer timer;
  double measured_wall_seconds = 0.0;
  std::uint64_t measured_spikes = 0;
  std::uint64_t local_synapses = 0;
  std::vector<std::uint64_t> weight_histogram;
  std::vector<std::uint64_t> construction_outgoing;  // synapse counters sent, per target process
  std::vector<std::uint64_t> construction_incoming;  // synapse counters received, per source process
};

Bytes encode_report(const ProcessReport& r);
ProcessReport decode_report(std::span<const std::uint8_t> bytes);

}  // namespace dpsnn
