#include "dpsnn/wire.hpp"

#include <bit>
#include <string>

namespace dpsnn {

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(Bytes& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(Bytes& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (remaining() < n)
    throw ProtocolError("truncated record: need " + std::to_string(n) + " bytes, have " +
                        std::to_string(remaining()));
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto s = take(2);
  return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
}

std::uint32_t ByteReader::u32() {
  auto s = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{s[i]} << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto s = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{s[i]} << (8 * i);
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

Bytes encode_spikes(std::span<const AxonalSpike> spikes) {
  Bytes out;
  out.reserve(spikes.size() * kAxonalSpikeBytes);
  for (const auto& s : spikes) {
    put_u32(out, s.source_gid);
    put_u32(out, s.emission_time);
  }
  return out;
}

std::vector<AxonalSpike> decode_spikes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kAxonalSpikeBytes != 0)
    throw ProtocolError("spike payload of " + std::to_string(bytes.size()) + " bytes is not a whole record count");
  ByteReader r(bytes);
  std::vector<AxonalSpike> out(bytes.size() / kAxonalSpikeBytes);
  for (auto& s : out) {
    s.source_gid = r.u32();
    s.emission_time = r.u32();
  }
  return out;
}

Bytes encode_synapses(std::span<const SynapseRecord> synapses) {
  Bytes out;
  out.reserve(synapses.size() * kSynapseWireBytes);
  for (const auto& s : synapses) {
    put_u32(out, s.source_gid);
    put_u32(out, s.target_gid);
    put_f32(out, s.weight);
    out.push_back(s.delay);
    out.push_back(static_cast<std::uint8_t>(s.source_kind));
    put_u16(out, 0);
  }
  return out;
}

std::vector<SynapseRecord> decode_synapses(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % kSynapseWireBytes != 0)
    throw ProtocolError("synapse payload of " + std::to_string(bytes.size()) +
                        " bytes is not a whole record count");
  ByteReader r(bytes);
  std::vector<SynapseRecord> out(bytes.size() / kSynapseWireBytes);
  for (auto& s : out) {
    s.source_gid = r.u32();
    s.target_gid = r.u32();
    s.weight = r.f32();
    s.delay = r.u8();
    const std::uint8_t kind = r.u8();
    if (kind > 1) throw ProtocolError("bad neuron kind " + std::to_string(kind) + " in synapse record");
    s.source_kind = static_cast<NeuronKind>(kind);
    r.u16();
  }
  return out;
}

Bytes encode_report(const ProcessReport& rep) {
  Bytes out;
  put_u32(out, rep.rank);
  put_u64(out, rep.spikes.size());
  for (const auto& s : rep.spikes) {
    put_u64(out, static_cast<std::uint64_t>(s.step));
    put_u32(out, s.gid);
  }
  put_u64(out, rep.potentials.size());
  for (const auto& p : rep.potentials) {
    put_u64(out, static_cast<std::uint64_t>(p.step));
    put_u32(out, p.gid);
    put_f64(out, p.v);
  }
  for (double s : rep.timer.all()) put_f64(out, s);
  put_f64(out, rep.timer.total());
  put_f64(out, rep.measured_wall_seconds);
  put_u64(out, rep.measured_spikes);
  put_u64(out, rep.local_synapses);
  put_u64(out, rep.weight_histogram.size());
  for (auto c : rep.weight_histogram) put_u64(out, c);
  for (const auto* v : {&rep.construction_outgoing, &rep.construction_incoming}) {
    put_u64(out, v->size());
    for (auto c : *v) put_u64(out, c);
  }
  return out;
}

ProcessReport decode_report(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ProcessReport rep;
  rep.rank = r.u32();
  rep.spikes.resize(r.u64());
  for (auto& s : rep.spikes) {
    s.step = static_cast<std::int64_t>(r.u64());
    s.gid = r.u32();
  }
  rep.potentials.resize(r.u64());
  for (auto& p : rep.potentials) {
    p.step = static_cast<std::int64_t>(r.u64());
    p.gid = r.u32();
    p.v = r.f64();
  }
  std::array<double, kBlockCount> blocks{};
  for (auto& b : blocks) b = r.f64();
  const double total = r.f64();
  rep.timer.set(blocks, total);
  rep.measured_wall_seconds = r.f64();
  rep.measured_spikes = r.u64();
  rep.local_synapses = r.u64();
  rep.weight_histogram.resize(r.u64());
  for (auto& c : rep.weight_histogram) c = r.u64();
  for (auto* v : {&rep.construction_outgoing, &rep.construction_incoming}) {
    v->resize(r.u64());
    for (auto& c : *v) c = r.u64();
  }
  if (!r.done()) throw ProtocolError("trailing bytes after process report");
  return rep;
}

}  // namespace dpsnn
