#pragma once

// Message passing between simulation processes.
//
// Every collective is a numbered round. A counts round sends one 64-bit word
// to each peer of a roster; a payload round then moves bytes only along pairs
// whose counter was nonzero. Each collective is split into post_* (never
// blocks) and collect_* (blocks until the round's expected frames are in), so
// a driver can multiplex several processes on one thread by posting for all of
// them before collecting for any.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpsnn/wire.hpp"

namespace dpsnn {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Counts = std::vector<std::uint64_t>;
using Payloads = std::map<int, Bytes>;

enum class FrameKind : std::uint32_t { counts = 1, payload = 2, barrier = 3 };

const char* to_string(FrameKind kind);

struct Frame {
  std::uint64_t round = 0;
  FrameKind kind = FrameKind::counts;
  std::uint32_t sender = 0;
  std::uint32_t world = 0;
  Bytes body;
};

/// Inbound frames of one endpoint, keyed by (round, sender).
class Mailbox {
 public:
  void push(Frame frame);

  /// Waits for the frames of `round` from every peer in `senders`.
  std::map<int, Frame> take(std::uint64_t round, FrameKind kind, std::uint32_t world,
                            std::span<const int> senders, std::chrono::milliseconds timeout);

  /// Senders that delivered a frame for `round` but are not in `expected`.
  std::vector<int> unexpected(std::uint64_t round, std::span<const int> expected) const;

  /// A peer closed its connection; waiting on it afterwards is an error.
  void close_peer(int peer, std::string reason);
  /// Wakes all waiters with an error.
  void abort(std::string reason);

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::pair<std::uint64_t, int>, Frame> frames_;
  std::map<int, std::string> closed_;
  std::optional<std::string> failure_;
};

struct TrafficEvent {
  std::uint64_t round = 0;
  FrameKind kind = FrameKind::counts;
  int source = 0;
  int target = 0;
  std::uint64_t counter = 0;   // counts frames
  std::size_t payload_bytes = 0;  // payload frames
};

/// Called for every frame an endpoint sends. Must be thread-safe when shared.
using TrafficTap = std::function<void(const TrafficEvent&)>;

inline constexpr std::chrono::milliseconds kDefaultTransportTimeout{120000};

class Transport {
 public:
  Transport(int rank, int world, std::chrono::milliseconds timeout);
  virtual ~Transport() = default;
  Transport(const Transport&) = delete;
  Transport& operator=(const Transport&) = delete;

  int rank() const { return rank_; }
  int size() const { return world_; }
  std::uint64_t round() const { return round_; }
  std::vector<int> full_roster() const;

  void set_tap(TrafficTap tap) { tap_ = std::move(tap); }

  /// `outgoing` is indexed by peer rank (size H); only peers in `send_peers`
  /// receive a counter.
  void post_counts(std::span<const std::uint64_t> outgoing, std::span<const int> send_peers);
  /// Counters announced toward this endpoint by each peer in `recv_peers`;
  /// zero for everyone else.
  Counts collect_counts(std::span<const int> recv_peers);

  /// Keys must be exactly the peers with a nonzero counter in the preceding
  /// counts round and sizes must equal counter * record_size.
  void post_payloads(Payloads outgoing, std::size_t record_size);
  Payloads collect_payloads(const Counts& expected, std::size_t record_size);

  void post_barrier();
  /// Seconds spent waiting for the other endpoints.
  double collect_barrier();

  Counts alltoall_counts(std::span<const std::uint64_t> outgoing, std::span<const int> peers);
  Counts alltoall_counts(std::span<const std::uint64_t> outgoing, std::span<const int> send_peers,
                         std::span<const int> recv_peers);
  Payloads exchange_payloads(Payloads outgoing, const Counts& expected, std::size_t record_size);
  double barrier();

  /// Fails every pending and future collect on this endpoint.
  void abort(const std::string& reason) { inbox_.abort(reason); }

 protected:
  virtual void deliver(int peer, Frame frame) = 0;
  Mailbox& inbox() { return inbox_; }

 private:
  enum class Pending { none, counts, payload, barrier };
  void begin(Pending p, const char* op);
  void expect(Pending p, const char* op);
  void check_peer(int peer) const;
  std::string where() const;

  int rank_;
  int world_;
  std::chrono::milliseconds timeout_;
  std::uint64_t round_ = 0;
  Pending pending_ = Pending::none;
  Counts last_posted_;
  Mailbox inbox_;
  TrafficTap tap_;
};

}  // namespace dpsnn
