#pragma once

// TCP backend. One long-lived connection per ordered pair that actually
// carries traffic, opened lazily on the first frame. Each frame on the wire is
//
//   u64 round | u32 kind | u32 sender | u32 world | u32 reserved | u64 length | body
//
// little-endian, preceded once per connection by a hello
//
//   u32 magic "DPS1" | u32 sender | u32 world
//
// Frames to self bypass the socket.

#include <atomic>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dpsnn/transport.hpp"

namespace dpsnn {

struct RosterEntry {
  std::string host;
  std::uint16_t port = 0;
};

using Roster = std::vector<RosterEntry>;

/// Lines of `process_id host:port`; blank lines and `#` comments ignored.
/// Ids must cover 0..H-1 exactly once.
Roster parse_roster(std::istream& in);
Roster load_roster(const std::string& path);
void write_roster(std::ostream& out, const Roster& roster);

class TcpTransport final : public Transport {
 public:
  /// Binds and listens on roster[rank].
  TcpTransport(int rank, Roster roster, std::chrono::milliseconds timeout = kDefaultTransportTimeout);
  /// Takes ownership of an already listening socket.
  TcpTransport(int rank, Roster roster, int listen_fd, std::chrono::milliseconds timeout = kDefaultTransportTimeout);
  ~TcpTransport() override;

  const Roster& roster() const { return roster_; }
  /// Connections opened by this endpoint so far.
  std::size_t open_connections() const;

 protected:
  void deliver(int peer, Frame frame) override;

 private:
  void start();
  void accept_loop();
  void reader_loop(int fd);
  int connection_to(int peer);

  Roster roster_;
  std::chrono::milliseconds timeout_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;

  mutable std::mutex mu_;
  std::vector<int> outgoing_;  // per peer, -1 until connected
  std::vector<int> incoming_fds_;
  std::vector<std::thread> readers_;
};

/// H endpoints on 127.0.0.1 ephemeral ports, all in this address space.
std::vector<std::unique_ptr<TcpTransport>> make_loopback_cluster(
    int world, std::chrono::milliseconds timeout = kDefaultTransportTimeout);

}  // namespace dpsnn
