#include "dpsnn/tcp_transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace dpsnn {

namespace {

constexpr std::uint32_t kHelloMagic = 0x31535044;  // "DPS1"
constexpr std::size_t kHeaderBytes = 32;

std::string sys_error(const std::string& what) { return what + ": " + std::strerror(errno); }

void send_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t k = ::send(fd, data, n, MSG_NOSIGNAL);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw TransportError(sys_error("send"));
    }
    data += k;
    n -= static_cast<std::size_t>(k);
  }
}

// false on orderly EOF before the first byte
bool recv_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t k = ::recv(fd, data + got, n - got, 0);
    if (k == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed mid-frame");
    }
    if (k < 0) {
      if (errno == EINTR) continue;
      throw TransportError(sys_error("recv"));
    }
    got += static_cast<std::size_t>(k);
  }
  return true;
}

int listen_on(const std::string& host, std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw TransportError(sys_error("socket"));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "*" || host == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string msg = sys_error("bind " + host + ":" + std::to_string(port));
    ::close(fd);
    throw TransportError(msg);
  }
  if (::listen(fd, 128) < 0) {
    const std::string msg = sys_error("listen");
    ::close(fd);
    throw TransportError(msg);
  }
  return fd;
}

int try_connect(const RosterEntry& e) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(e.port);
  if (::getaddrinfo(e.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) return -1;
  int fd = -1;
  for (addrinfo* p = res; p != nullptr; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd >= 0) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  return fd;
}

}  // namespace

Roster parse_roster(std::istream& in) {
  std::map<int, RosterEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    int id = 0;
    std::string hostport;
    if (!(ls >> id)) continue;
    if (!(ls >> hostport)) throw ConfigError("roster line " + std::to_string(lineno) + ": missing host:port");
    const auto colon = hostport.rfind(':');
    if (colon == std::string::npos)
      throw ConfigError("roster line " + std::to_string(lineno) + ": expected host:port, got '" + hostport + "'");
    RosterEntry e;
    e.host = hostport.substr(0, colon);
    const long port = std::strtol(hostport.c_str() + colon + 1, nullptr, 10);
    if (port <= 0 || port > 65535) throw ConfigError("roster line " + std::to_string(lineno) + ": bad port");
    e.port = static_cast<std::uint16_t>(port);
    if (!entries.emplace(id, e).second)
      throw ConfigError("roster: process id " + std::to_string(id) + " listed twice");
  }
  Roster roster;
  for (const auto& [id, e] : entries) {
    if (id != static_cast<int>(roster.size()))
      throw ConfigError("roster: process ids must be 0..H-1 without gaps (missing " +
                        std::to_string(roster.size()) + ")");
    roster.push_back(e);
  }
  if (roster.empty()) throw ConfigError("roster is empty");
  return roster;
}

Roster load_roster(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open roster file '" + path + "'");
  return parse_roster(in);
}

void write_roster(std::ostream& out, const Roster& roster) {
  for (std::size_t i = 0; i < roster.size(); ++i) out << i << ' ' << roster[i].host << ':' << roster[i].port << '\n';
}

TcpTransport::TcpTransport(int rank, Roster roster, std::chrono::milliseconds timeout)
    : TcpTransport(rank, roster, listen_on(roster.at(static_cast<std::size_t>(rank)).host,
                                           roster.at(static_cast<std::size_t>(rank)).port),
                   timeout) {}

TcpTransport::TcpTransport(int rank, Roster roster, int listen_fd, std::chrono::milliseconds timeout)
    : Transport(rank, static_cast<int>(roster.size()), timeout),
      roster_(std::move(roster)),
      timeout_(timeout),
      listen_fd_(listen_fd),
      outgoing_(roster_.size(), -1) {
  start();
}

void TcpTransport::start() {
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpTransport::~TcpTransport() {
  stopping_ = true;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(mu_);
    for (int& fd : outgoing_) {
      if (fd >= 0) {
        ::shutdown(fd, SHUT_WR);
        ::close(fd);
        fd = -1;
      }
    }
    for (int fd : incoming_fds_) ::shutdown(fd, SHUT_RDWR);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
  for (int fd : incoming_fds_) ::close(fd);
}

std::size_t TcpTransport::open_connections() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (int fd : outgoing_) n += fd >= 0;
  return n;
}

void TcpTransport::accept_loop() {
  while (!stopping_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;  // listener shut down
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(mu_);
    if (stopping_) {
      ::close(fd);
      return;
    }
    incoming_fds_.push_back(fd);
    readers_.emplace_back([this, fd] { reader_loop(fd); });
  }
}

void TcpTransport::reader_loop(int fd) {
  int peer = -1;
  try {
    std::uint8_t hello[12];
    if (!recv_all(fd, hello, sizeof hello)) return;
    ByteReader h({hello, sizeof hello});
    if (h.u32() != kHelloMagic) throw ProtocolError("bad hello magic");
    peer = static_cast<int>(h.u32());
    const std::uint32_t world = h.u32();
    if (world != static_cast<std::uint32_t>(size()))
      throw ProtocolError("roster disagreement: process " + std::to_string(peer) + " believes H=" +
                          std::to_string(world) + ", expected H=" + std::to_string(size()));
    for (;;) {
      std::uint8_t header[kHeaderBytes];
      if (!recv_all(fd, header, sizeof header)) break;
      ByteReader r({header, sizeof header});
      Frame f;
      f.round = r.u64();
      f.kind = static_cast<FrameKind>(r.u32());
      f.sender = r.u32();
      f.world = r.u32();
      r.u32();
      const std::uint64_t len = r.u64();
      f.body.resize(len);
      if (len > 0 && !recv_all(fd, f.body.data(), len)) throw TransportError("connection closed mid-frame");
      inbox().push(std::move(f));
    }
    if (peer >= 0) inbox().close_peer(peer, "connection closed");
  } catch (const std::exception& e) {
    if (stopping_) return;
    if (peer >= 0)
      inbox().close_peer(peer, e.what());
    else
      inbox().abort(std::string("tcp handshake failed: ") + e.what());
  }
}

int TcpTransport::connection_to(int peer) {
  std::lock_guard lock(mu_);
  int& fd = outgoing_[static_cast<std::size_t>(peer)];
  if (fd >= 0) return fd;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  const RosterEntry& e = roster_[static_cast<std::size_t>(peer)];
  auto backoff = std::chrono::milliseconds(5);
  while ((fd = try_connect(e)) < 0) {
    if (std::chrono::steady_clock::now() > deadline)
      throw TransportError("process " + std::to_string(rank()) + ": cannot connect to process " +
                           std::to_string(peer) + " at " + e.host + ":" + std::to_string(e.port));
    std::this_thread::sleep_for(backoff);
    backoff = std::min(backoff * 2, std::chrono::milliseconds(200));
  }
  Bytes hello;
  put_u32(hello, kHelloMagic);
  put_u32(hello, static_cast<std::uint32_t>(rank()));
  put_u32(hello, static_cast<std::uint32_t>(size()));
  send_all(fd, hello.data(), hello.size());
  return fd;
}

void TcpTransport::deliver(int peer, Frame frame) {
  if (peer == rank()) {
    inbox().push(std::move(frame));
    return;
  }
  const int fd = connection_to(peer);
  Bytes header;
  header.reserve(kHeaderBytes);
  put_u64(header, frame.round);
  put_u32(header, static_cast<std::uint32_t>(frame.kind));
  put_u32(header, frame.sender);
  put_u32(header, frame.world);
  put_u32(header, 0);
  put_u64(header, frame.body.size());
  send_all(fd, header.data(), header.size());
  if (!frame.body.empty()) send_all(fd, frame.body.data(), frame.body.size());
}

std::vector<std::unique_ptr<TcpTransport>> make_loopback_cluster(int world, std::chrono::milliseconds timeout) {
  Roster roster;
  std::vector<int> fds;
  for (int r = 0; r < world; ++r) {
    const int fd = listen_on("127.0.0.1", 0);
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    roster.push_back({"127.0.0.1", ntohs(addr.sin_port)});
    fds.push_back(fd);
  }
  std::vector<std::unique_ptr<TcpTransport>> out;
  for (int r = 0; r < world; ++r)
    out.push_back(std::make_unique<TcpTransport>(r, roster, fds[static_cast<std::size_t>(r)], timeout));
  return out;
}

}  // namespace dpsnn
