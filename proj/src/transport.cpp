#include "dpsnn/transport.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace dpsnn {

const char* to_string(FrameKind kind) {
  switch (kind) {
    case FrameKind::counts: return "counts";
    case FrameKind::payload: return "payload";
    case FrameKind::barrier: return "barrier";
  }
  return "unknown";
}

namespace {
std::string join(std::span<const int> ids) {
  std::ostringstream os;
  for (std::size_t i = 0; i < ids.size(); ++i) os << (i ? "," : "") << ids[i];
  return os.str();
}
}  // namespace

void Mailbox::push(Frame frame) {
  {
    std::lock_guard lock(mu_);
    const auto key = std::make_pair(frame.round, static_cast<int>(frame.sender));
    if (frames_.contains(key)) {
      failure_ = "duplicate frame from process " + std::to_string(frame.sender) + " in round " +
                 std::to_string(frame.round);
    } else {
      frames_.emplace(key, std::move(frame));
    }
  }
  cv_.notify_all();
}

std::map<int, Frame> Mailbox::take(std::uint64_t round, FrameKind kind, std::uint32_t world,
                                   std::span<const int> senders, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::vector<int> missing;
  for (;;) {
    if (failure_) throw TransportError(*failure_);
    missing.clear();
    for (int s : senders) {
      if (frames_.contains({round, s})) continue;
      if (auto it = closed_.find(s); it != closed_.end())
        throw TransportError("round " + std::to_string(round) + ": peer " + std::to_string(s) +
                             " disconnected (" + it->second + ")");
      missing.push_back(s);
    }
    if (missing.empty()) break;
    if (cv_.wait_until(lock, deadline) == std::cv_status::timeout) {
      missing.clear();
      for (int s : senders)
        if (!frames_.contains({round, s})) missing.push_back(s);
      if (!missing.empty())
        throw TransportError("round " + std::to_string(round) + " (" + to_string(kind) +
                             "): timed out waiting for process(es) " + join(missing));
      break;
    }
  }

  std::map<int, Frame> out;
  for (int s : senders) {
    auto node = frames_.extract({round, s});
    Frame& f = node.mapped();
    if (f.kind != kind)
      throw ProtocolError("round " + std::to_string(round) + ": expected " + to_string(kind) +
                          " frame from process " + std::to_string(s) + ", got " + to_string(f.kind));
    if (f.world != world)
      throw ProtocolError("roster disagreement: process " + std::to_string(s) + " believes H=" +
                          std::to_string(f.world) + ", expected H=" + std::to_string(world));
    out.emplace(s, std::move(f));
  }
  return out;
}

std::vector<int> Mailbox::unexpected(std::uint64_t round, std::span<const int> expected) const {
  std::lock_guard lock(mu_);
  std::vector<int> out;
  for (auto it = frames_.lower_bound({round, std::numeric_limits<int>::min()});
       it != frames_.end() && it->first.first == round; ++it)
    if (std::find(expected.begin(), expected.end(), it->first.second) == expected.end())
      out.push_back(it->first.second);
  return out;
}

void Mailbox::close_peer(int peer, std::string reason) {
  {
    std::lock_guard lock(mu_);
    closed_.emplace(peer, std::move(reason));
  }
  cv_.notify_all();
}

void Mailbox::abort(std::string reason) {
  {
    std::lock_guard lock(mu_);
    if (!failure_) failure_ = std::move(reason);
  }
  cv_.notify_all();
}

Transport::Transport(int rank, int world, std::chrono::milliseconds timeout)
    : rank_(rank), world_(world), timeout_(timeout), last_posted_(static_cast<std::size_t>(world), 0) {
  if (world <= 0) throw std::invalid_argument("transport: world size must be positive");
  if (rank < 0 || rank >= world) throw std::invalid_argument("transport: rank out of range");
}

std::vector<int> Transport::full_roster() const {
  std::vector<int> r(static_cast<std::size_t>(world_));
  for (int i = 0; i < world_; ++i) r[static_cast<std::size_t>(i)] = i;
  return r;
}

std::string Transport::where() const {
  return "process " + std::to_string(rank_) + ", round " + std::to_string(round_);
}

void Transport::begin(Pending p, const char* op) {
  if (pending_ != Pending::none)
    throw std::logic_error(std::string("transport: ") + op + " while a previous round is uncollected");
  pending_ = p;
  ++round_;
}

void Transport::expect(Pending p, const char* op) {
  if (pending_ != p) throw std::logic_error(std::string("transport: ") + op + " without matching post");
  pending_ = Pending::none;
}

void Transport::check_peer(int peer) const {
  if (peer < 0 || peer >= world_)
    throw ProtocolError(where() + ": peer " + std::to_string(peer) + " outside roster of " +
                        std::to_string(world_));
}

void Transport::post_counts(std::span<const std::uint64_t> outgoing, std::span<const int> send_peers) {
  if (outgoing.size() != static_cast<std::size_t>(world_))
    throw ProtocolError(where() + ": counts vector has " + std::to_string(outgoing.size()) +
                        " entries for H=" + std::to_string(world_));
  for (std::size_t p = 0; p < outgoing.size(); ++p)
    if (outgoing[p] != 0 && std::find(send_peers.begin(), send_peers.end(), static_cast<int>(p)) == send_peers.end())
      throw ProtocolError(where() + ": nonzero counter toward process " + std::to_string(p) +
                          " which is not in the send roster");
  begin(Pending::counts, "post_counts");
  std::fill(last_posted_.begin(), last_posted_.end(), 0);
  for (int peer : send_peers) {
    check_peer(peer);
    const std::uint64_t c = outgoing[static_cast<std::size_t>(peer)];
    last_posted_[static_cast<std::size_t>(peer)] = c;
    Frame f{round_, FrameKind::counts, static_cast<std::uint32_t>(rank_), static_cast<std::uint32_t>(world_), {}};
    put_u64(f.body, c);
    if (tap_) tap_({round_, FrameKind::counts, rank_, peer, c, 0});
    deliver(peer, std::move(f));
  }
}

Counts Transport::collect_counts(std::span<const int> recv_peers) {
  expect(Pending::counts, "collect_counts");
  Counts in(static_cast<std::size_t>(world_), 0);
  auto frames = inbox_.take(round_, FrameKind::counts, static_cast<std::uint32_t>(world_), recv_peers, timeout_);
  for (auto& [peer, f] : frames) {
    if (f.body.size() != 8)
      throw ProtocolError(where() + ": counts frame from process " + std::to_string(peer) + " has " +
                          std::to_string(f.body.size()) + " bytes");
    in[static_cast<std::size_t>(peer)] = ByteReader(f.body).u64();
  }
  return in;
}

void Transport::post_payloads(Payloads outgoing, std::size_t record_size) {
  begin(Pending::payload, "post_payloads");
  for (const auto& [peer, bytes] : outgoing) {
    check_peer(peer);
    const std::uint64_t announced = last_posted_[static_cast<std::size_t>(peer)];
    if (announced == 0)
      throw ProtocolError(where() + ": payload toward process " + std::to_string(peer) +
                          " whose announced counter is zero");
    if (bytes.size() != announced * record_size)
      throw ProtocolError(where() + ": payload toward process " + std::to_string(peer) + " has " +
                          std::to_string(bytes.size()) + " bytes, announced " + std::to_string(announced) +
                          " records of " + std::to_string(record_size));
  }
  for (std::size_t p = 0; p < last_posted_.size(); ++p)
    if (last_posted_[p] != 0 && !outgoing.contains(static_cast<int>(p)))
      throw ProtocolError(where() + ": announced " + std::to_string(last_posted_[p]) +
                          " records toward process " + std::to_string(p) + " but sent none");

  for (auto& [peer, bytes] : outgoing) {
    if (tap_) tap_({round_, FrameKind::payload, rank_, peer, 0, bytes.size()});
    deliver(peer, Frame{round_, FrameKind::payload, static_cast<std::uint32_t>(rank_),
                        static_cast<std::uint32_t>(world_), std::move(bytes)});
  }
}

Payloads Transport::collect_payloads(const Counts& expected, std::size_t record_size) {
  expect(Pending::payload, "collect_payloads");
  if (expected.size() != static_cast<std::size_t>(world_))
    throw ProtocolError(where() + ": expected-counts vector has wrong size");
  std::vector<int> senders;
  for (std::size_t p = 0; p < expected.size(); ++p)
    if (expected[p] != 0) senders.push_back(static_cast<int>(p));

  auto frames = inbox_.take(round_, FrameKind::payload, static_cast<std::uint32_t>(world_), senders, timeout_);
  Payloads out;
  for (auto& [peer, f] : frames) {
    const std::uint64_t want = expected[static_cast<std::size_t>(peer)] * record_size;
    if (f.body.size() != want)
      throw ProtocolError("count/payload mismatch from process " + std::to_string(peer) + " to process " +
                          std::to_string(rank_) + ": announced " +
                          std::to_string(expected[static_cast<std::size_t>(peer)]) + " records (" +
                          std::to_string(want) + " bytes), received " + std::to_string(f.body.size()) +
                          " bytes");
    out.emplace(peer, std::move(f.body));
  }
  if (auto extra = inbox_.unexpected(round_, senders); !extra.empty())
    throw ProtocolError(where() + ": payload received on zero-count pair(s) from process(es) " + join(extra));
  return out;
}

void Transport::post_barrier() {
  begin(Pending::barrier, "post_barrier");
  for (int peer = 0; peer < world_; ++peer) {
    if (tap_) tap_({round_, FrameKind::barrier, rank_, peer, 0, 0});
    deliver(peer, Frame{round_, FrameKind::barrier, static_cast<std::uint32_t>(rank_),
                        static_cast<std::uint32_t>(world_), {}});
  }
}

double Transport::collect_barrier() {
  expect(Pending::barrier, "collect_barrier");
  const auto start = std::chrono::steady_clock::now();
  const auto roster = full_roster();
  inbox_.take(round_, FrameKind::barrier, static_cast<std::uint32_t>(world_), roster, timeout_);
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

Counts Transport::alltoall_counts(std::span<const std::uint64_t> outgoing, std::span<const int> peers) {
  return alltoall_counts(outgoing, peers, peers);
}

Counts Transport::alltoall_counts(std::span<const std::uint64_t> outgoing, std::span<const int> send_peers,
                                  std::span<const int> recv_peers) {
  post_counts(outgoing, send_peers);
  return collect_counts(recv_peers);
}

Payloads Transport::exchange_payloads(Payloads outgoing, const Counts& expected, std::size_t record_size) {
  post_payloads(std::move(outgoing), record_size);
  return collect_payloads(expected, record_size);
}

double Transport::barrier() {
  post_barrier();
  return collect_barrier();
}

}  // namespace dpsnn
