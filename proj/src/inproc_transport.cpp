#include "dpsnn/inproc_transport.hpp"

namespace dpsnn {

class InprocFabric::Endpoint final : public Transport {
 public:
  Endpoint(InprocFabric& fabric, int rank, int world, std::chrono::milliseconds timeout)
      : Transport(rank, world, timeout), fabric_(fabric) {}

  Mailbox& mailbox() { return inbox(); }

 protected:
  void deliver(int peer, Frame frame) override {
    fabric_.endpoints_[static_cast<std::size_t>(peer)]->mailbox().push(std::move(frame));
  }

 private:
  InprocFabric& fabric_;
};

InprocFabric::InprocFabric(int world, std::chrono::milliseconds timeout) {
  if (world <= 0) throw std::invalid_argument("InprocFabric: world size must be positive");
  endpoints_.reserve(static_cast<std::size_t>(world));
  for (int r = 0; r < world; ++r) endpoints_.push_back(std::make_unique<Endpoint>(*this, r, world, timeout));
}

InprocFabric::~InprocFabric() = default;

Transport& InprocFabric::endpoint(int rank) { return *endpoints_.at(static_cast<std::size_t>(rank)); }

void InprocFabric::set_tap(const TrafficTap& tap) {
  for (auto& e : endpoints_) e->set_tap(tap);
}

void InprocFabric::abort(const std::string& reason) {
  for (auto& e : endpoints_) e->abort(reason);
}

}  // namespace dpsnn
