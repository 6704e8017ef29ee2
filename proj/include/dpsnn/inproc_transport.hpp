#pragma once

#include <memory>
#include <vector>

#include "dpsnn/transport.hpp"

namespace dpsnn {

/// Reference backend: H endpoints in one address space, delivering frames by
/// moving them straight into the destination mailbox.
class InprocFabric {
 public:
  explicit InprocFabric(int world, std::chrono::milliseconds timeout = kDefaultTransportTimeout);
  ~InprocFabric();

  int size() const { return static_cast<int>(endpoints_.size()); }
  Transport& endpoint(int rank);

  /// Installs the same tap on every endpoint.
  void set_tap(const TrafficTap& tap);
  void abort(const std::string& reason);

 private:
  class Endpoint;
  std::vector<std::unique_ptr<Endpoint>> endpoints_;
};

}  // namespace dpsnn
