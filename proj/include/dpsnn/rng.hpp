#pragma once

#include <cstdint>
#include <initializer_list>

namespace dpsnn {

/// Counter-based keyed random stream.
///
/// The stream is a pure function of (seed, key...): the key words are folded
/// into a 64-bit stream id with the SplitMix64 finalizer, and the n-th draw is
/// mix64(id + n * golden_gamma). Any entity (a synapse, a stimulus event) can
/// therefore address its own randomness without sharing generator state, which
/// is what makes network construction independent of the process count.
///
/// The exact mixing constants are part of the output format: changing them
/// changes every generated network and rastergram.
class KeyedStream {
 public:
  KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> key);

  std::uint64_t next();

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint32_t uniform(std::uint32_t bound);

  /// Uniform integer in [lo, hi].
  std::uint32_t uniform_between(std::uint32_t lo, std::uint32_t hi);

  static std::uint64_t mix64(std::uint64_t z);

 private:
  std::uint64_t id_;
  std::uint64_t counter_ = 0;
};

// Key domains, so that different kinds of draws never share a stream.
inline constexpr std::uint64_t kSynapseDomain = 0x53594e41505345ULL;   // "SYNAPSE"
inline constexpr std::uint64_t kThalamicDomain = 0x5448414c414dULL;    // "THALAM"

}  // namespace dpsnn
