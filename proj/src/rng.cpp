#include "dpsnn/rng.hpp"

#include <stdexcept>

namespace dpsnn {

namespace {
constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t KeyedStream::mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

KeyedStream::KeyedStream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = mix64(seed + kGamma);
  std::uint64_t i = 1;
  for (std::uint64_t k : key) {
    h = mix64(h ^ mix64(k + i * kGamma));
    ++i;
  }
  id_ = h;
}

std::uint64_t KeyedStream::next() {
  ++counter_;
  return mix64(id_ + counter_ * kGamma);
}

std::uint32_t KeyedStream::uniform(std::uint32_t bound) {
  if (bound == 0) throw std::invalid_argument("KeyedStream::uniform: bound must be > 0");
  // Lemire's multiply-shift with rejection: unbiased, and deterministic since
  // rejected draws just advance the counter.
  const std::uint64_t threshold = (std::uint64_t{1} << 32) % bound;
  for (;;) {
    const std::uint64_t x = next() >> 32;
    const std::uint64_t m = x * bound;
    if ((m & 0xffffffffULL) >= threshold) return static_cast<std::uint32_t>(m >> 32);
  }
}

std::uint32_t KeyedStream::uniform_between(std::uint32_t lo, std::uint32_t hi) {
  if (hi < lo) throw std::invalid_argument("KeyedStream::uniform_between: hi < lo");
  return lo + uniform(hi - lo + 1);
}

}  // namespace dpsnn
