#ifndef DQS_RANDOM_HPP
#define DQS_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace dqs {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent random streams fanned out from one master seed.
enum class Stream : std::uint64_t {
  init = 1,
  environment = 2,
  exploration = 3,
  learner = 4,
  mutation = 5,
  baseline = 6,
  centroids = 7,
};

/// Counter-based seed derivation: the seed for (stream, counter) depends only
/// on those two values and the parent, never on how many other streams exist.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream,
                                    std::uint64_t counter = 0) noexcept {
  return mix64(mix64(parent ^ mix64(stream)) + mix64(counter ^ 0x5851f42d4c957f2dULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, Stream stream,
                                    std::uint64_t counter = 0) noexcept {
  return derive_seed(parent, static_cast<std::uint64_t>(stream), counter);
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

}  // namespace dqs

#endif  // DQS_RANDOM_HPP
