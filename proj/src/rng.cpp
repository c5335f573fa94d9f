#include "capsrl/rng.hpp"

#include <cmath>

#include "capsrl/errors.hpp"
#include "capsrl/io.hpp"

namespace capsrl {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer; also used to decorrelate seed/stream/tag material.
std::uint64_t mix64(std::uint64_t z) {
  z += kGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

RngSeed derive_stream(RngSeed base, std::string_view tag, std::uint64_t index) {
  // stream = hash(seed, purpose-tag, index); the seed itself is untouched so
  // every derived stream remains reproducible from the single root seed.
  std::uint64_t h = fnv1a64(tag);
  h = mix64(h ^ mix64(base.stream));
  h = mix64(h ^ mix64(index));
  return RngSeed{base.seed, h};
}

Rng::Rng(RngSeed key) : state_(mix64(mix64(key.seed) ^ mix64(key.stream ^ 0xA3EC4D1F53C2B9E7ULL))) {}

Rng::Rng(RngSeed base, std::string_view tag, std::uint64_t index)
    : Rng(derive_stream(base, tag, index)) {}

std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += kGamma);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::next_real() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
  if (bound == 0) {
    throw InternalError("Rng::next_below: bound must be >= 1");
  }
  // Reject draws in the short final cycle so every residue is equally likely.
  const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) {
      return r % bound;
    }
  }
}

int Rng::next_int(int lo, int hi) {
  if (hi < lo) {
    throw InternalError("Rng::next_int: empty range");
  }
  const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  return lo + static_cast<int>(next_below(span));
}

std::size_t Rng::categorical(const std::vector<double>& probs) {
  if (probs.empty()) {
    throw InternalError("Rng::categorical: empty distribution");
  }
  const double r = next_real();
  double cum = 0.0;
  std::size_t last_positive = 0;
  bool seen_positive = false;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      last_positive = i;
      seen_positive = true;
    }
    cum += probs[i];
    if (r < cum) {
      return probs[i] > 0.0 ? i : (seen_positive ? last_positive : i);
    }
  }
  // r landed in the round-off tail; return the last index with mass.
  return seen_positive ? last_positive : probs.size() - 1;
}

double Rng::next_exponential() {
  const double u = next_real();
  const double w = -std::log1p(-u);
  return w < 1e-12 ? 1e-12 : w;
}

}  // namespace capsrl
