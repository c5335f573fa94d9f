#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace capsrl {

// A (seed, stream) pair identifying one deterministic random sequence.
// Sub-streams are derived by hashing a purpose tag and an index into the
// stream field, so parallel workers can draw independent sequences without
// shared mutable state and results are bit-identical across platforms.
struct RngSeed {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

RngSeed derive_stream(RngSeed base, std::string_view tag, std::uint64_t index);

// Counter-based generator (SplitMix64 walk from a hashed starting point).
// Hand-rolled distributions: std::uniform_* are not bit-reproducible across
// standard library implementations, and reproducibility is a hard contract.
class Rng {
 public:
  explicit Rng(RngSeed key);
  Rng(RngSeed base, std::string_view tag, std::uint64_t index);

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53-bit resolution.
  double next_real();

  // Uniform on {0, ..., bound-1}; modulo-rejection to avoid bias. bound >= 1.
  std::uint64_t next_below(std::uint64_t bound);

  int next_int(int lo, int hi);  // inclusive on both ends

  // Samples an index proportionally to probs (assumed to sum to ~1).
  std::size_t categorical(const std::vector<double>& probs);

  // Standard exponential draw, floored at 1e-12 so derived Dirichlet-style
  // weights stay strictly positive.
  double next_exponential();

 private:
  std::uint64_t state_;
};

}  // namespace capsrl
