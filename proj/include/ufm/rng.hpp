#pragma once

#include <cstdint>
#include <span>

namespace ufm {

// PCG32 (XSH-RR variant, O'Neill 2014) with explicit stream selection.
//
// All randomness in the project flows through this generator and the
// distribution helpers below, which are written out by hand so that a given
// (seed, stream) pair produces the same bytes on every platform. The
// standard library distributions are implementation-defined and are not used.
class Pcg32 {
 public:
  using result_type = std::uint32_t;

  explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL,
                 std::uint64_t stream = 0xda3e39cb94b95bdbULL);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform in the open interval (0, 1).
  double uniform_open();
  // Uniform integer in [0, bound), unbiased (Lemire's rejection method).
  std::uint32_t below(std::uint32_t bound);
  // Exponential with the given rate; always strictly positive.
  double exponential(double rate);
  // Index drawn proportionally to the non-negative weights. The weights need
  // not sum to one.
  int categorical(std::span<const double> weights);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }
  result_type operator()() { return next_u32(); }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

// Mixes a base seed with a sub-stream label (SplitMix64 finalizer), used to
// derive independent streams such as "seed xor window index".
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t label);

}  // namespace ufm
