#pragma once

#include <array>
#include <cstdint>

namespace abc {

// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as easy
// as 1, 2, 3", SC'11). Pure function of (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Stream tags keep the counter spaces of unrelated consumers disjoint.
enum class StreamTag : std::uint32_t {
  Data = 1,
  Training = 2,
  Sampling = 3,
  Init = 4,
  Permutation = 5,
  Test = 6,
  Validation = 7,
};

// A reproducible random stream addressed by (seed, tag, index). Two streams
// with the same address produce the same sequence regardless of which thread
// draws them or in which order.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, StreamTag tag, std::uint64_t index);

  std::uint32_t next_u32();
  // Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t blocks_drawn() const { return block_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint32_t tag_;
  std::uint64_t index_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace abc
