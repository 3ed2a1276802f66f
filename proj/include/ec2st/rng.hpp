#pragma once

#include <cstdint>

namespace ec2st {

// Finalizer from splitmix64. Decorrelates nearby inputs well enough that we
// can build a whole seed tree out of cheap integer arithmetic.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Every consumer of randomness gets its seed through derive_seed so that the
// amount of parallelism, the order replications finish in, and unrelated code
// paths all leave the streams untouched.  Roles keep e.g. the training
// shuffle of replication 7 independent from the data stream of replication 7.
enum class SeedRole : std::uint64_t {
  kStream = 1,       // data generator for one replication
  kBatch = 2,        // one batch within a stream
  kTrain = 3,        // classifier init + minibatch shuffling
  kPermutation = 4,  // label permutations in the baseline tests
  kSplit = 5,        // train/val/test splits
  kShuffle = 6,      // batch-order shuffles
  kPool = 7,         // pooling/label assignment
};

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index,
                                 SeedRole role) {
  constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ull;
  std::uint64_t z = master + kGolden * (index + 1);
  z = mix64(z);
  z += kGolden * (static_cast<std::uint64_t>(role) + 1);
  return mix64(z);
}

}  // namespace ec2st
