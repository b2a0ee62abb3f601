//
// Copyright 2026 The crowdcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CROWDCOUNT_RANDOM_H_
#define CROWDCOUNT_RANDOM_H_

#include <cstdint>
#include <random>

namespace crowdcount {

namespace internal {

// Finalizer of the splitmix64 generator (Vigna). Used to decorrelate
// derived stream seeds from the master seed.
constexpr std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace internal

// Deterministic pseudo-random stream. Identical seeds produce identical
// draw sequences on every platform: the engine is the standard-specified
// mt19937_64 and all floating-point mappings below are defined directly
// on the raw 64-bit output rather than through std distributions, whose
// algorithms are implementation-defined.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t NextU64() { return engine_(); }

  // Uniform double in [0, 1), 53 bits of precision.
  double NextUnit() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in the open interval (0, 1); the lattice is symmetric
  // about 1/2, so inverse-CDF transforms of symmetric distributions are
  // exactly symmetric.
  double NextUnitOpen() {
    return (static_cast<double>(NextU64() >> 11) + 0.5) * 0x1.0p-53;
  }

  bool Bernoulli(double bias) { return NextUnit() < bias; }

  // Independent child stream. Children with distinct ids are decorrelated
  // from each other and from the parent, and depend only on (seed, id),
  // never on how much of the parent stream has been consumed.
  RandomSource Fork(std::uint64_t stream_id) const {
    return RandomSource(
        internal::SplitMix64(internal::SplitMix64(seed_) ^
                             internal::SplitMix64(stream_id ^ 0xD1B54A32D192ED03ULL)));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace crowdcount

#endif  // CROWDCOUNT_RANDOM_H_
