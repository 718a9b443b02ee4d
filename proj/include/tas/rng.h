// Copyright 2026 The TAS Toolkit Authors
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

#ifndef TAS_RNG_H_
#define TAS_RNG_H_

#include <cstdint>
#include <random>

namespace tas {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
inline uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the index-th independent stream under a master seed. Streams do
// not depend on the order in which they are requested.
inline uint64_t DeriveSeed(uint64_t master, uint64_t index) {
  return master ^ Mix64(index);
}

// Named sub-streams of a run's master seed.
enum class SeedStream : uint64_t {
  kSynthetic = 0x5e001,
  kWholeTraining = 0x5e002,
  kSourceTasks = 0x5e003,
  kApproxHead = 0x5e004,
  kApproxTraining = 0x5e005,
  kFinetune = 0x5e006,
  kEvaluation = 0x5e007,
  kAblationRandom = 0x5e008,
  kNetworkInit = 0x5e009,
  kTheoremData = 0x5e00a,
  kTheoremNoise = 0x5e00b,
};

inline uint64_t DeriveSeed(uint64_t master, SeedStream stream) {
  return DeriveSeed(master, static_cast<uint64_t>(stream));
}

}  // namespace tas

#endif  // TAS_RNG_H_
