// Copyright 2026 The Segleak Authors
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

#ifndef SEGLEAK_RNG_H_
#define SEGLEAK_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

namespace segleak {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to decorrelate derived seeds.
inline uint64_t MixSeed(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for an indexed item (image, step, layer) under `seed`.
inline uint64_t DeriveSeed(uint64_t seed, uint64_t index) {
  return MixSeed(seed ^ MixSeed(index + 0x632be59bd9b4e019ULL));
}

// Child seed for a named substream ("data", "victim", ...). FNV-1a over the
// name keeps the mapping stable across builds.
inline uint64_t DeriveSeed(uint64_t seed, std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return MixSeed(seed ^ h);
}

}  // namespace segleak

#endif  // SEGLEAK_RNG_H_
