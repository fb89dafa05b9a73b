// av2vec/rng.hpp

// Copyright 2026  AV2vec Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef AV2VEC_RNG_HPP_
#define AV2VEC_RNG_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace av2vec {

// All randomness in the project goes through this generator. std::
// distributions are implementation-defined, which would break the
// bit-reproducibility contracts, so the distributions are hand-rolled.
//
// Streams are derived, not advanced: a stream key is a list of 64-bit words
// (seed, utterance hash, role tag, epoch, ...) hashed through splitmix64.
// Two streams with different keys are independent for every practical
// purpose, and any stream can be reconstructed from its key alone.

inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a; used to key per-utterance streams by id.
inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  Rng() : Rng(0) {}

  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
  }

  // Deterministic stream derivation from (seed, key words...).
  static Rng derive(uint64_t seed, std::initializer_list<uint64_t> keys) {
    uint64_t sm = seed;
    uint64_t acc = splitmix64(sm);
    for (uint64_t k : keys) {
      sm = acc ^ (k + 0x9e3779b97f4a7c15ull);
      acc = splitmix64(sm);
    }
    Rng r;
    uint64_t st = acc;
    for (auto& w : r.s_) w = splitmix64(st);
    return r;
  }

  // xoshiro256**
  uint64_t next_u64() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // [0, n); multiply-shift, bias < n / 2^64.
  int64_t uniform_int(int64_t n) {
    using u128 = unsigned __int128;
    return static_cast<int64_t>(
        (u128(next_u64()) * u128(static_cast<uint64_t>(n))) >> 64);
  }

  // Box-Muller, no cached spare (keeps the state equal to the four words).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::array<uint64_t, 4> s_{};
};

}  // namespace av2vec

#endif  // AV2VEC_RNG_HPP_
