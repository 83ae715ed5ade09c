// Copyright 2026 The ANI Authors
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

#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ani {

// Seeded generator with explicitly coded distributions so that a given seed
// reproduces the same stream on any standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

  uint64_t seed() const { return seed_; }
  uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n).
  uint64_t next_below(uint64_t n);

  double uniform();                    // [0, 1)
  double uniform(double a, double b);  // [a, b)
  double gaussian();                   // standard normal, Box-Muller

  void fill_gaussian(float* out, int64_t n);
  void fill_uniform(float* out, int64_t n, float a, float b);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child stream: distinct ids give decorrelated seeds.
  Rng derive(uint64_t stream_id) const;

 private:
  std::mt19937_64 gen_;
  uint64_t seed_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used for config hashing and stream derivation.
uint64_t mix64(uint64_t x);

}  // namespace ani
