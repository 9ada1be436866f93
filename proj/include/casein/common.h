// Copyright 2026 The Casein Authors
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

#ifndef CASEIN_COMMON_H_
#define CASEIN_COMMON_H_

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace casein {

// Checkpoint and dataset containers store raw little-endian float32 payloads.
static_assert(std::endian::native == std::endian::little,
              "casein containers assume a little-endian host");

// Invalid shapes, arguments, or configuration values. CLI exit code 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable or malformed files; message carries the path. CLI exit code 4.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A required checkpoint or data artifact is absent. CLI exit code 3.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN/Inf surfaced during training or evaluation. CLI exit code 4.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Deterministic RNG with explicit sampling code so that streams are
// reproducible byte-for-byte across compilers and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : base_seed_(seed), state_(splitmix64(seed)) {}

  uint64_t next_u64() {
    state_ = state_ * 6364136223846793005ull + 1442695040888963407ull;
    uint64_t z = state_;
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
    return z ^ (z >> 33);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; one spare value cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [lo, hi).
  int range_int(int lo, int hi) {
    if (hi <= lo) throw ConfigError("Rng::range_int: empty range");
    const uint64_t span = static_cast<uint64_t>(hi - lo);
    return lo + static_cast<int>(next_u64() % span);
  }

  // Derived independent stream; forking with distinct keys never collides
  // with the parent stream.
  Rng fork(uint64_t key) const {
    return Rng(splitmix64(base_seed_ ^ (0xA0761D6478BD642Full * (key + 1))));
  }

 private:
  uint64_t base_seed_;
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace casein

#endif  // CASEIN_COMMON_H_
