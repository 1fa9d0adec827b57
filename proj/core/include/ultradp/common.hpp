// Copyright 2026 The UltraDP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ultradp {

using NodeId = std::uint32_t;
using Real = double;

// Error hierarchy. Every failure the library reports derives from Error so
// callers (notably the CLI) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MalformedInputError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class ArgumentError : public Error {
 public:
  using Error::Error;
};
class DomainError : public Error {
 public:
  using Error::Error;
};
class SamplingError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// SplitMix64 finalizer; the mixing step behind all seed derivation.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based stream splitting: (seed, tag, counter) -> independent seed.
/// Every random component derives its own stream this way from the run seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                    std::uint64_t counter = 0) noexcept {
  return mix64(mix64(seed ^ hash_tag(tag)) + mix64(counter + 0x632be59bd9b4e019ULL));
}

/// Random source with platform-independent integer/real mappings. The
/// standard distributions are implementation-defined, so they are avoided
/// wherever bit-reproducibility matters.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view tag, std::uint64_t counter = 0)
      : engine_(derive_seed(seed, tag, counter)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }

  /// Uniform integer in [0, n); n must be positive.
  std::uint64_t index(std::uint64_t n) {
    // Lemire-style rejection to stay unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = 0;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle using Rng::index (std::shuffle is not portable).
template <typename Container>
void shuffle(Container& c, Rng& rng) {
  const auto n = c.size();
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.index(i));
    using std::swap;
    swap(c[i - 1], c[j]);
  }
}

}  // namespace ultradp
