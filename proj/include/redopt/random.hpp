// Copyright 2026 The redopt Authors
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

#ifndef REDOPT_RANDOM_HPP
#define REDOPT_RANDOM_HPP

#include <bit>
#include <cstdint>
#include <random>
#include <string_view>

namespace redopt {

/// Explicit seed stream threaded through every randomized operation.
using Rng = std::mt19937_64;

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline constexpr std::uint64_t mix(std::uint64_t state, std::uint64_t value) {
  return splitmix64(state ^ splitmix64(value));
}

inline std::uint64_t to_word(std::string_view s) { return fnv1a(s); }
inline std::uint64_t to_word(const char* s) { return fnv1a(s); }
inline std::uint64_t to_word(double d) { return std::bit_cast<std::uint64_t>(d); }
template <typename T>
  requires std::is_integral_v<T>
inline std::uint64_t to_word(T v) { return static_cast<std::uint64_t>(v); }

}  // namespace detail

/// Hash chain over heterogeneous parts (integers, doubles, strings). Stable
/// across runs and platforms, so partial re-runs reproduce the same streams.
template <typename... Parts>
std::uint64_t derive_seed(std::uint64_t base, const Parts&... parts) {
  std::uint64_t state = detail::splitmix64(base);
  ((state = detail::mix(state, detail::to_word(parts))), ...);
  return state;
}

}  // namespace redopt

#endif  // REDOPT_RANDOM_HPP
