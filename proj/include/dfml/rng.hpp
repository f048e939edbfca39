/*
 * Copyright 2026 The dfml Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dfml {

using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Child seed for a named stage; distinct names give unrelated streams.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  return detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(stage)));
}

/// Child seed for an indexed sub-stream (epoch, patient, frame, ...).
template <typename... Ints>
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t first,
                                    Ints... rest) {
  std::uint64_t h = detail::splitmix64(seed + 0x632be59bd9b4e019ULL * (first + 1));
  ((h = detail::splitmix64(h + 0x632be59bd9b4e019ULL *
                                   (static_cast<std::uint64_t>(rest) + 1))),
   ...);
  return h;
}

}  // namespace dfml
