/* Copyright 2026 The tbvi Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tbvi/rng.hpp"

#include <cmath>
#include <numbers>

namespace tbvi {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

// 53 random bits mapped to the open interval (0, 1).
inline double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kPhiloxM0, ctr[0], hi0, lo0);
    mulhilo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream)
    : seed_(seed) {
  std::uint64_t h = 0x6A09E667F3BCC908ULL;
  for (std::uint64_t id : stream) h = splitmix64(h ^ splitmix64(id));
  stream_ = h;
}

CounterRng::CounterRng(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> stream)
    : seed_(seed) {
  std::uint64_t h = splitmix64(0x6A09E667F3BCC908ULL ^ static_cast<std::uint64_t>(tag));
  for (std::uint64_t id : stream) h = splitmix64(h ^ splitmix64(id));
  stream_ = h;
}

CounterRng CounterRng::substream(std::uint64_t id) const {
  CounterRng child;
  child.seed_ = seed_;
  child.stream_ = splitmix64(stream_ ^ splitmix64(id + 0x5851F42D4C957F2DULL));
  return child;
}

std::array<std::uint32_t, 4> CounterRng::block(std::uint64_t block_index) const {
  const std::array<std::uint32_t, 4> ctr = {
      static_cast<std::uint32_t>(block_index), static_cast<std::uint32_t>(block_index >> 32),
      static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  return philox4x32(ctr, key);
}

std::uint64_t CounterRng::u64_at(std::uint64_t index) const {
  const auto r = block(index >> 1);
  const std::size_t half = (index & 1U) * 2;
  return (static_cast<std::uint64_t>(r[half + 1]) << 32) | r[half];
}

double CounterRng::uniform_at(std::uint64_t index) const { return to_unit(u64_at(index)); }

double CounterRng::normal_at(std::uint64_t index) const {
  const auto r = block(index >> 1);
  const double u1 = to_unit((static_cast<std::uint64_t>(r[1]) << 32) | r[0]);
  const double u2 = to_unit((static_cast<std::uint64_t>(r[3]) << 32) | r[2]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index & 1U) ? radius * std::sin(angle) : radius * std::cos(angle);
}

void CounterRng::normals_at(std::uint64_t first, std::span<double> out) const {
  std::size_t i = 0;
  if ((first & 1U) && i < out.size()) out[i++] = normal_at(first);
  for (; i + 1 < out.size(); i += 2) {
    const auto r = block((first + i) >> 1);
    const double u1 = to_unit((static_cast<std::uint64_t>(r[1]) << 32) | r[0]);
    const double u2 = to_unit((static_cast<std::uint64_t>(r[3]) << 32) | r[2]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    out[i] = radius * std::cos(angle);
    out[i + 1] = radius * std::sin(angle);
  }
  if (i < out.size()) out[i] = normal_at(first + i);
}

__extension__ using u128 = unsigned __int128;

std::uint64_t CounterRng::below(std::uint64_t bound) {
  // Lemire-style rejection keeps the draw unbiased.
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    const u128 m = static_cast<u128>(x) * bound;
    if (static_cast<std::uint64_t>(m) >= threshold) return static_cast<std::uint64_t>(m >> 64);
  }
}

}  // namespace tbvi
