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

#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <span>

namespace tbvi {

// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// Stream tags keep the different consumers of a seed apart.
enum class StreamTag : std::uint64_t {
  kInit = 1,
  kShuffle = 2,
  kBinarize = 3,
  kNoise = 4,
  kNoiseTheta = 5,
  kEval = 6,
  kSnr = 7,
  kData = 8,
};

// Counter-based stream: the value at any position is a pure function of
// (seed, stream ids, position), so draws can be made in any order.
class CounterRng {
 public:
  CounterRng() = default;
  CounterRng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);
  CounterRng(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> stream = {});

  // Derive an independent child stream.
  [[nodiscard]] CounterRng substream(std::uint64_t id) const;

  // Random access. Block i yields two 53-bit uniforms in (0, 1) and the two
  // Box-Muller normals built from them.
  [[nodiscard]] double uniform_at(std::uint64_t index) const;
  [[nodiscard]] double normal_at(std::uint64_t index) const;
  [[nodiscard]] std::uint64_t u64_at(std::uint64_t index) const;
  // out[i] = normal_at(first + i), sharing one block per pair.
  void normals_at(std::uint64_t first, std::span<double> out) const;

  // Sequential interface over the same positions.
  double uniform() { return uniform_at(position_++); }
  double normal() { return normal_at(position_++); }
  std::uint64_t next_u64() { return u64_at(position_++); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] std::uint64_t stream_id() const { return stream_; }
  [[nodiscard]] std::uint64_t position() const { return position_; }
  void seek(std::uint64_t position) { position_ = position; }

 private:
  [[nodiscard]] std::array<std::uint32_t, 4> block(std::uint64_t block_index) const;

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t position_ = 0;
};

}  // namespace tbvi
