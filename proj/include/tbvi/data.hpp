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

#include "tbvi/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tbvi {

enum class Split { kTrain, kTest };

std::string to_string(Split split);

// Grayscale images scaled to [0, 1], one row of rows*cols pixels per item.
struct ImageSet {
  std::string source_name;
  Split split = Split::kTrain;
  Index rows = 0;
  Index cols = 0;
  Matrix pixels;  // count x (rows * cols)

  [[nodiscard]] Index count() const { return pixels.rows(); }
  [[nodiscard]] Index pixel_count() const { return rows * cols; }
  // First `n` items (or all, when fewer exist).
  [[nodiscard]] ImageSet head(Index n) const;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

// Big-endian IDX, unsigned byte, three dimensions.
ImageSet parse_idx(std::span<const std::uint8_t> bytes, std::string source_name = {},
                   Split split = Split::kTrain);
ImageSet read_idx_file(const std::filesystem::path& path, std::string source_name = {},
                       Split split = Split::kTrain);
// Intensities are quantized back to bytes with round(255 * p).
std::vector<std::uint8_t> encode_idx(const ImageSet& images);
void write_idx_file(const std::filesystem::path& path, const ImageSet& images);

// {dataset}-{split}-images.idx3-ubyte
std::filesystem::path idx_path(const std::filesystem::path& data_dir, const std::string& dataset,
                               Split split);
ImageSet load_dataset(const std::filesystem::path& data_dir, const std::string& dataset, Split split);

enum class Binarization { kStochastic, kThreshold };

struct BinaryBatch {
  Index epoch_index = 0;
  std::uint64_t rng_stream_id = 0;
  std::vector<Index> items;  // source indices, in batch order
  Matrix data;               // batch_size x pixels, entries exactly 0 or 1

  [[nodiscard]] Index batch_size() const { return data.rows(); }
};

// Binarized copy of item `item` for epoch `epoch`. Stochastic mode draws
// pixel p from the (seed, epoch, item) stream at position p.
void binarize_item(const ImageSet& images, Index item, Binarization mode, std::uint64_t seed,
                   Index epoch, Eigen::Ref<Eigen::RowVectorXd> out);
Matrix binarize(const ImageSet& images, Binarization mode, std::uint64_t seed, Index epoch);

// Permutation of [0, n) keyed by (seed, epoch); Fisher-Yates over a counter stream.
std::vector<Index> epoch_permutation(Index n, std::uint64_t seed, Index epoch);

// Ordered minibatches covering every image once; the last batch may be short.
std::vector<BinaryBatch> batches(const ImageSet& images, Index batch_size, Index epoch,
                                 std::uint64_t shuffle_seed,
                                 Binarization mode = Binarization::kStochastic);

// Deterministic pen-stroke images (28x28) for runs without a real dataset.
ImageSet synthetic_strokes(Index count, std::uint64_t seed, std::string source_name = "synthetic",
                           Split split = Split::kTrain);

}  // namespace tbvi
