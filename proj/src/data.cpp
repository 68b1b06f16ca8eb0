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

#include "tbvi/data.hpp"

#include "tbvi/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace tbvi {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
         (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
         static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "test"; }

ImageSet ImageSet::head(Index n) const {
  ImageSet out = *this;
  const Index keep = std::min(n, count());
  out.pixels = pixels.topRows(keep);
  return out;
}

ImageSet parse_idx(std::span<const std::uint8_t> bytes, std::string source_name, Split split) {
  if (bytes.size() < 16) throw LengthError("IDX: header truncated");
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError("IDX: expected magic 0x00000803 (3-D unsigned byte), got 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }());
  }
  const std::uint64_t count = read_be32(bytes, 4);
  const std::uint64_t rows = read_be32(bytes, 8);
  const std::uint64_t cols = read_be32(bytes, 12);
  const std::uint64_t payload = count * rows * cols;
  if (bytes.size() - 16 < payload) {
    throw LengthError("IDX: header declares " + std::to_string(payload) + " payload bytes, found " +
                      std::to_string(bytes.size() - 16));
  }
  if (bytes.size() - 16 > payload) throw LengthError("IDX: trailing bytes after payload");
  ImageSet set;
  set.source_name = std::move(source_name);
  set.split = split;
  set.rows = static_cast<Index>(rows);
  set.cols = static_cast<Index>(cols);
  set.pixels.resize(static_cast<Index>(count), static_cast<Index>(rows * cols));
  const std::uint8_t* src = bytes.data() + 16;
  double* dst = set.pixels.data();
  for (std::uint64_t i = 0; i < payload; ++i) dst[i] = src[i] / 255.0;
  return set;
}

ImageSet read_idx_file(const std::filesystem::path& path, std::string source_name, Split split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_idx(bytes, std::move(source_name), split);
}

std::vector<std::uint8_t> encode_idx(const ImageSet& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + static_cast<std::size_t>(images.pixels.size()));
  write_be32(out, kIdxImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.count()));
  write_be32(out, static_cast<std::uint32_t>(images.rows));
  write_be32(out, static_cast<std::uint32_t>(images.cols));
  const double* src = images.pixels.data();
  for (Index i = 0; i < images.pixels.size(); ++i) {
    const double clamped = std::clamp(src[i], 0.0, 1.0);
    out.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0)));
  }
  return out;
}

void write_idx_file(const std::filesystem::path& path, const ImageSet& images) {
  const auto bytes = encode_idx(images);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

std::filesystem::path idx_path(const std::filesystem::path& data_dir, const std::string& dataset,
                               Split split) {
  return data_dir / (dataset + "-" + to_string(split) + "-images.idx3-ubyte");
}

ImageSet load_dataset(const std::filesystem::path& data_dir, const std::string& dataset, Split split) {
  ImageSet set = read_idx_file(idx_path(data_dir, dataset, split), dataset, split);
  if (set.rows != 28 || set.cols != 28) {
    throw FormatError("dataset " + dataset + ": expected 28x28 images, got " +
                      std::to_string(set.rows) + "x" + std::to_string(set.cols));
  }
  return set;
}

void binarize_item(const ImageSet& images, Index item, Binarization mode, std::uint64_t seed,
                   Index epoch, Eigen::Ref<Eigen::RowVectorXd> out) {
  const auto src = images.pixels.row(item);
  if (mode == Binarization::kThreshold) {
    for (Index p = 0; p < src.size(); ++p) out[p] = src[p] >= 0.5 ? 1.0 : 0.0;
    return;
  }
  const CounterRng rng(seed, StreamTag::kBinarize,
                       {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(item)});
  for (Index p = 0; p < src.size(); ++p) {
    out[p] = rng.uniform_at(static_cast<std::uint64_t>(p)) < src[p] ? 1.0 : 0.0;
  }
}

Matrix binarize(const ImageSet& images, Binarization mode, std::uint64_t seed, Index epoch) {
  Matrix out(images.count(), images.pixels.cols());
  for (Index i = 0; i < images.count(); ++i) {
    Eigen::RowVectorXd row(images.pixels.cols());
    binarize_item(images, i, mode, seed, epoch, row);
    out.row(i) = row;
  }
  return out;
}

std::vector<Index> epoch_permutation(Index n, std::uint64_t seed, Index epoch) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  CounterRng rng(seed, StreamTag::kShuffle, {static_cast<std::uint64_t>(epoch)});
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  return order;
}

std::vector<BinaryBatch> batches(const ImageSet& images, Index batch_size, Index epoch,
                                 std::uint64_t shuffle_seed, Binarization mode) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const auto order = epoch_permutation(images.count(), shuffle_seed, epoch);
  std::vector<BinaryBatch> out;
  const Index pixels = images.pixels.cols();
  for (Index start = 0; start < images.count(); start += batch_size) {
    const Index size = std::min(batch_size, images.count() - start);
    BinaryBatch batch;
    batch.epoch_index = epoch;
    batch.rng_stream_id = static_cast<std::uint64_t>(out.size());
    batch.data.resize(size, pixels);
    for (Index b = 0; b < size; ++b) {
      const Index item = order[static_cast<std::size_t>(start + b)];
      batch.items.push_back(item);
      Eigen::RowVectorXd row(pixels);
      binarize_item(images, item, mode, shuffle_seed, epoch, row);
      batch.data.row(b) = row;
    }
    out.push_back(std::move(batch));
  }
  return out;
}

ImageSet synthetic_strokes(Index count, std::uint64_t seed, std::string source_name, Split split) {
  constexpr Index kSide = 28;
  constexpr int kPrototypes = 10;
  struct Segment {
    double x0, y0, x1, y1;
  };
  // Prototype glyphs are shared by every split drawn from the same seed.
  CounterRng proto_rng(seed, StreamTag::kData, {0});
  std::vector<std::vector<Segment>> prototypes(kPrototypes);
  for (auto& glyph : prototypes) {
    const int strokes = 1 + static_cast<int>(proto_rng.below(3));
    for (int s = 0; s < strokes; ++s) {
      glyph.push_back({5 + 18 * proto_rng.uniform(), 5 + 18 * proto_rng.uniform(),
                       5 + 18 * proto_rng.uniform(), 5 + 18 * proto_rng.uniform()});
    }
  }
  ImageSet set;
  set.source_name = std::move(source_name);
  set.split = split;
  set.rows = kSide;
  set.cols = kSide;
  set.pixels = Matrix::Zero(count, kSide * kSide);
  const std::uint64_t split_id = split == Split::kTrain ? 1 : 2;
  for (Index i = 0; i < count; ++i) {
    CounterRng rng(seed, StreamTag::kData, {split_id, static_cast<std::uint64_t>(i)});
    const auto& glyph = prototypes[rng.below(kPrototypes)];
    const double dx = 4.0 * (rng.uniform() - 0.5), dy = 4.0 * (rng.uniform() - 0.5);
    const double width = 1.0 + 0.8 * rng.uniform();
    for (const Segment& seg : glyph) {
      const double ax = seg.x0 + dx + (rng.uniform() - 0.5), ay = seg.y0 + dy + (rng.uniform() - 0.5);
      const double bx = seg.x1 + dx + (rng.uniform() - 0.5), by = seg.y1 + dy + (rng.uniform() - 0.5);
      const double vx = bx - ax, vy = by - ay;
      const double len2 = std::max(vx * vx + vy * vy, 1e-9);
      for (Index r = 0; r < kSide; ++r) {
        for (Index c = 0; c < kSide; ++c) {
          const double px = c + 0.5, py = r + 0.5;
          const double t = std::clamp(((px - ax) * vx + (py - ay) * vy) / len2, 0.0, 1.0);
          const double ex = px - (ax + t * vx), ey = py - (ay + t * vy);
          const double dist = std::sqrt(ex * ex + ey * ey);
          const double ink = std::clamp(width + 0.5 - dist, 0.0, 1.0);
          double& pix = set.pixels(i, r * kSide + c);
          pix = std::max(pix, ink);
        }
      }
    }
  }
  return set;
}

}  // namespace tbvi
