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

#include "doctest.h"
#include "tbvi/data.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

using namespace tbvi;

namespace {

std::vector<std::uint8_t> idx_bytes(std::uint32_t magic, std::uint32_t n, std::uint32_t r, std::uint32_t c,
                                    const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> out;
  for (std::uint32_t v : {magic, n, r, c}) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  }
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

}  // namespace

TEST_CASE("parse_idx reads big-endian headers and scales bytes") {
  const auto bytes = idx_bytes(0x00000803, 2, 2, 2, {0, 255, 51, 102, 1, 2, 3, 4});
  const ImageSet set = parse_idx(bytes, "toy", Split::kTest);
  CHECK(set.count() == 2);
  CHECK(set.rows == 2);
  CHECK(set.cols == 2);
  CHECK(set.split == Split::kTest);
  CHECK(set.pixels(0, 0) == 0.0);
  CHECK(set.pixels(0, 1) == 1.0);
  CHECK(set.pixels(0, 2) == doctest::Approx(0.2));
  CHECK(set.pixels(1, 3) == doctest::Approx(4.0 / 255));
}

TEST_CASE("parse_idx rejects bad magic and wrong lengths") {
  CHECK_THROWS_AS(parse_idx(idx_bytes(0x00000801, 1, 1, 1, {0})), FormatError);
  CHECK_THROWS_AS(parse_idx(idx_bytes(0x00000803, 2, 2, 2, {0, 1, 2})), LengthError);
  CHECK_THROWS_AS(parse_idx(idx_bytes(0x00000803, 1, 1, 1, {0, 1})), LengthError);
  const std::vector<std::uint8_t> header_only{0, 0, 8, 3, 0, 0};
  CHECK_THROWS_AS(parse_idx(header_only), LengthError);
}

TEST_CASE("IDX files round-trip through encode and parse") {
  const ImageSet set = synthetic_strokes(5, 3, "mnist", Split::kTrain);
  const auto bytes = encode_idx(set);
  const ImageSet back = parse_idx(bytes, "mnist", Split::kTrain);
  CHECK(back.count() == 5);
  CHECK((back.pixels - set.pixels).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12);
  CHECK(encode_idx(back) == bytes);

  const auto dir = std::filesystem::temp_directory_path() / "tbvi_test_idx";
  std::filesystem::create_directories(dir);
  write_idx_file(idx_path(dir, "mnist", Split::kTrain), set);
  CHECK(idx_path(dir, "mnist", Split::kTrain).filename() == "mnist-train-images.idx3-ubyte");
  CHECK(idx_path(dir, "omniglot", Split::kTest).filename() == "omniglot-test-images.idx3-ubyte");
  const ImageSet loaded = load_dataset(dir, "mnist", Split::kTrain);
  CHECK(loaded.pixels == back.pixels);
  CHECK(loaded.source_name == "mnist");
  CHECK_THROWS(load_dataset(dir, "omniglot", Split::kTrain));
  std::filesystem::remove_all(dir);
}

TEST_CASE("stochastic binarization is reproducible and unbiased") {
  ImageSet set;
  set.rows = 28;
  set.cols = 28;
  set.pixels = Matrix::Constant(50, 784, 0.3);
  const Matrix a = binarize(set, Binarization::kStochastic, 4, 0);
  CHECK(a == binarize(set, Binarization::kStochastic, 4, 0));
  CHECK(a != binarize(set, Binarization::kStochastic, 4, 1));
  CHECK(((a.array() == 0.0) || (a.array() == 1.0)).all());
  const double n = static_cast<double>(a.size());
  CHECK(std::abs(a.mean() - 0.3) < 4 * std::sqrt(0.21 / n));

  set.pixels(0, 0) = 0.0;
  set.pixels(0, 1) = 1.0;
  const Matrix b = binarize(set, Binarization::kStochastic, 9, 2);
  CHECK(b(0, 0) == 0.0);
  CHECK(b(0, 1) == 1.0);
}

TEST_CASE("threshold binarization uses p >= 0.5") {
  ImageSet set;
  set.rows = 1;
  set.cols = 3;
  set.pixels.resize(1, 3);
  set.pixels << 0.49, 0.5, 0.9;
  const Matrix b = binarize(set, Binarization::kThreshold, 0, 0);
  CHECK(b(0, 0) == 0.0);
  CHECK(b(0, 1) == 1.0);
  CHECK(b(0, 2) == 1.0);
}

TEST_CASE("epoch permutations are permutations keyed by seed and epoch") {
  const auto p = epoch_permutation(100, 5, 0);
  std::vector<Index> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Index> iota(100);
  std::iota(iota.begin(), iota.end(), 0);
  CHECK(sorted == iota);
  CHECK(p == epoch_permutation(100, 5, 0));
  CHECK(p != epoch_permutation(100, 5, 1));
  CHECK(p != epoch_permutation(100, 6, 0));
}

TEST_CASE("batches cover every image once and keep the short tail") {
  const ImageSet set = synthetic_strokes(45, 1);
  const auto bs = batches(set, 20, 3, 8);
  REQUIRE(bs.size() == 3);
  CHECK(bs[0].batch_size() == 20);
  CHECK(bs[2].batch_size() == 5);
  std::set<Index> seen;
  for (const auto& b : bs) {
    CHECK(b.epoch_index == 3);
    for (Index i : b.items) seen.insert(i);
    CHECK(((b.data.array() == 0.0) || (b.data.array() == 1.0)).all());
  }
  CHECK(seen.size() == 45);
  // Each item keeps its epoch binarization regardless of batch placement.
  Eigen::RowVectorXd row(784);
  binarize_item(set, bs[1].items[4], Binarization::kStochastic, 8, 3, row);
  CHECK(row == bs[1].data.row(4));
}

TEST_CASE("synthetic strokes are deterministic images in [0, 1]") {
  const ImageSet a = synthetic_strokes(20, 2);
  const ImageSet b = synthetic_strokes(20, 2);
  CHECK(a.pixels == b.pixels);
  CHECK(a.rows == 28);
  CHECK(a.cols == 28);
  CHECK(a.pixels.minCoeff() >= 0.0);
  CHECK(a.pixels.maxCoeff() <= 1.0);
  CHECK(a.pixels.mean() > 0.02);
  CHECK(a.pixels != synthetic_strokes(20, 3).pixels);
  CHECK(a.head(5).count() == 5);
  CHECK(a.head(500).count() == 20);
}
