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

#include "ani/dataset.hpp"

#include <array>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "ani/errors.hpp"

namespace ani {

namespace {

constexpr int kValExamples = 5000;

// CIFAR-100 coarse class per fine label (fine labels in their published
// alphabetical order).
constexpr std::array<int, 100> kCifar100Coarse = {
    4,  1,  14, 8,  0,  6,  7,  7,  18, 3,  3,  14, 9,  18, 7,  11, 3,  9,  7,  11,
    6,  11, 5,  10, 7,  6,  13, 15, 3,  15, 0,  11, 1,  10, 12, 14, 16, 9,  11, 5,
    5,  19, 8,  8,  15, 13, 14, 17, 18, 10, 16, 4,  17, 4,  2,  0,  17, 4,  18, 17,
    10, 3,  2,  12, 12, 16, 12, 1,  9,  19, 2,  10, 0,  1,  16, 12, 9,  13, 15, 13,
    16, 19, 2,  4,  6,  19, 5,  5,  8,  19, 18, 1,  2,  15, 6,  0,  17, 8,  14, 13};

uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("truncated IDX header in " + path);
  }
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

std::vector<uint8_t> read_idx_images(const std::string& path, int64_t& n, int64_t& rows,
                                     int64_t& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("dataset file missing: " + path +
                    " (fetch the published archive into the data root or set ANI_DATA_ROOT)");
  }
  uint32_t magic = read_be32(in, path);
  if (magic != 0x00000803) throw DataError("bad IDX image magic in " + path);
  n = read_be32(in, path);
  rows = read_be32(in, path);
  cols = read_be32(in, path);
  std::vector<uint8_t> raw(static_cast<size_t>(n) * rows * cols);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DataError("truncated IDX image payload in " + path);
  }
  return raw;
}

std::vector<uint8_t> read_idx_labels(const std::string& path, int64_t expected_n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("dataset file missing: " + path +
                    " (fetch the published archive into the data root or set ANI_DATA_ROOT)");
  }
  uint32_t magic = read_be32(in, path);
  if (magic != 0x00000801) throw DataError("bad IDX label magic in " + path);
  int64_t n = read_be32(in, path);
  if (n != expected_n) throw DataError("image/label count mismatch in " + path);
  std::vector<uint8_t> raw(static_cast<size_t>(n));
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DataError("truncated IDX label payload in " + path);
  }
  return raw;
}

Dataset from_idx(const DatasetSpec& spec, Split split, const std::string& dir) {
  const bool test = split == Split::kTest;
  const std::string stem = test ? "t10k" : "train";
  int64_t n = 0, rows = 0, cols = 0;
  auto images = read_idx_images(dir + "/" + stem + "-images-idx3-ubyte", n, rows, cols);
  auto labels = read_idx_labels(dir + "/" + stem + "-labels-idx1-ubyte", n);
  if (rows != spec.image_shape[1] || cols != spec.image_shape[2]) {
    throw DataError(spec.name + ": unexpected image size " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }

  int64_t begin = 0, end = n;
  if (!test) {
    if (n <= kValExamples) throw DataError(spec.name + ": training file too small to split");
    if (split == Split::kTrain) {
      end = n - kValExamples;
    } else {
      begin = n - kValExamples;
    }
  }

  Dataset ds;
  ds.spec = spec;
  ds.split = split;
  ds.n = end - begin;
  const int64_t px = rows * cols;
  ds.images.resize(ds.n * px);
  ds.y.resize(ds.n);
  ds.z.resize(ds.n);
  for (int64_t i = 0; i < ds.n; ++i) {
    const uint8_t* src = images.data() + (begin + i) * px;
    float* dst = ds.images.data() + i * px;
    for (int64_t p = 0; p < px; ++p) dst[p] = static_cast<float>(src[p]) * (1.0f / 255.0f);
    auto [y, z] = derive_labels(labels[static_cast<size_t>(begin + i)], spec);
    ds.y[static_cast<size_t>(i)] = y;
    ds.z[static_cast<size_t>(i)] = z;
  }
  return ds;
}

// CIFAR-100 published binary records: 1 coarse byte, 1 fine byte, 3072 image
// bytes (RGB planes).
Dataset from_cifar_bin(const DatasetSpec& spec, Split split, const std::string& dir) {
  const bool test = split == Split::kTest;
  const std::string path = dir + (test ? "/test.bin" : "/train.bin");
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("dataset file missing: " + path +
                    " (fetch the published binary archive or set ANI_DATA_ROOT)");
  }
  constexpr int64_t kRecord = 2 + 3072;
  in.seekg(0, std::ios::end);
  int64_t bytes = in.tellg();
  in.seekg(0);
  if (bytes % kRecord != 0) throw DataError("corrupt CIFAR-100 record size in " + path);
  int64_t n = bytes / kRecord;

  int64_t begin = 0, end = n;
  if (!test) {
    if (n <= kValExamples) throw DataError(spec.name + ": training file too small to split");
    if (split == Split::kTrain) {
      end = n - kValExamples;
    } else {
      begin = n - kValExamples;
    }
  }

  Dataset ds;
  ds.spec = spec;
  ds.split = split;
  ds.n = end - begin;
  ds.images.resize(ds.n * 3072);
  ds.y.resize(ds.n);
  ds.z.resize(ds.n);
  std::vector<uint8_t> rec(kRecord);
  in.seekg(begin * kRecord);
  for (int64_t i = 0; i < ds.n; ++i) {
    if (!in.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
      throw DataError("truncated CIFAR-100 payload in " + path);
    }
    int coarse = rec[0], fine = rec[1];
    auto [y, z] = derive_labels(fine, spec);
    if (y != coarse) {
      throw DataError("CIFAR-100 coarse byte disagrees with label table at record " +
                      std::to_string(begin + i));
    }
    ds.y[static_cast<size_t>(i)] = y;
    ds.z[static_cast<size_t>(i)] = z;
    float* dst = ds.images.data() + i * 3072;
    for (int64_t p = 0; p < 3072; ++p) dst[p] = static_cast<float>(rec[2 + p]) * (1.0f / 255.0f);
  }
  return ds;
}

}  // namespace

DatasetSpec dataset_spec(const std::string& name) {
  if (name == "mnist") {
    return {"mnist", {1, 28, 28}, "below5", "identity", 2, 10, 10};
  }
  if (name == "fashion_mnist" || name == "fashion") {
    return {"fashion_mnist", {1, 28, 28}, "below5", "identity", 2, 10, 10};
  }
  if (name == "cifar100") {
    return {"cifar100", {3, 32, 32}, "coarse", "identity", 20, 100, 100};
  }
  throw ConfigError("unknown dataset: " + name);
}

int cifar100_coarse_label(int fine_label) {
  if (fine_label < 0 || fine_label >= 100) {
    throw DomainError("fine label out of range: " + std::to_string(fine_label));
  }
  return kCifar100Coarse[static_cast<size_t>(fine_label)];
}

std::pair<int, int> derive_labels(int raw_label, const DatasetSpec& spec) {
  if (raw_label < 0 || raw_label >= spec.raw_label_range) {
    throw DomainError(spec.name + ": raw label out of range: " + std::to_string(raw_label));
  }
  int y;
  if (spec.primary_rule == "below5") {
    y = raw_label < 5 ? 1 : 0;
  } else if (spec.primary_rule == "coarse") {
    y = cifar100_coarse_label(raw_label);
  } else {
    throw ConfigError("unknown primary rule: " + spec.primary_rule);
  }
  return {y, raw_label};
}

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Tensor Dataset::gather(const std::vector<int32_t>& indices) const {
  const int64_t px = example_numel();
  Shape shape = {static_cast<int64_t>(indices.size()), spec.image_shape[0], spec.image_shape[1],
                 spec.image_shape[2]};
  Tensor out(shape);
  for (size_t b = 0; b < indices.size(); ++b) {
    const float* src = image(indices[b]);
    std::copy(src, src + px, out.data() + static_cast<int64_t>(b) * px);
  }
  return out;
}

std::string resolve_data_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("ANI_DATA_ROOT"); env && *env) return env;
  return "data";
}

Dataset load_dataset(const DatasetSpec& spec, Split split, const std::string& data_root) {
  const std::string root = resolve_data_root(data_root);
  const std::string dir = root + "/" + spec.name;
  if (spec.name == "cifar100") return from_cifar_bin(spec, split, dir);
  return from_idx(spec, split, dir);
}

BatchOrder::BatchOrder(int64_t n, int batch_size, uint64_t seed, bool shuffle)
    : n_(n), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  if (n <= 0) throw DomainError("empty dataset");
  if (batch_size <= 0) throw DomainError("batch_size must be >= 1");
  order_.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) order_[static_cast<size_t>(i)] = static_cast<int32_t>(i);
}

void BatchOrder::start_epoch(int epoch) {
  for (int64_t i = 0; i < n_; ++i) order_[static_cast<size_t>(i)] = static_cast<int32_t>(i);
  if (shuffle_) {
    Rng rng(mix64(seed_ ^ mix64(0x9e0ceb1f + static_cast<uint64_t>(epoch))));
    rng.shuffle(order_);
  }
}

int BatchOrder::n_batches() const {
  return static_cast<int>((n_ + batch_size_ - 1) / batch_size_);
}

std::vector<int32_t> BatchOrder::batch_indices(int b) const {
  int64_t begin = static_cast<int64_t>(b) * batch_size_;
  int64_t end = std::min(n_, begin + batch_size_);
  if (begin >= end) throw DomainError("batch index out of range");
  return std::vector<int32_t>(order_.begin() + begin, order_.begin() + end);
}

}  // namespace ani
