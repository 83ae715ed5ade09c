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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ani/rng.hpp"
#include "ani/tensor.hpp"

namespace ani {

// Primary task = what the client wants classified remotely (label y).
// Secondary task = the sensitive attribute an adversary may try to infer
// (label z). Both labels are pure functions of the raw dataset label.
struct DatasetSpec {
  std::string name;           // mnist | fashion_mnist | cifar100
  Shape image_shape;          // {channels, height, width}
  std::string primary_rule;   // below5 | coarse
  std::string secondary_rule; // identity
  int n_primary_classes = 0;
  int n_secondary_classes = 0;
  int raw_label_range = 0;
};

DatasetSpec dataset_spec(const std::string& name);

// (y, z) for one raw label. Total on [0, raw_label_range); throws DomainError
// outside it.
std::pair<int, int> derive_labels(int raw_label, const DatasetSpec& spec);

// Coarse class of a CIFAR-100 fine label, from the published label table.
int cifar100_coarse_label(int fine_label);

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split s);

// One fully loaded split. Images are float32 in [0,1], stored
// [n, channels, height, width].
struct Dataset {
  DatasetSpec spec;
  Split split = Split::kTrain;
  int64_t n = 0;
  std::vector<float> images;
  std::vector<int32_t> y;
  std::vector<int32_t> z;

  int64_t example_numel() const { return shape_numel(spec.image_shape); }
  const float* image(int64_t i) const { return images.data() + i * example_numel(); }
  // Copies rows `indices` into a [batch, C, H, W] tensor.
  Tensor gather(const std::vector<int32_t>& indices) const;
};

// Resolution order for the dataset root: explicit argument, then
// ANI_DATA_ROOT, then ./data.
std::string resolve_data_root(const std::string& explicit_root);

Dataset load_dataset(const DatasetSpec& spec, Split split, const std::string& data_root);

// Training-facing view of a dataset: exposes images and primary labels only.
// Secondary labels stay out of every training code path by construction.
class TrainView {
 public:
  explicit TrainView(const Dataset& ds) : ds_(&ds) {}

  const DatasetSpec& spec() const { return ds_->spec; }
  int64_t size() const { return ds_->n; }
  const float* image(int64_t i) const { return ds_->image(i); }
  int32_t primary_label(int64_t i) const { return ds_->y[static_cast<size_t>(i)]; }
  Tensor gather(const std::vector<int32_t>& indices) const { return ds_->gather(indices); }

 private:
  const Dataset* ds_;
};

inline TrainView strip_secondary(const Dataset& ds) { return TrainView(ds); }

struct TrainBatch {
  Tensor x;                 // [batch, C, H, W]
  std::vector<int32_t> y;
};

// Deterministic batch sequence: order is a pure function of
// (seed, epoch, size, batch_size).
class BatchOrder {
 public:
  BatchOrder(int64_t n, int batch_size, uint64_t seed, bool shuffle);

  void start_epoch(int epoch);
  int n_batches() const;
  // Indices for batch `b` of the current epoch.
  std::vector<int32_t> batch_indices(int b) const;

 private:
  int64_t n_;
  int batch_size_;
  uint64_t seed_;
  bool shuffle_;
  std::vector<int32_t> order_;
};

}  // namespace ani
