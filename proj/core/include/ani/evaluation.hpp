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

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ani/dataset.hpp"
#include "ani/nets.hpp"
#include "ani/transform.hpp"

namespace ani {

// Client-side input transform applied before anything reaches a classifier.
// Noise is drawn fresh from `rng` on every call.
using TransformFn = std::function<Tensor(const Tensor& x, Rng& rng)>;

TransformFn identity_transform();
// Adaptive transform: w = mask(x), x' = w*x + (1-w)*v. The mask network is
// only read; fresh noise per call.
TransformFn adaptive_transform(Network& mask_net);
// Training-mode baseline transform: x' = x + sigma*v.
TransformFn cloak_transform(Tensor sigma);

enum class Task { kPrimary, kSecondary };

// Top-1 accuracy over the full split with fresh noise per batch. With
// noise_votes > 1 the softmax outputs of several independent noise draws are
// averaged before the argmax; the default matches deployment (one draw).
double accuracy(Network& classifier, const TransformFn& transform, const Dataset& data,
                Task task, Rng& rng, int batch_size = 256, int noise_votes = 1);

struct TradeoffPoint {
  double lambda = 0.0;
  std::string method;  // ani | cloak
  double primary_acc = 0.0;
  double secondary_acc = 0.0;
  std::optional<double> normalized_mi;
  std::string manifest_ref;
};

// CSV schema: lambda,method,primary_acc,secondary_acc,normalized_mi with a
// header row; missing metrics become the literal NA.
void write_tradeoff_csv(const std::vector<TradeoffPoint>& points, const std::string& path);
std::vector<TradeoffPoint> read_tradeoff_csv(const std::string& path);

// Collects one TradeoffPoint per run manifest, sorted by lambda. Manifests
// missing a metric yield NA fields rather than being dropped.
std::vector<TradeoffPoint> assemble_tradeoff(const std::vector<std::string>& manifest_paths);

// Writes {tag}_{index}_{input|mask|transformed}.png triples. The mask panel
// is w for the adaptive transform and 1 - sigma/sigma_max for the baseline.
std::vector<std::string> export_masks(Network* mask_net, const CloakParams* cloak,
                                      const Dataset& data,
                                      const std::vector<int32_t>& indices,
                                      const std::string& out_dir, const std::string& tag,
                                      Rng& rng);

struct FlopReport {
  std::string dataset;
  std::string mask_arch;
  std::string primary_arch;
  int64_t mask_net_flops = 0;
  int64_t primary_flops = 0;
  double ratio = 0.0;
};

// Per-example FLOP cost of the client-side mask network relative to the
// server-side classifier; shape-only, independent of parameter values.
FlopReport flop_report(const std::string& dataset_name);

}  // namespace ani
