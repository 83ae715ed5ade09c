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

#include "ani/rng.hpp"
#include "ani/tensor.hpp"

namespace ani {

// Fresh standard-normal draw, one element per input element. Sampled anew for
// every forward pass; never reused across batches.
struct NoiseSample {
  Tensor v;
  uint64_t rng_seed = 0;
};

NoiseSample sample_noise(const Shape& shape, Rng& rng);

// x' = w*x + (1-w)*v elementwise. w must be strictly inside (0,1); x' is not
// clipped back to [0,1].
Tensor inject_adaptive(const Tensor& x, const Tensor& w, const Tensor& v);

// Mask values above this bound are clamped before any log(1-w); keeps the
// regularizer finite in float arithmetic.
inline constexpr float kMaxMaskValue = 1.0f - 1e-6f;
inline constexpr float kMinMaskValue = 1e-12f;

// Returns w clamped into [kMinMaskValue, kMaxMaskValue] and flags which
// elements were clamped at the top (their gradient is zero by convention).
Tensor clamp_mask(const Tensor& w, std::vector<uint8_t>* top_clamped = nullptr);

// Input-independent baseline: one learned noise scale for every input,
// x' = (x + sigma*v) * b + mu. During training b = 1 and mu = 0; the
// suppression mask and replacement mean are derived only at export time.
struct CloakParams {
  Tensor sigma;  // elementwise >= 0
  Tensor mu;
  Tensor b;  // elementwise in {0,1}
  float sigma_max = 0.0f;
};

CloakParams make_cloak_train_params(const Shape& image_shape, float sigma_init = 1.0f);

Tensor inject_cloak(const Tensor& x, const CloakParams& params, const Tensor& v);

// Export-time view: b = 0 where sigma is above its median (those pixels are
// replaced by mu, the per-element training-set mean); sigma_max is the
// largest trained scale, used to render the mask panel as 1 - sigma/sigma_max.
CloakParams derive_cloak_export(const Tensor& sigma, const float* pixel_mean);

}  // namespace ani
