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

#include "ani/transform.hpp"

#include <algorithm>
#include <vector>

#include "ani/errors.hpp"

namespace ani {

NoiseSample sample_noise(const Shape& shape, Rng& rng) {
  NoiseSample s;
  s.rng_seed = rng.seed();
  s.v = Tensor(shape);
  rng.fill_gaussian(s.v.data(), s.v.numel());
  return s;
}

Tensor clamp_mask(const Tensor& w, std::vector<uint8_t>* top_clamped) {
  Tensor out(w.shape());
  if (top_clamped) top_clamped->assign(static_cast<size_t>(w.numel()), 0);
  const float* s = w.data();
  float* d = out.data();
  for (int64_t i = 0; i < w.numel(); ++i) {
    float v = s[i];
    if (v > kMaxMaskValue) {
      v = kMaxMaskValue;
      if (top_clamped) (*top_clamped)[static_cast<size_t>(i)] = 1;
    } else if (v < kMinMaskValue) {
      v = kMinMaskValue;
    }
    d[i] = v;
  }
  return out;
}

Tensor inject_adaptive(const Tensor& x, const Tensor& w, const Tensor& v) {
  require_same_shape(x, w, "inject_adaptive(x, w)");
  require_same_shape(x, v, "inject_adaptive(x, v)");
  const float* xs = x.data();
  const float* ws = w.data();
  const float* vs = v.data();
  for (int64_t i = 0; i < w.numel(); ++i) {
    if (!(ws[i] > 0.0f && ws[i] < 1.0f)) {
      throw DomainError("mask element " + std::to_string(i) + " = " + std::to_string(ws[i]) +
                        " outside (0,1)");
    }
  }
  Tensor out(x.shape());
  float* d = out.data();
#pragma omp parallel for
  for (int64_t i = 0; i < x.numel(); ++i) {
    d[i] = ws[i] * xs[i] + (1.0f - ws[i]) * vs[i];
  }
  return out;
}

CloakParams make_cloak_train_params(const Shape& image_shape, float sigma_init) {
  CloakParams p;
  p.sigma = Tensor::full(image_shape, sigma_init);
  p.mu = Tensor::zeros(image_shape);
  p.b = Tensor::full(image_shape, 1.0f);
  p.sigma_max = sigma_init;
  return p;
}

Tensor inject_cloak(const Tensor& x, const CloakParams& params, const Tensor& v) {
  require_same_shape(x, v, "inject_cloak(x, v)");
  const int64_t px = params.sigma.numel();
  if (x.numel() % px != 0) {
    throw DomainError("cloak parameters of size " + std::to_string(px) +
                      " do not tile input " + shape_str(x.shape()));
  }
  const float* xs = x.data();
  const float* vs = v.data();
  const float* sg = params.sigma.data();
  const float* mu = params.mu.data();
  const float* b = params.b.data();
  Tensor out(x.shape());
  float* d = out.data();
#pragma omp parallel for
  for (int64_t i = 0; i < x.numel(); ++i) {
    const int64_t p = i % px;
    d[i] = (xs[i] + sg[p] * vs[i]) * b[p] + mu[p];
  }
  return out;
}

CloakParams derive_cloak_export(const Tensor& sigma, const float* pixel_mean) {
  CloakParams p;
  p.sigma = sigma;
  p.mu = Tensor(sigma.shape());
  p.b = Tensor(sigma.shape());
  std::vector<float> sorted(sigma.data(), sigma.data() + sigma.numel());
  std::sort(sorted.begin(), sorted.end());
  // lower median, so suppression covers the noisier half of the pixels
  const float median = sorted[(sorted.size() - 1) / 2];
  float mx = 0.0f;
  for (int64_t i = 0; i < sigma.numel(); ++i) mx = std::max(mx, sigma[i]);
  p.sigma_max = mx;
  for (int64_t i = 0; i < sigma.numel(); ++i) {
    const bool suppress = sigma[i] > median;
    p.b[i] = suppress ? 0.0f : 1.0f;
    p.mu[i] = suppress ? pixel_mean[i] : 0.0f;
  }
  return p;
}

}  // namespace ani
