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

#include "ani/objective.hpp"

#include <cmath>

#include "ani/errors.hpp"

namespace ani {

double softmax_cross_entropy(const Tensor& logits, std::span<const int32_t> labels,
                             Tensor* dlogits) {
  const int64_t b = logits.dim(0);
  const int64_t n = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != b) {
    throw DomainError("label count does not match batch size");
  }
  if (dlogits) *dlogits = Tensor(logits.shape());
  const float* s = logits.data();
  double total = 0.0;
  for (int64_t r = 0; r < b; ++r) {
    const float* row = s + r * n;
    const int32_t y = labels[static_cast<size_t>(r)];
    if (y < 0 || y >= n) throw DomainError("label " + std::to_string(y) + " out of range");
    float mx = row[0];
    for (int64_t c = 1; c < n; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (int64_t c = 0; c < n; ++c) sum += std::exp(static_cast<double>(row[c]) - mx);
    const double lse = mx + std::log(sum);
    total += lse - row[y];
    if (dlogits) {
      float* drow = dlogits->data() + r * n;
      for (int64_t c = 0; c < n; ++c) {
        const double p = std::exp(static_cast<double>(row[c]) - lse);
        drow[c] = static_cast<float>((p - (c == y ? 1.0 : 0.0)) / static_cast<double>(b));
      }
    }
  }
  return total / static_cast<double>(b);
}

namespace {

double mask_log_one_minus_sum(const Tensor& w) {
  const float* s = w.data();
  double acc = 0.0;
  for (int64_t i = 0; i < w.numel(); ++i) {
    const double one_minus = 1.0 - static_cast<double>(s[i]);
    if (one_minus <= 0.0) {
      throw NumericalError("mask element at index " + std::to_string(i) +
                           " reached 1; clamping failed upstream");
    }
    acc += std::log(one_minus);
  }
  return acc;
}

}  // namespace

LossBreakdown ani_loss(const Tensor& logits, std::span<const int32_t> labels, const Tensor& w,
                       double lambda, Tensor* dlogits) {
  if (lambda < 0.0) throw DomainError("lambda must be >= 0");
  LossBreakdown out;
  out.lambda = lambda;
  out.cross_entropy = softmax_cross_entropy(logits, labels, dlogits);
  const int64_t b = logits.dim(0);
  out.entropy_reg = -lambda * mask_log_one_minus_sum(w) / static_cast<double>(b);
  out.total = out.cross_entropy + out.entropy_reg;
  return out;
}

void add_entropy_reg_grad(const Tensor& w, double lambda, Tensor& dw) {
  require_same_shape(w, dw, "add_entropy_reg_grad");
  const int64_t b = w.dim(0);
  const float* s = w.data();
  float* d = dw.data();
  const double scale = lambda / static_cast<double>(b);
#pragma omp parallel for
  for (int64_t i = 0; i < w.numel(); ++i) {
    d[i] += static_cast<float>(scale / (1.0 - static_cast<double>(s[i])));
  }
}

LossBreakdown cloak_loss(const Tensor& logits, std::span<const int32_t> labels,
                         const Tensor& sigma, double lambda, Tensor* dlogits) {
  if (lambda < 0.0) throw DomainError("lambda must be >= 0");
  LossBreakdown out;
  out.lambda = lambda;
  out.cross_entropy = softmax_cross_entropy(logits, labels, dlogits);
  double acc = 0.0;
  const float* s = sigma.data();
  for (int64_t i = 0; i < sigma.numel(); ++i) {
    if (!(s[i] > 0.0f)) {
      throw DomainError("sigma element " + std::to_string(i) + " must be positive");
    }
    acc += std::log(static_cast<double>(s[i]));
  }
  out.entropy_reg = -lambda * acc;
  out.total = out.cross_entropy + out.entropy_reg;
  return out;
}

double gaussian_conditional_entropy(std::span<const double> w) {
  const double n = static_cast<double>(w.size());
  double acc = 0.0;
  for (double wi : w) {
    if (!(wi >= 0.0 && wi < 1.0)) throw DomainError("mask value outside [0,1)");
    acc += std::log(1.0 - wi);
  }
  return 0.5 * n * std::log(2.0 * M_PI * M_E) + 0.5 * acc;
}

double entropy_reg_term(double w, double lambda) {
  if (!(w >= 0.0 && w < 1.0)) throw DomainError("mask value outside [0,1)");
  return -lambda * std::log(1.0 - w);
}

double entropy_reg_grad(double w, double lambda) {
  if (!(w >= 0.0 && w < 1.0)) throw DomainError("mask value outside [0,1)");
  return lambda / (1.0 - w);
}

}  // namespace ani
