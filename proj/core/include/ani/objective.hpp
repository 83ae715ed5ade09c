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

#include <span>

#include "ani/tensor.hpp"

namespace ani {

// total = cross_entropy + entropy_reg, accumulated in that order.
// entropy_reg is the batch mean of -lambda * sum_i ln(1 - w_i) and is
// nonnegative whenever lambda >= 0.
struct LossBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double entropy_reg = 0.0;
  double lambda = 0.0;
};

// Mean cross-entropy over the batch from raw logits [B, n_classes]; fills
// dlogits with d(mean CE)/d(logits) when non-null.
double softmax_cross_entropy(const Tensor& logits, std::span<const int32_t> labels,
                             Tensor* dlogits);

// Joint objective for the adaptive transform: mean CE minus
// lambda * sum_i ln(1 - w_i) per example, batch-meaned. w must already be
// clamped below 1; an element at exactly 1 raises NumericalError instead of
// returning inf.
LossBreakdown ani_loss(const Tensor& logits, std::span<const int32_t> labels, const Tensor& w,
                       double lambda, Tensor* dlogits);

// Adds d(entropy_reg)/dw = lambda / ((1 - w) * batch) into dw.
void add_entropy_reg_grad(const Tensor& w, double lambda, Tensor& dw);

// Baseline objective: mean CE minus lambda * sum_i ln(sigma_i). sigma must be
// elementwise positive.
LossBreakdown cloak_loss(const Tensor& logits, std::span<const int32_t> labels,
                         const Tensor& sigma, double lambda, Tensor* dlogits);

// Differential entropy of the noise the transform adds given the input:
// 0.5*N*ln(2*pi*e) + 0.5 * sum_i ln(1 - w_i), in nats. Diagnostic quantity;
// training uses only the sum term.
double gaussian_conditional_entropy(std::span<const double> w);

// Scalar forms used by gradient-check oracles.
double entropy_reg_term(double w, double lambda);  // -lambda * ln(1 - w)
double entropy_reg_grad(double w, double lambda);  // lambda / (1 - w)

}  // namespace ani
