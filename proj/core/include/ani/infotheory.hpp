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
#include <vector>

#include "ani/rng.hpp"

namespace ani {

// Small discrete system with the Markov structure X' -- X -- Z: the side
// variable Z couples to X through p(x,z) and the transformed variable X'
// is produced from X alone by the channel q(x'|x).
struct DiscreteJoint {
  int nx = 0;
  int nz = 0;
  int nxp = 0;
  std::vector<double> p_xz;     // [nx * nz], sums to 1
  std::vector<double> channel;  // [nx * nxp], each row sums to 1

  void validate() const;  // throws DomainError on malformed tables
  static DiscreteJoint random(int nx, int nz, int nxp, Rng& rng);
};

// Exact plug-in mutual information of a finite joint table [na * nb], in
// nats. 0 * log 0 is taken as 0.
double mi_from_joint(const std::vector<double>& joint, int na, int nb);

enum class MiPair { kTransformedVsInput, kTransformedVsSide };

// I(X';X) or I(X';Z) of a DiscreteJoint, exact up to floating point.
double mi_discrete(const DiscreteJoint& joint, MiPair pair);

// I(X';X|Z) and I(X';Z|X) computed from the full three-way table.
double conditional_mi_transformed_input_given_side(const DiscreteJoint& joint);
double conditional_mi_transformed_side_given_input(const DiscreteJoint& joint);

struct Theorem1Report {
  int trials = 0;
  int violations = 0;
  double min_margin = 0.0;          // min over trials of I(X';X) - I(X';Z)
  double max_chain_residual = 0.0;  // worst |chain-rule identity residual|
  std::string failure_dump;         // tables of the first violating trial
  bool ok() const { return violations == 0; }
};

// Draws random joints (support sizes up to 8) and checks, for every trial,
// that I(X';X) >= I(X';Z) - 1e-9 and that the two chain-rule expansions of
// I(X'; X,Z) agree within 1e-9.
Theorem1Report validate_theorem1(int n_trials, Rng& rng);

struct MIEstimate {
  double value = 0.0;  // nats
  std::string estimator;
  int k = 0;
  int64_t n_samples = 0;
  bool jittered = false;
};

// Kraskov-Stogbauer-Grassberger (variant 1) k-nearest-neighbor estimate of
// I(A;B) from paired continuous samples, max-norm distances. Duplicate
// points trigger a deterministic 1e-10-scale jitter, flagged in the result.
MIEstimate mi_knn(const std::vector<double>& a, int dim_a, const std::vector<double>& b,
                  int dim_b, int k);

// Kozachenko-Leonenko differential entropy estimate, max-norm, in nats.
double entropy_knn(const std::vector<double>& samples, int dim, int k);

struct NormalizedMiResult {
  bool defined = false;
  double value = 0.0;  // mi / entropy, clamped below at 0
  double mi_nats = 0.0;
  double entropy_nats = 0.0;
  int64_t n = 0;
  int k = 0;
  int projection_dim = 0;
  uint64_t projection_seed = 0;
  bool jittered = false;
  std::string note;
};

// I(X;X') / H(X) from paired flattened images. Both sides go through one
// shared seeded Gaussian projection to `projection_dim` dimensions before
// estimation; high-dimensional raw pixels defeat kNN estimators.
NormalizedMiResult normalized_mi(const std::vector<float>& x_rows,
                                 const std::vector<float>& xp_rows, int64_t n, int64_t dim,
                                 int k, uint64_t projection_seed, int projection_dim = 16);

double digamma(double x);

// Spearman rank correlation; ties get average ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ani
