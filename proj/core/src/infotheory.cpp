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

#include "ani/infotheory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "ani/errors.hpp"

namespace ani {

namespace {

constexpr double kTableTolerance = 1e-9;

void fill_simplex(std::vector<double>& v, size_t begin, size_t count, Rng& rng) {
  double sum = 0.0;
  for (size_t i = 0; i < count; ++i) {
    // -log(U) draws make the normalized vector uniform on the simplex.
    double e = -std::log(std::max(rng.uniform(), 1e-300));
    v[begin + i] = e;
    sum += e;
  }
  for (size_t i = 0; i < count; ++i) v[begin + i] /= sum;
}

// Chebyshev distance between rows i and j of a flattened [n, d] sample list.
inline double cheb(const double* s, int d, int64_t i, int64_t j) {
  const double* a = s + i * d;
  const double* b = s + j * d;
  double m = 0.0;
  for (int t = 0; t < d; ++t) m = std::max(m, std::abs(a[t] - b[t]));
  return m;
}

}  // namespace

void DiscreteJoint::validate() const {
  if (nx <= 0 || nz <= 0 || nxp <= 0) throw DomainError("joint: empty support");
  if (p_xz.size() != static_cast<size_t>(nx) * nz) throw DomainError("joint: p_xz size mismatch");
  if (channel.size() != static_cast<size_t>(nx) * nxp) {
    throw DomainError("joint: channel size mismatch");
  }
  double total = 0.0;
  for (double p : p_xz) {
    if (p < 0.0) throw DomainError("joint: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kTableTolerance) throw DomainError("joint: p(x,z) does not sum to 1");
  for (int x = 0; x < nx; ++x) {
    double row = 0.0;
    for (int xp = 0; xp < nxp; ++xp) {
      double q = channel[static_cast<size_t>(x) * nxp + xp];
      if (q < 0.0) throw DomainError("joint: negative channel entry");
      row += q;
    }
    if (std::abs(row - 1.0) > kTableTolerance) throw DomainError("joint: channel row not stochastic");
  }
}

DiscreteJoint DiscreteJoint::random(int nx, int nz, int nxp, Rng& rng) {
  DiscreteJoint j;
  j.nx = nx;
  j.nz = nz;
  j.nxp = nxp;
  j.p_xz.resize(static_cast<size_t>(nx) * nz);
  j.channel.resize(static_cast<size_t>(nx) * nxp);
  fill_simplex(j.p_xz, 0, j.p_xz.size(), rng);
  for (int x = 0; x < nx; ++x) {
    fill_simplex(j.channel, static_cast<size_t>(x) * nxp, static_cast<size_t>(nxp), rng);
  }
  return j;
}

double mi_from_joint(const std::vector<double>& joint, int na, int nb) {
  if (joint.size() != static_cast<size_t>(na) * nb) throw DomainError("joint table size mismatch");
  std::vector<double> pa(static_cast<size_t>(na), 0.0), pb(static_cast<size_t>(nb), 0.0);
  for (int a = 0; a < na; ++a) {
    for (int b = 0; b < nb; ++b) {
      const double p = joint[static_cast<size_t>(a) * nb + b];
      if (p < -kTableTolerance) throw DomainError("joint table has negative entries");
      pa[static_cast<size_t>(a)] += p;
      pb[static_cast<size_t>(b)] += p;
    }
  }
  double mi = 0.0;
  for (int a = 0; a < na; ++a) {
    for (int b = 0; b < nb; ++b) {
      const double p = joint[static_cast<size_t>(a) * nb + b];
      if (p > 0.0) mi += p * std::log(p / (pa[static_cast<size_t>(a)] * pb[static_cast<size_t>(b)]));
    }
  }
  return mi;
}

double mi_discrete(const DiscreteJoint& j, MiPair pair) {
  j.validate();
  if (pair == MiPair::kTransformedVsInput) {
    // p(x', x) = p(x) q(x'|x)
    std::vector<double> px(static_cast<size_t>(j.nx), 0.0);
    for (int x = 0; x < j.nx; ++x) {
      for (int z = 0; z < j.nz; ++z) px[static_cast<size_t>(x)] += j.p_xz[static_cast<size_t>(x) * j.nz + z];
    }
    std::vector<double> table(static_cast<size_t>(j.nxp) * j.nx, 0.0);
    for (int x = 0; x < j.nx; ++x) {
      for (int xp = 0; xp < j.nxp; ++xp) {
        table[static_cast<size_t>(xp) * j.nx + x] =
            px[static_cast<size_t>(x)] * j.channel[static_cast<size_t>(x) * j.nxp + xp];
      }
    }
    return mi_from_joint(table, j.nxp, j.nx);
  }
  // p(x', z) = sum_x p(x,z) q(x'|x)
  std::vector<double> table(static_cast<size_t>(j.nxp) * j.nz, 0.0);
  for (int x = 0; x < j.nx; ++x) {
    for (int z = 0; z < j.nz; ++z) {
      const double pxz = j.p_xz[static_cast<size_t>(x) * j.nz + z];
      for (int xp = 0; xp < j.nxp; ++xp) {
        table[static_cast<size_t>(xp) * j.nz + z] +=
            pxz * j.channel[static_cast<size_t>(x) * j.nxp + xp];
      }
    }
  }
  return mi_from_joint(table, j.nxp, j.nz);
}

// I(A;B|C) = sum_c p(c) * I(A;B | C=c) from the full table p(x',x,z).
static double conditional_mi(const DiscreteJoint& j, bool input_given_side) {
  j.validate();
  double total = 0.0;
  if (input_given_side) {
    // condition on z: p(x',x|z) = p(x|z) q(x'|x)
    for (int z = 0; z < j.nz; ++z) {
      double pz = 0.0;
      for (int x = 0; x < j.nx; ++x) pz += j.p_xz[static_cast<size_t>(x) * j.nz + z];
      if (pz <= 0.0) continue;
      std::vector<double> table(static_cast<size_t>(j.nxp) * j.nx, 0.0);
      for (int x = 0; x < j.nx; ++x) {
        const double px_given_z = j.p_xz[static_cast<size_t>(x) * j.nz + z] / pz;
        for (int xp = 0; xp < j.nxp; ++xp) {
          table[static_cast<size_t>(xp) * j.nx + x] =
              px_given_z * j.channel[static_cast<size_t>(x) * j.nxp + xp];
        }
      }
      total += pz * mi_from_joint(table, j.nxp, j.nx);
    }
    return total;
  }
  // condition on x: given X the transformed variable is independent of Z, so
  // each conditional table is a product distribution; computing it exactly
  // keeps the identity check honest.
  for (int x = 0; x < j.nx; ++x) {
    double px = 0.0;
    for (int z = 0; z < j.nz; ++z) px += j.p_xz[static_cast<size_t>(x) * j.nz + z];
    if (px <= 0.0) continue;
    std::vector<double> table(static_cast<size_t>(j.nxp) * j.nz, 0.0);
    for (int z = 0; z < j.nz; ++z) {
      const double pz_given_x = j.p_xz[static_cast<size_t>(x) * j.nz + z] / px;
      for (int xp = 0; xp < j.nxp; ++xp) {
        table[static_cast<size_t>(xp) * j.nz + z] =
            pz_given_x * j.channel[static_cast<size_t>(x) * j.nxp + xp];
      }
    }
    total += px * mi_from_joint(table, j.nxp, j.nz);
  }
  return total;
}

double conditional_mi_transformed_input_given_side(const DiscreteJoint& j) {
  return conditional_mi(j, true);
}

double conditional_mi_transformed_side_given_input(const DiscreteJoint& j) {
  return conditional_mi(j, false);
}

Theorem1Report validate_theorem1(int n_trials, Rng& rng) {
  if (n_trials < 1) throw DomainError("n_trials must be >= 1");
  Theorem1Report report;
  report.min_margin = std::numeric_limits<double>::infinity();
  for (int t = 0; t < n_trials; ++t) {
    const int nx = 2 + static_cast<int>(rng.next_below(7));
    const int nz = 2 + static_cast<int>(rng.next_below(7));
    const int nxp = 2 + static_cast<int>(rng.next_below(7));
    DiscreteJoint j = DiscreteJoint::random(nx, nz, nxp, rng);
    const double mi_x = mi_discrete(j, MiPair::kTransformedVsInput);
    const double mi_z = mi_discrete(j, MiPair::kTransformedVsSide);
    const double margin = mi_x - mi_z;
    report.min_margin = std::min(report.min_margin, margin);

    const double lhs = mi_x + conditional_mi_transformed_side_given_input(j);
    const double rhs = mi_z + conditional_mi_transformed_input_given_side(j);
    const double residual = std::abs(lhs - rhs);
    report.max_chain_residual = std::max(report.max_chain_residual, residual);

    const bool violated = margin < -1e-9 || residual > 1e-9;
    if (violated && report.failure_dump.empty()) {
      std::ostringstream os;
      os << "trial " << t << ": I(X';X)=" << mi_x << " I(X';Z)=" << mi_z
         << " chain residual=" << residual << "\np_xz:";
      for (double p : j.p_xz) os << ' ' << p;
      os << "\nchannel:";
      for (double q : j.channel) os << ' ' << q;
      report.failure_dump = os.str();
    }
    if (violated) ++report.violations;
    ++report.trials;
  }
  return report;
}

double digamma(double x) {
  if (x <= 0.0) throw DomainError("digamma domain is x > 0 here");
  double result = 0.0;
  while (x < 10.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 -
                    inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

namespace {

// k-th nearest neighbor distances under the max norm, plus marginal
// neighbor counts strictly inside each radius. O(n^2); deterministic.
struct KsgScratch {
  std::vector<double> eps;      // joint k-NN radius per point
  std::vector<int> count_a;
  std::vector<int> count_b;
  bool zero_distance = false;
};

void ksg_pass(const std::vector<double>& a, int da, const std::vector<double>& b, int db,
              int64_t n, int k, KsgScratch& out) {
  out.eps.assign(static_cast<size_t>(n), 0.0);
  out.count_a.assign(static_cast<size_t>(n), 0);
  out.count_b.assign(static_cast<size_t>(n), 0);
  bool zero = false;
#pragma omp parallel for schedule(static) reduction(|| : zero)
  for (int64_t i = 0; i < n; ++i) {
    std::vector<double> dists(static_cast<size_t>(n - 1));
    size_t t = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dj = std::max(cheb(a.data(), da, i, j), cheb(b.data(), db, i, j));
      dists[t++] = dj;
    }
    std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
    const double eps = dists[static_cast<size_t>(k - 1)];
    if (eps == 0.0) zero = true;
    out.eps[static_cast<size_t>(i)] = eps;
    int ca = 0, cb = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (cheb(a.data(), da, i, j) < eps) ++ca;
      if (cheb(b.data(), db, i, j) < eps) ++cb;
    }
    out.count_a[static_cast<size_t>(i)] = ca;
    out.count_b[static_cast<size_t>(i)] = cb;
  }
  out.zero_distance = zero;
}

void jitter(std::vector<double>& v, uint64_t seed) {
  Rng rng(seed);
  for (double& x : v) x += rng.uniform(-1e-10, 1e-10);
}

}  // namespace

MIEstimate mi_knn(const std::vector<double>& a, int dim_a, const std::vector<double>& b,
                  int dim_b, int k) {
  if (dim_a <= 0 || dim_b <= 0) throw DomainError("mi_knn: dimensions must be positive");
  if (a.size() % static_cast<size_t>(dim_a) != 0 || b.size() % static_cast<size_t>(dim_b) != 0) {
    throw DomainError("mi_knn: sample buffer not a multiple of its dimension");
  }
  const int64_t n = static_cast<int64_t>(a.size()) / dim_a;
  if (n != static_cast<int64_t>(b.size()) / dim_b) throw DomainError("mi_knn: unpaired samples");
  if (n < 100) throw DomainError("mi_knn: need at least 100 samples");
  if (k < 1 || k >= n) throw DomainError("mi_knn: k out of range");

  MIEstimate est;
  est.estimator = "ksg_knn";
  est.k = k;
  est.n_samples = n;

  KsgScratch scratch;
  ksg_pass(a, dim_a, b, dim_b, n, k, scratch);
  std::vector<double> ja = a, jb = b;
  if (scratch.zero_distance) {
    // Duplicate points give zero radii, which the estimator cannot digest.
    est.jittered = true;
    jitter(ja, mix64(static_cast<uint64_t>(n) * 31 + static_cast<uint64_t>(dim_a)));
    jitter(jb, mix64(static_cast<uint64_t>(n) * 37 + static_cast<uint64_t>(dim_b)));
    ksg_pass(ja, dim_a, jb, dim_b, n, k, scratch);
  }

  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += digamma(scratch.count_a[static_cast<size_t>(i)] + 1.0) +
           digamma(scratch.count_b[static_cast<size_t>(i)] + 1.0);
  }
  est.value = digamma(k) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
  return est;
}

double entropy_knn(const std::vector<double>& samples, int dim, int k) {
  if (dim <= 0) throw DomainError("entropy_knn: dimension must be positive");
  if (samples.size() % static_cast<size_t>(dim) != 0) {
    throw DomainError("entropy_knn: sample buffer not a multiple of its dimension");
  }
  const int64_t n = static_cast<int64_t>(samples.size()) / dim;
  if (n < 100) throw DomainError("entropy_knn: need at least 100 samples");
  if (k < 1 || k >= n) throw DomainError("entropy_knn: k out of range");

  std::vector<double> data = samples;
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::vector<double> eps(static_cast<size_t>(n), 0.0);
    bool zero = false;
#pragma omp parallel for schedule(static) reduction(|| : zero)
    for (int64_t i = 0; i < n; ++i) {
      std::vector<double> dists(static_cast<size_t>(n - 1));
      size_t t = 0;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        dists[t++] = cheb(data.data(), dim, i, j);
      }
      std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
      eps[static_cast<size_t>(i)] = dists[static_cast<size_t>(k - 1)];
      if (eps[static_cast<size_t>(i)] == 0.0) zero = true;
    }
    if (zero) {
      jitter(data, mix64(static_cast<uint64_t>(n) * 41 + static_cast<uint64_t>(dim)));
      continue;
    }
    double log_sum = 0.0;
    for (int64_t i = 0; i < n; ++i) log_sum += std::log(eps[static_cast<size_t>(i)]);
    // Max-norm unit ball volume is 2^d.
    return digamma(static_cast<double>(n)) - digamma(static_cast<double>(k)) +
           dim * std::log(2.0) + dim * log_sum / static_cast<double>(n);
  }
  throw NumericalError("entropy_knn: zero distances persist after jitter");
}

NormalizedMiResult normalized_mi(const std::vector<float>& x_rows,
                                 const std::vector<float>& xp_rows, int64_t n, int64_t dim,
                                 int k, uint64_t projection_seed, int projection_dim) {
  if (n <= 0 || dim <= 0) throw DomainError("normalized_mi: empty sample set");
  if (static_cast<int64_t>(x_rows.size()) != n * dim ||
      static_cast<int64_t>(xp_rows.size()) != n * dim) {
    throw DomainError("normalized_mi: buffer sizes do not match n*dim");
  }
  NormalizedMiResult res;
  res.n = n;
  res.k = k;
  res.projection_seed = projection_seed;

  const bool project = dim > projection_dim;
  const int d = project ? projection_dim : static_cast<int>(dim);
  res.projection_dim = d;

  std::vector<double> px(static_cast<size_t>(n) * d, 0.0), pxp(static_cast<size_t>(n) * d, 0.0);
  if (project) {
    Rng rng(projection_seed);
    std::vector<double> g(static_cast<size_t>(dim) * d);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : g) v = rng.gaussian() * scale;
#pragma omp parallel for
    for (int64_t i = 0; i < n; ++i) {
      for (int c = 0; c < d; ++c) {
        double ax = 0.0, axp = 0.0;
        for (int64_t t = 0; t < dim; ++t) {
          const double gv = g[static_cast<size_t>(t) * d + c];
          ax += gv * x_rows[static_cast<size_t>(i * dim + t)];
          axp += gv * xp_rows[static_cast<size_t>(i * dim + t)];
        }
        px[static_cast<size_t>(i * d + c)] = ax;
        pxp[static_cast<size_t>(i * d + c)] = axp;
      }
    }
  } else {
    for (int64_t i = 0; i < n * dim; ++i) {
      px[static_cast<size_t>(i)] = x_rows[static_cast<size_t>(i)];
      pxp[static_cast<size_t>(i)] = xp_rows[static_cast<size_t>(i)];
    }
  }

  MIEstimate mi = mi_knn(px, d, pxp, d, k);
  res.mi_nats = mi.value;
  res.jittered = mi.jittered;
  res.entropy_nats = entropy_knn(px, d, k);
  if (res.entropy_nats <= 0.0) {
    res.defined = false;
    res.note = "input entropy estimate is nonpositive; ratio undefined";
    return res;
  }
  res.defined = true;
  res.value = std::max(0.0, res.mi_nats) / res.entropy_nats;
  return res;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("spearman: bad input sizes");
  auto ranks = [](const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n, 0.0);
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

}  // namespace ani
