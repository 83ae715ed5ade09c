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

#include "ani/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <limits>

#include "ani/errors.hpp"

namespace ani {

namespace {

// Activations are [batch, height, width, channels] inside the network; the
// public boundary is [batch, channels, height, width].
Tensor nchw_to_nhwc(const Tensor& x) {
  const int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({b, h, w, c});
  if (c == 1) {
    std::copy(x.data(), x.data() + x.numel(), out.data());
    return out;
  }
  const float* src = x.data();
  float* dst = out.data();
#pragma omp parallel for
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t p = 0; p < h * w; ++p) {
        dst[(i * h * w + p) * c + ch] = src[(i * c + ch) * h * w + p];
      }
    }
  }
  return out;
}

Tensor nhwc_to_nchw(const Tensor& x) {
  const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out({b, c, h, w});
  if (c == 1) {
    std::copy(x.data(), x.data() + x.numel(), out.data());
    return out;
  }
  const float* src = x.data();
  float* dst = out.data();
#pragma omp parallel for
  for (int64_t i = 0; i < b; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      for (int64_t p = 0; p < h * w; ++p) {
        dst[(i * c + ch) * h * w + p] = src[(i * h * w + p) * c + ch];
      }
    }
  }
  return out;
}

void uniform_fan_in_init(Tensor& t, int64_t fan_in, Rng& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  rng.fill_uniform(t.data(), t.numel(), -bound, bound);
}

class Conv2d final : public Layer {
 public:
  Conv2d(int c_in, int c_out, int kernel, int stride, int pad, float bias_init)
      : cin_(c_in), cout_(c_out), k_(kernel), stride_(stride), pad_(pad), bias_init_(bias_init) {
    w_.name = "w";
    w_.value = Tensor({static_cast<int64_t>(k_) * k_ * cin_, cout_});
    w_.grad = Tensor(w_.value.shape());
    b_.name = "b";
    b_.value = Tensor({cout_});
    b_.grad = Tensor(b_.value.shape());
  }

  void init(Rng& rng) override {
    const int64_t fan_in = static_cast<int64_t>(k_) * k_ * cin_;
    uniform_fan_in_init(w_.value, fan_in, rng);
    if (std::isnan(bias_init_)) {
      uniform_fan_in_init(b_.value, fan_in, rng);
    } else {
      b_.value.fill(bias_init_);
    }
  }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != cin_) {
      throw ConfigError("conv expects " + std::to_string(cin_) + " input channels, got " +
                        shape_str(in));
    }
    const int64_t ho = (in[1] + 2 * pad_ - k_) / stride_ + 1;
    const int64_t wo = (in[2] + 2 * pad_ - k_) / stride_ + 1;
    if (ho <= 0 || wo <= 0) throw ConfigError("conv output collapses for input " + shape_str(in));
    return {cout_, ho, wo};
  }

  int64_t flops(const Shape& in) const override {
    Shape o = out_shape(in);
    return 2LL * k_ * k_ * cin_ * cout_ * o[1] * o[2];
  }

  std::string kind() const override { return "conv2d"; }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  Tensor forward(Tensor x, Pass pass) override {
    const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int64_t ho = (h + 2 * pad_ - k_) / stride_ + 1;
    const int64_t wo = (w + 2 * pad_ - k_) / stride_ + 1;
    const int64_t rows_per_image = ho * wo;
    const int64_t patch = static_cast<int64_t>(k_) * k_ * cin_;
    Tensor out({b, ho, wo, cout_});

    const int64_t slice_b = slice_images(rows_per_image, patch, b);
    float* col = scratch(col_, static_cast<size_t>(slice_b) * rows_per_image * patch);
    for (int64_t b0 = 0; b0 < b; b0 += slice_b) {
      const int64_t nb = std::min(slice_b, b - b0);
      im2col(x, b0, nb, ho, wo, col);
      gemm(col, w_.value.data(), out.data() + b0 * rows_per_image * cout_,
           nb * rows_per_image, patch, cout_);
    }

    const float* bias = b_.value.data();
    float* o = out.data();
    const int64_t rows_total = b * rows_per_image;
#pragma omp parallel for
    for (int64_t r = 0; r < rows_total; ++r) {
      float* row = o + r * cout_;
      for (int64_t c = 0; c < cout_; ++c) row[c] += bias[c];
    }

    if (pass == Pass::kTrain) x_cache_ = std::move(x);
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    const Tensor& x = x_cache_;
    const int64_t b = x.dim(0);
    const int64_t ho = dy.dim(1), wo = dy.dim(2);
    const int64_t rows_per_image = ho * wo;
    const int64_t patch = static_cast<int64_t>(k_) * k_ * cin_;

    // Bias gradient in fixed accumulation order.
    {
      const float* d = dy.data();
      float* db = b_.grad.data();
      for (int64_t r = 0; r < b * rows_per_image; ++r) {
        for (int64_t c = 0; c < cout_; ++c) db[c] += d[r * cout_ + c];
      }
    }

    Tensor dx = Tensor::zeros(x.shape());
    const int64_t slice_b = slice_images(rows_per_image, patch, b);
    const size_t need = static_cast<size_t>(slice_b) * rows_per_image * patch;
    float* col = scratch(col_, need);
    float* dcol = scratch(dcol_, need);
    for (int64_t b0 = 0; b0 < b; b0 += slice_b) {
      const int64_t nb = std::min(slice_b, b - b0);
      const int64_t rows = nb * rows_per_image;
      const float* dy_slice = dy.data() + b0 * rows_per_image * cout_;
      // The patch matrix is recomputed instead of cached; it is the largest
      // buffer in the whole pass.
      im2col(x, b0, nb, ho, wo, col);
      gemm_tn(col, dy_slice, w_.grad.data(), patch, rows, cout_, /*accumulate=*/true);
      gemm_nt(dy_slice, w_.value.data(), dcol, rows, cout_, patch);
      col2im(dcol, b0, nb, ho, wo, dx);
    }
    return dx;
  }

 private:
  // Slices keep the two patch-matrix scratch buffers near 128 MiB each.
  static int64_t slice_images(int64_t rows_per_image, int64_t patch, int64_t b) {
    const int64_t budget = (128LL << 20) / static_cast<int64_t>(sizeof(float));
    int64_t s = budget / std::max<int64_t>(1, rows_per_image * patch);
    return std::clamp<int64_t>(s, 1, b);
  }

  // Grow-only scratch; reuse keeps large buffers mapped across batches.
  static float* scratch(std::vector<float, UninitAllocator<float>>& buf, size_t need) {
    if (buf.size() < need) buf.resize(need);
    return buf.data();
  }

  static void copy_floats(float* dst, const float* src, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] = src[i];
  }
  static void zero_floats(float* dst, int64_t n) {
    for (int64_t i = 0; i < n; ++i) dst[i] = 0.0f;
  }

  // For a fixed kernel row the kw window reads consecutive input columns,
  // which are contiguous in the channels-last layout; each (position, kh)
  // pair is one bounded span copy.
  void im2col(const Tensor& x, int64_t b0, int64_t nb, int64_t ho, int64_t wo, float* col) const {
    const int64_t h = x.dim(1), w = x.dim(2);
    const int64_t patch = static_cast<int64_t>(k_) * k_ * cin_;
    const int64_t krow = static_cast<int64_t>(k_) * cin_;
    const float* src = x.data();
#pragma omp parallel for collapse(2)
    for (int64_t bi = 0; bi < nb; ++bi) {
      for (int64_t oh = 0; oh < ho; ++oh) {
        const int64_t bimg = b0 + bi;
        for (int64_t ow = 0; ow < wo; ++ow) {
          float* row = col + ((bi * ho + oh) * wo + ow) * patch;
          const int64_t iw0 = ow * stride_ - pad_;
          const int64_t kw_lo = std::max<int64_t>(0, -iw0);
          const int64_t kw_hi = std::min<int64_t>(k_, w - iw0);
          for (int64_t kh = 0; kh < k_; ++kh) {
            const int64_t ih = oh * stride_ - pad_ + kh;
            float* dst = row + kh * krow;
            if (ih < 0 || ih >= h || kw_lo >= kw_hi) {
              zero_floats(dst, krow);
              continue;
            }
            if (kw_lo > 0) zero_floats(dst, kw_lo * cin_);
            copy_floats(dst + kw_lo * cin_, src + ((bimg * h + ih) * w + iw0 + kw_lo) * cin_,
                        (kw_hi - kw_lo) * cin_);
            if (kw_hi < k_) zero_floats(dst + kw_hi * cin_, (k_ - kw_hi) * cin_);
          }
        }
      }
    }
  }

  void col2im(const float* dcol, int64_t b0, int64_t nb, int64_t ho, int64_t wo,
              Tensor& dx) const {
    const int64_t h = dx.dim(1), w = dx.dim(2);
    const int64_t patch = static_cast<int64_t>(k_) * k_ * cin_;
    const int64_t krow = static_cast<int64_t>(k_) * cin_;
    float* dst = dx.data();
#pragma omp parallel for
    for (int64_t bi = 0; bi < nb; ++bi) {
      const int64_t bimg = b0 + bi;
      for (int64_t oh = 0; oh < ho; ++oh) {
        for (int64_t ow = 0; ow < wo; ++ow) {
          const float* row = dcol + ((bi * ho + oh) * wo + ow) * patch;
          const int64_t iw0 = ow * stride_ - pad_;
          const int64_t kw_lo = std::max<int64_t>(0, -iw0);
          const int64_t kw_hi = std::min<int64_t>(k_, w - iw0);
          if (kw_lo >= kw_hi) continue;
          for (int64_t kh = 0; kh < k_; ++kh) {
            const int64_t ih = oh * stride_ - pad_ + kh;
            if (ih < 0 || ih >= h) continue;
            const float* s = row + kh * krow + kw_lo * cin_;
            float* d = dst + ((bimg * h + ih) * w + iw0 + kw_lo) * cin_;
            const int64_t n = (kw_hi - kw_lo) * cin_;
            for (int64_t c = 0; c < n; ++c) d[c] += s[c];
          }
        }
      }
    }
  }

  int cin_, cout_, k_, stride_, pad_;
  float bias_init_;
  Param w_, b_;
  Tensor x_cache_;
  std::vector<float, UninitAllocator<float>> col_, dcol_;
};

class Linear final : public Layer {
 public:
  Linear(int f_in, int f_out) : fin_(f_in), fout_(f_out) {
    w_.name = "w";
    w_.value = Tensor({fout_, fin_});
    w_.grad = Tensor(w_.value.shape());
    b_.name = "b";
    b_.value = Tensor({fout_});
    b_.grad = Tensor(b_.value.shape());
  }

  void init(Rng& rng) override {
    uniform_fan_in_init(w_.value, fin_, rng);
    uniform_fan_in_init(b_.value, fin_, rng);
  }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 1 || in[0] != fin_) {
      throw ConfigError("linear expects " + std::to_string(fin_) + " inputs, got " +
                        shape_str(in));
    }
    return {fout_};
  }

  int64_t flops(const Shape&) const override { return 2LL * fin_ * fout_; }
  std::string kind() const override { return "linear"; }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&w_);
    out.push_back(&b_);
  }

  Tensor forward(Tensor x, Pass pass) override {
    const int64_t b = x.dim(0);
    Tensor out({b, fout_});
    gemm_nt(x.data(), w_.value.data(), out.data(), b, fin_, fout_);
    const float* bias = b_.value.data();
    float* o = out.data();
#pragma omp parallel for
    for (int64_t i = 0; i < b * fout_; ++i) o[i] += bias[i % fout_];
    if (pass == Pass::kTrain) x_cache_ = std::move(x);
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    const int64_t b = dy.dim(0);
    gemm_tn(dy.data(), x_cache_.data(), w_.grad.data(), fout_, b, fin_, /*accumulate=*/true);
    const float* d = dy.data();
    float* db = b_.grad.data();
    for (int64_t r = 0; r < b; ++r) {
      for (int64_t c = 0; c < fout_; ++c) db[c] += d[r * fout_ + c];
    }
    Tensor dx({b, fin_});
    gemm(dy.data(), w_.value.data(), dx.data(), b, fout_, fin_);
    return dx;
  }

 private:
  int fin_, fout_;
  Param w_, b_;
  Tensor x_cache_;
};

class Relu final : public Layer {
 public:
  Shape out_shape(const Shape& in) const override { return in; }
  int64_t flops(const Shape& in) const override { return shape_numel(in); }
  std::string kind() const override { return "relu"; }

  Tensor forward(Tensor x, Pass pass) override {
    float* d = x.data();
    const int64_t n = x.numel();
    if (pass == Pass::kTrain) {
      mask_.assign(static_cast<size_t>(n), 0);
      uint8_t* m = mask_.data();
#pragma omp parallel for
      for (int64_t i = 0; i < n; ++i) {
        const bool pos = d[i] > 0.0f;
        m[i] = pos;
        if (!pos) d[i] = 0.0f;
      }
    } else {
#pragma omp parallel for
      for (int64_t i = 0; i < n; ++i) {
        if (d[i] < 0.0f) d[i] = 0.0f;
      }
    }
    return x;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(dy.shape());
    const float* s = dy.data();
    float* d = dx.data();
    const uint8_t* m = mask_.data();
    const int64_t n = dy.numel();
#pragma omp parallel for
    for (int64_t i = 0; i < n; ++i) d[i] = m[i] ? s[i] : 0.0f;
    return dx;
  }

 private:
  std::vector<uint8_t> mask_;
};

class MaxPool2 final : public Layer {
 public:
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3) throw ConfigError("maxpool expects CHW input, got " + shape_str(in));
    return {in[0], in[1] / 2, in[2] / 2};
  }
  int64_t flops(const Shape& in) const override { return shape_numel(out_shape(in)); }
  std::string kind() const override { return "maxpool2"; }

  Tensor forward(Tensor x, Pass pass) override {
    const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int64_t ho = h / 2, wo = w / 2;
    Tensor out({b, ho, wo, c});
    const bool record = pass == Pass::kTrain;
    if (record) {
      argmax_.assign(static_cast<size_t>(out.numel()), 0);
      in_shape_ = x.shape();
    }
    const float* s = x.data();
    float* d = out.data();
#pragma omp parallel for collapse(2)
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t oh = 0; oh < ho; ++oh) {
        for (int64_t ow = 0; ow < wo; ++ow) {
          for (int64_t ch = 0; ch < c; ++ch) {
            int64_t best = (((bi * h + oh * 2) * w + ow * 2) * c + ch);
            float bv = s[best];
            for (int dh = 0; dh < 2; ++dh) {
              for (int dw = 0; dw < 2; ++dw) {
                const int64_t idx = (((bi * h + oh * 2 + dh) * w + ow * 2 + dw) * c + ch);
                if (s[idx] > bv) {
                  bv = s[idx];
                  best = idx;
                }
              }
            }
            const int64_t oi = ((bi * ho + oh) * wo + ow) * c + ch;
            d[oi] = bv;
            if (record) argmax_[static_cast<size_t>(oi)] = best;
          }
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx = Tensor::zeros(in_shape_);
    // Pooling windows are disjoint, so the scatter is race-free.
    const float* s = dy.data();
    float* d = dx.data();
    const int64_t n = dy.numel();
#pragma omp parallel for
    for (int64_t i = 0; i < n; ++i) d[argmax_[static_cast<size_t>(i)]] += s[i];
    return dx;
  }

 private:
  std::vector<int64_t> argmax_;
  Shape in_shape_;
};

class NearestUpsample2 final : public Layer {
 public:
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3) throw ConfigError("upsample expects CHW input, got " + shape_str(in));
    return {in[0], in[1] * 2, in[2] * 2};
  }
  int64_t flops(const Shape& in) const override { return shape_numel(out_shape(in)); }
  std::string kind() const override { return "upsample2"; }

  Tensor forward(Tensor x, Pass) override {
    const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    Tensor out({b, h * 2, w * 2, c});
    const float* s = x.data();
    float* d = out.data();
#pragma omp parallel for collapse(2)
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t oh = 0; oh < h * 2; ++oh) {
        for (int64_t ow = 0; ow < w * 2; ++ow) {
          const float* sp = s + ((bi * h + oh / 2) * w + ow / 2) * c;
          float* dp = d + ((bi * h * 2 + oh) * w * 2 + ow) * c;
          std::memcpy(dp, sp, sizeof(float) * c);
        }
      }
    }
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    const int64_t b = dy.dim(0), ho = dy.dim(1), wo = dy.dim(2), c = dy.dim(3);
    const int64_t h = ho / 2, w = wo / 2;
    Tensor dx({b, h, w, c});
    const float* s = dy.data();
    float* d = dx.data();
#pragma omp parallel for collapse(2)
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t ih = 0; ih < h; ++ih) {
        for (int64_t iw = 0; iw < w; ++iw) {
          float* dp = d + ((bi * h + ih) * w + iw) * c;
          const float* s00 = s + ((bi * ho + ih * 2) * wo + iw * 2) * c;
          const float* s01 = s00 + c;
          const float* s10 = s + ((bi * ho + ih * 2 + 1) * wo + iw * 2) * c;
          const float* s11 = s10 + c;
          for (int64_t ch = 0; ch < c; ++ch) dp[ch] = s00[ch] + s01[ch] + s10[ch] + s11[ch];
        }
      }
    }
    return dx;
  }
};

class Flatten final : public Layer {
 public:
  Shape out_shape(const Shape& in) const override { return {shape_numel(in)}; }
  int64_t flops(const Shape&) const override { return 0; }
  std::string kind() const override { return "flatten"; }

  Tensor forward(Tensor x, Pass) override {
    in_shape_ = x.shape();
    x.reshape({x.dim(0), x.numel() / x.dim(0)});
    return x;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    dx.reshape(in_shape_);
    return dx;
  }

 private:
  Shape in_shape_;
};

class ReshapeToImage final : public Layer {
 public:
  explicit ReshapeToImage(Shape chw) : chw_(std::move(chw)) {}

  Shape out_shape(const Shape& in) const override {
    if (shape_numel(in) != shape_numel(chw_)) {
      throw ConfigError("reshape " + shape_str(in) + " -> " + shape_str(chw_) +
                        " changes element count");
    }
    return chw_;
  }
  int64_t flops(const Shape&) const override { return 0; }
  std::string kind() const override { return "reshape"; }

  Tensor forward(Tensor x, Pass) override {
    x.reshape({x.dim(0), chw_[1], chw_[2], chw_[0]});
    return x;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx = dy;
    dx.reshape({dy.dim(0), shape_numel(chw_)});
    return dx;
  }

 private:
  Shape chw_;
};

// w = tanh(exp(a)). The image maps any real pre-activation into (0,1); the
// pre-activation is clamped to +-80 so exp stays finite and strictly
// positive in float32.
class ExpTanh final : public Layer {
 public:
  Shape out_shape(const Shape& in) const override { return in; }
  int64_t flops(const Shape& in) const override { return 2 * shape_numel(in); }
  std::string kind() const override { return "exp_tanh"; }

  Tensor forward(Tensor x, Pass pass) override {
    float* d = x.data();
    const int64_t n = x.numel();
    const bool record = pass == Pass::kTrain;
    if (record) {
      exp_cache_.assign(static_cast<size_t>(n), 0.0f);
      out_cache_.assign(static_cast<size_t>(n), 0.0f);
    }
#pragma omp parallel for
    for (int64_t i = 0; i < n; ++i) {
      const float a = std::clamp(d[i], -80.0f, 80.0f);
      const float e = std::exp(a);
      const float t = std::tanh(e);
      d[i] = t;
      if (record) {
        exp_cache_[static_cast<size_t>(i)] = e;
        out_cache_[static_cast<size_t>(i)] = t;
      }
    }
    return x;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor dx(dy.shape());
    const float* s = dy.data();
    float* d = dx.data();
    const int64_t n = dy.numel();
#pragma omp parallel for
    for (int64_t i = 0; i < n; ++i) {
      const float t = out_cache_[static_cast<size_t>(i)];
      d[i] = s[i] * (1.0f - t * t) * exp_cache_[static_cast<size_t>(i)];
    }
    return dx;
  }

 private:
  std::vector<float> exp_cache_;
  std::vector<float> out_cache_;
};

class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(int channels) : c_(channels) {
    gamma_.name = "gamma";
    gamma_.value = Tensor({c_}, 1.0f);
    gamma_.grad = Tensor({c_});
    beta_.name = "beta";
    beta_.value = Tensor({c_});
    beta_.grad = Tensor({c_});
    running_mean_.assign(static_cast<size_t>(c_), 0.0f);
    running_var_.assign(static_cast<size_t>(c_), 1.0f);
  }

  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3 || in[0] != c_) {
      throw ConfigError("batchnorm expects " + std::to_string(c_) + " channels, got " +
                        shape_str(in));
    }
    return in;
  }
  int64_t flops(const Shape& in) const override { return 2 * shape_numel(in); }
  std::string kind() const override { return "batchnorm2d"; }

  void collect_params(std::vector<Param*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  Tensor forward(Tensor x, Pass pass) override {
    const int64_t n = x.numel() / c_;
    float* d = x.data();
    const float* s = d;
    if (pass == Pass::kTrain) {
      std::vector<double> sum(static_cast<size_t>(c_), 0.0), sumsq(static_cast<size_t>(c_), 0.0);
      for (int64_t i = 0; i < x.numel(); ++i) {
        const int64_t ch = i % c_;
        sum[static_cast<size_t>(ch)] += s[i];
        sumsq[static_cast<size_t>(ch)] += static_cast<double>(s[i]) * s[i];
      }
      mean_.resize(static_cast<size_t>(c_));
      invstd_.resize(static_cast<size_t>(c_));
      for (int64_t ch = 0; ch < c_; ++ch) {
        const double m = sum[static_cast<size_t>(ch)] / static_cast<double>(n);
        const double v = sumsq[static_cast<size_t>(ch)] / static_cast<double>(n) - m * m;
        mean_[static_cast<size_t>(ch)] = static_cast<float>(m);
        invstd_[static_cast<size_t>(ch)] = static_cast<float>(1.0 / std::sqrt(v + kEps));
        const double unbiased = n > 1 ? v * n / (n - 1.0) : v;
        running_mean_[static_cast<size_t>(ch)] =
            static_cast<float>((1.0 - kMomentum) * running_mean_[static_cast<size_t>(ch)] +
                               kMomentum * m);
        running_var_[static_cast<size_t>(ch)] =
            static_cast<float>((1.0 - kMomentum) * running_var_[static_cast<size_t>(ch)] +
                               kMomentum * unbiased);
      }
      xhat_ = Tensor(x.shape());
      float* xh = xhat_.data();
      const float* g = gamma_.value.data();
      const float* bt = beta_.value.data();
#pragma omp parallel for
      for (int64_t i = 0; i < x.numel(); ++i) {
        const int64_t ch = i % c_;
        const float h = (s[i] - mean_[static_cast<size_t>(ch)]) * invstd_[static_cast<size_t>(ch)];
        xh[i] = h;
        d[i] = g[ch] * h + bt[ch];
      }
      n_cache_ = n;
    } else {
      const float* g = gamma_.value.data();
      const float* bt = beta_.value.data();
#pragma omp parallel for
      for (int64_t i = 0; i < x.numel(); ++i) {
        const int64_t ch = i % c_;
        const float inv = 1.0f / std::sqrt(running_var_[static_cast<size_t>(ch)] + kEps);
        d[i] = g[ch] * (s[i] - running_mean_[static_cast<size_t>(ch)]) * inv + bt[ch];
      }
    }
    return x;
  }

  Tensor backward(const Tensor& dy) override {
    const int64_t n = n_cache_;
    const float* s = dy.data();
    const float* xh = xhat_.data();
    std::vector<double> dg(static_cast<size_t>(c_), 0.0), db(static_cast<size_t>(c_), 0.0);
    for (int64_t i = 0; i < dy.numel(); ++i) {
      const int64_t ch = i % c_;
      dg[static_cast<size_t>(ch)] += static_cast<double>(s[i]) * xh[i];
      db[static_cast<size_t>(ch)] += s[i];
    }
    for (int64_t ch = 0; ch < c_; ++ch) {
      gamma_.grad[ch] += static_cast<float>(dg[static_cast<size_t>(ch)]);
      beta_.grad[ch] += static_cast<float>(db[static_cast<size_t>(ch)]);
    }
    Tensor dx(dy.shape());
    float* d = dx.data();
    const float* g = gamma_.value.data();
#pragma omp parallel for
    for (int64_t i = 0; i < dy.numel(); ++i) {
      const int64_t ch = i % c_;
      const double term = n * static_cast<double>(s[i]) - db[static_cast<size_t>(ch)] -
                          static_cast<double>(xh[i]) * dg[static_cast<size_t>(ch)];
      d[i] = static_cast<float>(g[ch] * invstd_[static_cast<size_t>(ch)] * term /
                                static_cast<double>(n));
    }
    return dx;
  }

 private:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;
  int c_;
  Param gamma_, beta_;
  std::vector<float> running_mean_, running_var_;
  std::vector<float> mean_, invstd_;
  Tensor xhat_;
  int64_t n_cache_ = 0;
};

class GlobalAvgPool final : public Layer {
 public:
  Shape out_shape(const Shape& in) const override {
    if (in.size() != 3) throw ConfigError("avgpool expects CHW input, got " + shape_str(in));
    return {in[0]};
  }
  int64_t flops(const Shape& in) const override { return shape_numel(in); }
  std::string kind() const override { return "global_avg_pool"; }

  Tensor forward(Tensor x, Pass) override {
    const int64_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    hw_ = h * w;
    Tensor out({b, c});
    const float* s = x.data();
    float* d = out.data();
#pragma omp parallel for
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int64_t p = 0; p < hw_; ++p) acc += s[(bi * hw_ + p) * c + ch];
        d[bi * c + ch] = static_cast<float>(acc / static_cast<double>(hw_));
      }
    }
    hwc_ = {h, w, c};
    return out;
  }

  Tensor backward(const Tensor& dy) override {
    const int64_t b = dy.dim(0), c = dy.dim(1);
    Tensor dx({b, hwc_[0], hwc_[1], hwc_[2]});
    const float* s = dy.data();
    float* d = dx.data();
    const float scale = 1.0f / static_cast<float>(hw_);
#pragma omp parallel for
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t p = 0; p < hw_; ++p) {
        for (int64_t ch = 0; ch < c; ++ch) d[(bi * hw_ + p) * c + ch] = s[bi * c + ch] * scale;
      }
    }
    return dx;
  }

 private:
  int64_t hw_ = 0;
  Shape hwc_;
};

class PreactBlock final : public Layer {
 public:
  PreactBlock(int c_in, int c_out, int stride)
      : cin_(c_in),
        cout_(c_out),
        stride_(stride),
        needs_proj_(stride != 1 || c_in != c_out),
        bn1_(c_in),
        bn2_(c_out),
        conv1_(c_in, c_out, 3, stride, 1, NAN),
        conv2_(c_out, c_out, 3, 1, 1, NAN),
        proj_(c_in, c_out, 1, stride, 0, NAN) {
    prefix_params(bn1_, "bn1");
    prefix_params(conv1_, "conv1");
    prefix_params(bn2_, "bn2");
    prefix_params(conv2_, "conv2");
    if (needs_proj_) prefix_params(proj_, "proj");
  }

  void init(Rng& rng) override {
    conv1_.init(rng);
    conv2_.init(rng);
    if (needs_proj_) proj_.init(rng);
  }

  Shape out_shape(const Shape& in) const override {
    return conv2_.out_shape(bn2_.out_shape(conv1_.out_shape(bn1_.out_shape(in))));
  }

  int64_t flops(const Shape& in) const override {
    Shape a = bn1_.out_shape(in);
    Shape t = conv1_.out_shape(a);
    int64_t f = bn1_.flops(in) + shape_numel(a) /*relu*/ + conv1_.flops(a) + bn2_.flops(t) +
                shape_numel(t) /*relu*/ + conv2_.flops(t) + shape_numel(t) /*residual add*/;
    if (needs_proj_) f += proj_.flops(a);
    return f;
  }

  std::string kind() const override { return "preact_block"; }

  void collect_params(std::vector<Param*>& out) override {
    bn1_.collect_params(out);
    conv1_.collect_params(out);
    bn2_.collect_params(out);
    conv2_.collect_params(out);
    if (needs_proj_) proj_.collect_params(out);
  }

  Tensor forward(Tensor x, Pass pass) override {
    Tensor shortcut;
    if (!needs_proj_) shortcut = x;
    Tensor a = relu1_.forward(bn1_.forward(std::move(x), pass), pass);
    if (needs_proj_) shortcut = proj_.forward(a, pass);
    Tensor t = conv1_.forward(std::move(a), pass);
    Tensor u = relu2_.forward(bn2_.forward(std::move(t), pass), pass);
    Tensor v = conv2_.forward(std::move(u), pass);
    float* d = v.data();
    const float* sp = shortcut.data();
#pragma omp parallel for
    for (int64_t i = 0; i < v.numel(); ++i) d[i] += sp[i];
    return v;
  }

  Tensor backward(const Tensor& dy) override {
    Tensor da = conv1_.backward(bn2_.backward(relu2_.backward(conv2_.backward(dy))));
    Tensor dx_direct;
    if (needs_proj_) {
      Tensor dp = proj_.backward(dy);
      float* d = da.data();
      const float* sp = dp.data();
#pragma omp parallel for
      for (int64_t i = 0; i < da.numel(); ++i) d[i] += sp[i];
    }
    Tensor dx = bn1_.backward(relu1_.backward(da));
    if (!needs_proj_) {
      float* d = dx.data();
      const float* sp = dy.data();
#pragma omp parallel for
      for (int64_t i = 0; i < dx.numel(); ++i) d[i] += sp[i];
    }
    return dx;
  }

 private:
  static void prefix_params(Layer& l, const std::string& prefix) {
    std::vector<Param*> ps;
    l.collect_params(ps);
    for (Param* p : ps) p->name = prefix + "." + p->name;
  }

  int cin_, cout_, stride_;
  bool needs_proj_;
  BatchNorm2d bn1_, bn2_;
  Relu relu1_, relu2_;
  Conv2d conv1_, conv2_, proj_;
};

}  // namespace

std::unique_ptr<Layer> make_conv2d(int c_in, int c_out, int kernel, int stride, int pad) {
  return std::make_unique<Conv2d>(c_in, c_out, kernel, stride, pad, NAN);
}
std::unique_ptr<Layer> make_linear(int f_in, int f_out) {
  return std::make_unique<Linear>(f_in, f_out);
}
std::unique_ptr<Layer> make_relu() { return std::make_unique<Relu>(); }
std::unique_ptr<Layer> make_maxpool2() { return std::make_unique<MaxPool2>(); }
std::unique_ptr<Layer> make_nearest_upsample2() { return std::make_unique<NearestUpsample2>(); }
std::unique_ptr<Layer> make_flatten() { return std::make_unique<Flatten>(); }
std::unique_ptr<Layer> make_reshape(Shape chw) {
  return std::make_unique<ReshapeToImage>(std::move(chw));
}
std::unique_ptr<Layer> make_exp_tanh() { return std::make_unique<ExpTanh>(); }
std::unique_ptr<Layer> make_batchnorm2d(int channels) {
  return std::make_unique<BatchNorm2d>(channels);
}
std::unique_ptr<Layer> make_global_avg_pool() { return std::make_unique<GlobalAvgPool>(); }
std::unique_ptr<Layer> make_preact_block(int c_in, int c_out, int stride) {
  return std::make_unique<PreactBlock>(c_in, c_out, stride);
}

Network::Network(std::string arch_name, Shape input_shape)
    : arch_name_(std::move(arch_name)), input_shape_(std::move(input_shape)) {}

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

void Network::init(uint64_t seed) {
  Rng root(seed);
  for (size_t i = 0; i < layers_.size(); ++i) {
    Rng r = root.derive(i);
    layers_[i]->init(r);
  }
}

Tensor Network::forward(const Tensor& x, Pass pass) {
  Tensor cur;
  if (input_shape_.size() == 3) {
    if (x.shape().size() != 4 || x.dim(1) != input_shape_[0] || x.dim(2) != input_shape_[1] ||
        x.dim(3) != input_shape_[2]) {
      throw ConfigError(arch_name_ + ": input " + shape_str(x.shape()) +
                        " does not match expected image shape " + shape_str(input_shape_));
    }
    cur = nchw_to_nhwc(x);
  } else {
    cur = x;
  }
  for (auto& l : layers_) cur = l->forward(std::move(cur), pass);
  forward_ran_ = pass == Pass::kTrain;
  if (cur.shape().size() == 4) cur = nhwc_to_nchw(cur);
  return cur;
}

Tensor Network::backward(const Tensor& dy) {
  if (!forward_ran_) throw NumericalError(arch_name_ + ": backward without a training forward");
  Tensor cur = dy.shape().size() == 4 ? nchw_to_nhwc(dy) : dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  if (cur.shape().size() == 4) cur = nhwc_to_nchw(cur);
  return cur;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (size_t i = 0; i < layers_.size(); ++i) {
    size_t before = out.size();
    layers_[i]->collect_params(out);
    for (size_t j = before; j < out.size(); ++j) {
      if (out[j]->name.find('.') == std::string::npos) {
        out[j]->name = "l" + std::to_string(i) + "." + layers_[i]->kind() + "." + out[j]->name;
      }
    }
  }
  return out;
}

void Network::zero_grad() {
  for (Param* p : params()) p->grad.fill(0.0f);
}

Shape Network::output_shape() const {
  Shape cur = input_shape_;
  for (const auto& l : layers_) cur = l->out_shape(cur);
  return cur;
}

ArchitectureSpec Network::describe() const {
  ArchitectureSpec spec;
  spec.name = arch_name_;
  spec.input_shape = input_shape_;
  Shape cur = input_shape_;
  for (const auto& l : layers_) {
    LayerInfo info;
    info.kind = l->kind();
    info.in = cur;
    info.out = l->out_shape(cur);
    info.flops = l->flops(cur);
    std::vector<Param*> ps;
    const_cast<Layer*>(l.get())->collect_params(ps);
    for (Param* p : ps) info.n_params += p->value.numel();
    spec.total_flops += info.flops;
    spec.total_params += info.n_params;
    cur = info.out;
    spec.layers.push_back(std::move(info));
  }
  spec.output_shape = cur;
  return spec;
}

namespace {

struct ShapeTracker {
  Network* net;
  Shape cur;
  void push(std::unique_ptr<Layer> l) {
    cur = l->out_shape(cur);
    net->add(std::move(l));
  }
};

std::unique_ptr<Network> build_conv5(const Shape& in, int n_classes) {
  auto net = std::make_unique<Network>("conv5", in);
  ShapeTracker t{net.get(), in};
  t.push(make_conv2d(static_cast<int>(in[0]), 16, 3, 1, 1));
  t.push(make_relu());
  t.push(make_conv2d(16, 32, 3, 1, 1));
  t.push(make_relu());
  t.push(make_maxpool2());
  t.push(make_conv2d(32, 64, 3, 1, 1));
  t.push(make_relu());
  t.push(make_maxpool2());
  t.push(make_flatten());
  t.push(make_linear(static_cast<int>(shape_numel(t.cur)), 128));
  t.push(make_relu());
  t.push(make_linear(128, n_classes));
  return net;
}

std::unique_ptr<Network> build_wrn16x4(const Shape& in, int n_classes) {
  auto net = std::make_unique<Network>("wrn16x4", in);
  ShapeTracker t{net.get(), in};
  t.push(make_conv2d(static_cast<int>(in[0]), 16, 3, 1, 1));
  t.push(make_preact_block(16, 64, 1));
  t.push(make_preact_block(64, 64, 1));
  t.push(make_preact_block(64, 128, 2));
  t.push(make_preact_block(128, 128, 1));
  t.push(make_preact_block(128, 256, 2));
  t.push(make_preact_block(256, 256, 1));
  t.push(make_batchnorm2d(256));
  t.push(make_relu());
  t.push(make_global_avg_pool());
  t.push(make_linear(256, n_classes));
  return net;
}

// Encoder-decoder mask network. The encoder pools the image down and a
// fully-connected stage maps it to a one-channel spatial embedding; the
// decoder upsamples back to the input size. The exp+tanh head keeps every
// output in (0,1).
std::unique_ptr<Network> build_wconv(const Shape& in, int stages, const std::string& name) {
  const int c_in = static_cast<int>(in[0]);
  auto net = std::make_unique<Network>(name, in);
  ShapeTracker t{net.get(), in};
  int c = c_in;
  for (int s = 0; s < stages; ++s) {
    t.push(make_conv2d(c, 8, 3, 1, 1));
    t.push(make_relu());
    t.push(make_maxpool2());
    c = 8;
  }
  const Shape emb = t.cur;  // {8, H/2^stages, W/2^stages}
  const int64_t spatial = emb[1] * emb[2];
  t.push(make_flatten());
  t.push(make_linear(static_cast<int>(shape_numel(emb)), static_cast<int>(spatial)));
  t.push(make_relu());
  t.push(make_reshape({1, emb[1], emb[2]}));
  for (int s = 0; s < stages; ++s) {
    t.push(make_nearest_upsample2());
    if (s + 1 < stages) {
      t.push(make_conv2d(1, 1, 3, 1, 1));
      t.push(make_relu());
    } else {
      // Bias starts positive so the initial mask sits near 1 and the
      // transform begins close to identity.
      t.push(std::make_unique<Conv2d>(1, c_in, 3, 1, 1, 1.0f));
    }
  }
  t.push(make_exp_tanh());
  return net;
}

}  // namespace

std::unique_ptr<Network> build_primary(const std::string& arch, const Shape& input_shape,
                                       int n_classes) {
  if (n_classes < 2) throw ConfigError("primary network needs >= 2 classes");
  if (arch == "conv5") return build_conv5(input_shape, n_classes);
  if (arch == "wrn16x4") return build_wrn16x4(input_shape, n_classes);
  throw ConfigError("unknown primary architecture: " + arch);
}

std::unique_ptr<Network> build_mask_net(const std::string& arch, const Shape& input_shape) {
  if (arch == "wconv2") return build_wconv(input_shape, 1, "wconv2");
  if (arch == "wconv4") return build_wconv(input_shape, 2, "wconv4");
  throw ConfigError("unknown mask architecture: " + arch);
}

std::unique_ptr<Network> build_attacker(const std::string& arch, const Shape& input_shape,
                                        int n_classes) {
  return build_primary(arch, input_shape, n_classes);
}

std::string default_primary_arch(const std::string& dataset_name) {
  return dataset_name == "cifar100" ? "wrn16x4" : "conv5";
}

std::string default_mask_arch(const std::string& dataset_name) {
  return dataset_name == "cifar100" ? "wconv4" : "wconv2";
}

int64_t count_flops(const Network& net) { return net.describe().total_flops; }

}  // namespace ani
