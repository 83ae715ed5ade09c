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

#include <memory>
#include <string>
#include <vector>

#include "ani/rng.hpp"
#include "ani/tensor.hpp"

namespace ani {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
};

// kInfer runs forward without writing any caches; it is reentrant and may be
// called concurrently on a frozen network. kTrain captures what backward
// needs and is exclusive to one caller.
enum class Pass { kInfer, kTrain };

// Per-example shapes are {channels, height, width} or {features}; batch
// tensors add a leading batch dimension. Convolutional activations are
// stored channels-last internally.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(Tensor x, Pass pass) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  virtual void collect_params(std::vector<Param*>&) {}
  virtual void init(Rng&) {}
  virtual Shape out_shape(const Shape& in) const = 0;
  virtual int64_t flops(const Shape& in) const = 0;
  virtual std::string kind() const = 0;
};

std::unique_ptr<Layer> make_conv2d(int c_in, int c_out, int kernel, int stride, int pad);
std::unique_ptr<Layer> make_linear(int f_in, int f_out);
std::unique_ptr<Layer> make_relu();
std::unique_ptr<Layer> make_maxpool2();
std::unique_ptr<Layer> make_nearest_upsample2();
std::unique_ptr<Layer> make_flatten();
std::unique_ptr<Layer> make_reshape(Shape chw);
std::unique_ptr<Layer> make_exp_tanh();
std::unique_ptr<Layer> make_batchnorm2d(int channels);
std::unique_ptr<Layer> make_global_avg_pool();
// Pre-activation residual block (two 3x3 convolutions; projection shortcut
// when the shape changes).
std::unique_ptr<Layer> make_preact_block(int c_in, int c_out, int stride);

struct LayerInfo {
  std::string kind;
  Shape in;
  Shape out;
  int64_t flops = 0;
  int64_t n_params = 0;
};

struct ArchitectureSpec {
  std::string name;
  Shape input_shape;   // {C, H, W}
  Shape output_shape;  // {n_classes} or {C, H, W}
  std::vector<LayerInfo> layers;
  int64_t total_flops = 0;
  int64_t total_params = 0;
};

// A sequential network. Image batches cross the public boundary as
// [B, C, H, W]; conversion to the internal layout happens at entry/exit.
class Network {
 public:
  Network(std::string arch_name, Shape input_shape);

  void add(std::unique_ptr<Layer> layer);
  void init(uint64_t seed);

  // x is [B, C, H, W] for image inputs. Output is logits [B, n] for
  // classifiers or an image-shaped [B, C, H, W] tensor for mask networks.
  Tensor forward(const Tensor& x, Pass pass);
  // dy matches forward's output layout; returns d(loss)/d(input) as
  // [B, C, H, W]. Only valid after a kTrain forward.
  Tensor backward(const Tensor& dy);

  std::vector<Param*> params();
  void zero_grad();

  const std::string& arch() const { return arch_name_; }
  const Shape& input_shape() const { return input_shape_; }
  Shape output_shape() const;
  ArchitectureSpec describe() const;

 private:
  std::string arch_name_;
  Shape input_shape_;
  std::vector<std::unique_ptr<Layer>> layers_;
  bool forward_ran_ = false;
};

// f_theta: the service provider's primary classifier. arch is "conv5" or
// "wrn16x4".
std::unique_ptr<Network> build_primary(const std::string& arch, const Shape& input_shape,
                                       int n_classes);
// f_psi: the client-side weight-mask network. arch is "wconv2" or "wconv4".
// Output has the input's shape with every element in (0,1).
std::unique_ptr<Network> build_mask_net(const std::string& arch, const Shape& input_shape);
// f_phi: the adversary's secondary classifier; same family as the primary.
std::unique_ptr<Network> build_attacker(const std::string& arch, const Shape& input_shape,
                                        int n_classes);

std::string default_primary_arch(const std::string& dataset_name);
std::string default_mask_arch(const std::string& dataset_name);

// FLOPs for one example. Convolutions count 2*K_h*K_w*C_in*C_out*H_out*W_out,
// fully-connected layers 2*fan_in*fan_out, activations and pooling 1 per
// output element; parameter values do not enter.
int64_t count_flops(const Network& net);

}  // namespace ani
