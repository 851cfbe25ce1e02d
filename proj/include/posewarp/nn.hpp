/* Copyright 2026 The PoseWarp Authors.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef POSEWARP_NN_HPP
#define POSEWARP_NN_HPP

#include <string>
#include <vector>

#include "posewarp/autodiff.hpp"
#include "posewarp/tensor.hpp"

namespace posewarp::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  // ADAM state.
  Tensor m;
  Tensor v;

  void ensure_state() {
    if (grad.numel() == 0) grad = Tensor::zeros(value.shape());
    if (m.numel() == 0) m = Tensor::zeros(value.shape());
    if (v.numel() == 0) v = Tensor::zeros(value.shape());
  }
};

using ParamRefs = std::vector<Parameter*>;

void zero_grad(const ParamRefs& params);

// ADAM with bias correction. beta1 = 0 is common here, which reduces the
// first moment to the raw gradient.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const ParamRefs& params);

  double lr() const { return lr_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  long steps_taken() const { return t_; }
  void set_steps_taken(long t) { t_ = t; }

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
};

// Fan-in scaled normal init (He) for conv / linear weights.
Tensor kaiming_normal(std::vector<int> shape, int fan_in, Rng& rng);

// --- layers -------------------------------------------------------------------

struct Conv2d {
  Parameter w;  // [Co,Ci,k,k]
  Parameter b;  // [Co]
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int k, int stride, Rng& rng,
         bool zero_init = false);

  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(ParamRefs& out);
};

struct Linear {
  Parameter w;  // [K,M]
  Parameter b;  // [M]

  Linear() = default;
  Linear(const std::string& name, int in_dim, int out_dim, Rng& rng, bool zero_init = false);

  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(ParamRefs& out);
};

// Two parallel convolutions, a feature path through leaky-relu gated by a
// sigmoid path.
struct GatedConv2d {
  Conv2d feature;
  Conv2d gate;

  GatedConv2d() = default;
  GatedConv2d(const std::string& name, int in_ch, int out_ch, int k, int stride, Rng& rng);

  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(ParamRefs& out);
};

// conv -> lrelu -> conv with a (possibly projected) skip, optional stride-2
// downsample on the way in.
struct ResBlock {
  Conv2d conv1;
  Conv2d conv2;
  Conv2d skip;  // 1x1, used when channel counts differ or downsampling
  bool use_skip_proj = false;
  bool downsample = false;

  ResBlock() = default;
  ResBlock(const std::string& name, int in_ch, int out_ch, bool downsample, Rng& rng);

  ad::Var forward(ad::Graph& g, ad::Var x);
  void collect(ParamRefs& out);
};

// Named flat view of a model's tensors, used by checkpointing.
struct NamedTensors {
  std::vector<std::pair<std::string, const Tensor*>> items;
  void add(const std::string& name, const Tensor* t) { items.emplace_back(name, t); }
};

NamedTensors named_tensors(const ParamRefs& params);
// Copies `src` values into the parameters by name; every parameter must be
// present with a matching shape.
void load_named_tensors(const ParamRefs& params,
                        const std::vector<std::pair<std::string, Tensor>>& src);

}  // namespace posewarp::nn

#endif  // POSEWARP_NN_HPP
