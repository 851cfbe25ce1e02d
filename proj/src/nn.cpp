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

#include "posewarp/nn.hpp"

#include <cmath>
#include <map>

namespace posewarp::nn {

void zero_grad(const ParamRefs& params) {
  for (Parameter* p : params) {
    p->ensure_state();
    p->grad.flat().setZero();
  }
}

void Adam::step(const ParamRefs& params) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (Parameter* p : params) {
    p->ensure_state();
    if (!p->grad.all_finite())
      throw NumericError("Adam: non-finite gradient in parameter " + p->name);
    p->m.flat() = beta1_ * p->m.flat() + (1.0 - beta1_) * p->grad.flat();
    p->v.flat() = beta2_ * p->v.flat() + (1.0 - beta2_) * p->grad.flat().square();
    p->value.flat() -=
        lr_ * (p->m.flat() / bc1) / ((p->v.flat() / bc2).sqrt() + eps_);
  }
}

Tensor kaiming_normal(std::vector<int> shape, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  return Tensor::random_normal(std::move(shape), rng, stddev);
}

Conv2d::Conv2d(const std::string& name, int in_ch, int out_ch, int k, int stride_, Rng& rng,
               bool zero_init) {
  stride = stride_;
  pad = k / 2;
  w.name = name + ".w";
  w.value = zero_init ? Tensor::zeros({out_ch, in_ch, k, k})
                      : kaiming_normal({out_ch, in_ch, k, k}, in_ch * k * k, rng);
  b.name = name + ".b";
  b.value = Tensor::zeros({out_ch});
}

ad::Var Conv2d::forward(ad::Graph& g, ad::Var x) {
  return ad::conv2d(x, g.param(w), g.param(b), stride, pad);
}

void Conv2d::collect(ParamRefs& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Linear::Linear(const std::string& name, int in_dim, int out_dim, Rng& rng, bool zero_init) {
  w.name = name + ".w";
  w.value = zero_init ? Tensor::zeros({in_dim, out_dim})
                      : kaiming_normal({in_dim, out_dim}, in_dim, rng);
  b.name = name + ".b";
  b.value = Tensor::zeros({out_dim});
}

ad::Var Linear::forward(ad::Graph& g, ad::Var x) {
  return ad::linear(x, g.param(w), g.param(b));
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&w);
  out.push_back(&b);
}

GatedConv2d::GatedConv2d(const std::string& name, int in_ch, int out_ch, int k, int stride,
                         Rng& rng)
    : feature(name + ".feat", in_ch, out_ch, k, stride, rng),
      gate(name + ".gate", in_ch, out_ch, k, stride, rng) {}

ad::Var GatedConv2d::forward(ad::Graph& g, ad::Var x) {
  ad::Var f = ad::leaky_relu(feature.forward(g, x), 0.2);
  ad::Var s = ad::sigmoid(gate.forward(g, x));
  return ad::mul(f, s);
}

void GatedConv2d::collect(ParamRefs& out) {
  feature.collect(out);
  gate.collect(out);
}

ResBlock::ResBlock(const std::string& name, int in_ch, int out_ch, bool downsample_, Rng& rng)
    : conv1(name + ".conv1", in_ch, out_ch, 3, downsample_ ? 2 : 1, rng),
      conv2(name + ".conv2", out_ch, out_ch, 3, 1, rng) {
  downsample = downsample_;
  use_skip_proj = in_ch != out_ch || downsample_;
  if (use_skip_proj)
    skip = Conv2d(name + ".skip", in_ch, out_ch, 1, downsample_ ? 2 : 1, rng);
}

ad::Var ResBlock::forward(ad::Graph& g, ad::Var x) {
  ad::Var h = ad::leaky_relu(conv1.forward(g, x), 0.2);
  h = conv2.forward(g, h);
  ad::Var s = use_skip_proj ? skip.forward(g, x) : x;
  // 1/sqrt(2) keeps the residual sum's variance in check.
  return ad::mul_scalar(ad::add(h, s), M_SQRT1_2);
}

void ResBlock::collect(ParamRefs& out) {
  conv1.collect(out);
  conv2.collect(out);
  if (use_skip_proj) skip.collect(out);
}

NamedTensors named_tensors(const ParamRefs& params) {
  NamedTensors out;
  for (const Parameter* p : params) out.add(p->name, &p->value);
  return out;
}

void load_named_tensors(const ParamRefs& params,
                        const std::vector<std::pair<std::string, Tensor>>& src) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : src) by_name[name] = &t;
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end())
      throw IoError("checkpoint: missing tensor '" + p->name + "'");
    if (it->second->shape() != p->value.shape())
      throw IoError("checkpoint: shape mismatch for tensor '" + p->name + "'");
    p->value = *it->second;
  }
}

}  // namespace posewarp::nn
