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

#ifndef POSEWARP_AUTODIFF_HPP
#define POSEWARP_AUTODIFF_HPP

#include <functional>
#include <memory>
#include <vector>

#include "posewarp/tensor.hpp"
#include "posewarp/uvgeom.hpp"

namespace posewarp::nn {
struct Parameter;
}

namespace posewarp::ad {

class Graph;

// One tape entry: a value, its (lazily allocated) cotangent and the closure
// that pushes the cotangent into the entry's inputs.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::function<void()> backprop;
  Graph* owner = nullptr;

  Tensor& grad_ref() {
    if (grad.numel() == 0) grad = Tensor::zeros(value.shape());
    return grad;
  }
  bool grad_touched() const { return grad.numel() != 0; }
};

// Cheap handle into a Graph's tape.
struct Var {
  Node* node = nullptr;
  bool defined() const { return node != nullptr; }
  const Tensor& value() const { return node->value; }
  const std::vector<int>& shape() const { return node->value.shape(); }
};

// Reverse-mode tape. One Graph per forward/backward episode; nodes are
// replayed strictly in reverse creation order, so every node's cotangent is
// complete before its own backprop fires.
class Graph {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  // Leaf bound to an external parameter; backward() accumulates into p.grad.
  Var param(nn::Parameter& p);

  void backward(Var root);

  Node* make(Tensor value, bool requires_grad);
  std::size_t size() const { return tape_.size(); }

 private:
  std::vector<std::unique_ptr<Node>> tape_;
  std::vector<std::pair<nn::Parameter*, Node*>> bound_;
};

// --- elementwise / arithmetic ------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var add_scalar(Var a, double s);
Var mul_scalar(Var a, double s);
Var mul_const(Var a, const Tensor& m);  // elementwise by a constant tensor
Var abs_(Var a);
Var square(Var a);
Var sqrt_(Var a);
Var clamp_min(Var a, double lo);
Var relu(Var a);
Var leaky_relu(Var a, double slope);
Var tanh_(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var detach(Var a);

// --- reductions ---------------------------------------------------------------
Var sum(Var a);          // -> [1]
Var mean(Var a);         // -> [1]
Var mean_abs(Var a);     // -> [1]
Var global_avg_pool(Var a);  // [N,C,H,W] -> [N,C]

// --- shape / structure ---------------------------------------------------------
Var reshape(Var a, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& parts);
Var concat_batch(const std::vector<Var>& parts);
Var upsample_nearest2(Var a);
Var avg_pool2(Var a);

// --- linear algebra ------------------------------------------------------------
Var matmul(Var a, Var b);                 // [M,K]x[K,N]
Var linear(Var x, Var w, Var b);          // x[N,K], w[K,M], b[M]

// --- convolution ----------------------------------------------------------------
// x [N,Ci,H,W], w [Co,Ci,k,k], optional bias [Co]; pad = k/2 semantics chosen
// by the caller.
Var conv2d(Var x, Var w, Var b, int stride, int pad);
// Per-sample weight modulation: w'[n,o,i,:] = w[o,i,:] * style[n,i]; when
// demodulate is set each output filter is rescaled to unit norm.
Var conv2d_modulated(Var x, Var w, Var style, bool demodulate, Var b);

// --- normalization / noise -------------------------------------------------------
// Per-sample zero-mean unit-std over (C,H,W); eps inside the sqrt.
Var normalize_unit(Var x, double eps);
// y = x + strength * noise (strength is a [1] parameter, noise constant).
Var add_noise(Var x, Var strength, const Tensor& noise);
Var add_channel_bias(Var x, Var b);  // x [N,C,H,W], b [C]

// --- warping ---------------------------------------------------------------------
// Differentiable bilinear sampling w.r.t. both source and coordinates.
Var grid_sample(Var src, Var coords);
// Fixed-geometry gather from UV space (linear in the UV payload). The plan is
// shared with the tape, which may outlive the caller's copy.
Var uv_gather(Var uv_data, std::shared_ptr<const uvgeom::GatherPlan> plan);

}  // namespace posewarp::ad

#endif  // POSEWARP_AUTODIFF_HPP
