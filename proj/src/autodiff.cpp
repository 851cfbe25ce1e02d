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

#include "posewarp/autodiff.hpp"

#include <cmath>

#include "posewarp/nn.hpp"

namespace posewarp::ad {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Var Graph::leaf(Tensor value, bool requires_grad) {
  return Var{make(std::move(value), requires_grad)};
}

Var Graph::param(nn::Parameter& p) {
  p.ensure_state();
  Node* n = make(p.value, true);
  bound_.emplace_back(&p, n);
  return Var{n};
}

Node* Graph::make(Tensor value, bool requires_grad) {
  auto node = std::make_unique<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->owner = this;
  Node* raw = node.get();
  tape_.push_back(std::move(node));
  return raw;
}

void Graph::backward(Var root) {
  check(root.defined(), "Graph::backward: undefined root");
  check(root.node->value.numel() == 1, "Graph::backward: root must be scalar");
  root.node->grad_ref().flat().setConstant(1.0);
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
    Node* n = it->get();
    if (n->backprop && n->grad_touched()) n->backprop();
  }
  for (auto& [p, n] : bound_) {
    if (n->grad_touched()) p->grad.flat() += n->grad.flat();
  }
}

namespace {

Graph& graph_of(std::initializer_list<Var> parents) {
  for (const Var& p : parents)
    if (p.defined()) return *p.node->owner;
  throw ValidationError("ad: op with no defined inputs");
}

bool needs_grad(std::initializer_list<Var> parents) {
  for (const Var& p : parents)
    if (p.defined() && p.node->requires_grad) return true;
  return false;
}

// Creates the result node; the caller then assigns node->backprop (only when
// gradients are demanded).
Node* result_node(std::initializer_list<Var> parents, Tensor value) {
  Graph& g = graph_of(parents);
  return g.make(std::move(value), needs_grad(parents));
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  check(a.value().same_shape(b.value()), std::string(op) + ": shape mismatch");
}

void accumulate(Node* n, const Tensor& g) { n->grad_ref().flat() += g.flat(); }

}  // namespace

// --- elementwise ---------------------------------------------------------------

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  out.flat() += b.value().flat();
  Node* n = result_node({a, b}, std::move(out));
  if (n->requires_grad) {
    Node *an = a.node, *bn = b.node;
    n->backprop = [n, an, bn] {
      if (an->requires_grad) accumulate(an, n->grad);
      if (bn->requires_grad) accumulate(bn, n->grad);
    };
  }
  return Var{n};
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  out.flat() -= b.value().flat();
  Node* n = result_node({a, b}, std::move(out));
  if (n->requires_grad) {
    Node *an = a.node, *bn = b.node;
    n->backprop = [n, an, bn] {
      if (an->requires_grad) accumulate(an, n->grad);
      if (bn->requires_grad) bn->grad_ref().flat() -= n->grad.flat();
    };
  }
  return Var{n};
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  out.flat() *= b.value().flat();
  Node* n = result_node({a, b}, std::move(out));
  if (n->requires_grad) {
    Node *an = a.node, *bn = b.node;
    n->backprop = [n, an, bn] {
      if (an->requires_grad) an->grad_ref().flat() += n->grad.flat() * bn->value.flat();
      if (bn->requires_grad) bn->grad_ref().flat() += n->grad.flat() * an->value.flat();
    };
  }
  return Var{n};
}

Var div(Var a, Var b) {
  check_same_shape(a, b, "div");
  Tensor out = a.value();
  out.flat() /= b.value().flat();
  Node* n = result_node({a, b}, std::move(out));
  if (n->requires_grad) {
    Node *an = a.node, *bn = b.node;
    n->backprop = [n, an, bn] {
      if (an->requires_grad) an->grad_ref().flat() += n->grad.flat() / bn->value.flat();
      if (bn->requires_grad)
        bn->grad_ref().flat() -=
            n->grad.flat() * an->value.flat() / (bn->value.flat() * bn->value.flat());
    };
  }
  return Var{n};
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

Var add_scalar(Var a, double s) {
  Tensor out = a.value();
  out.flat() += s;
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] { accumulate(an, n->grad); };
  }
  return Var{n};
}

Var mul_scalar(Var a, double s) {
  Tensor out = a.value();
  out.flat() *= s;
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, s] { an->grad_ref().flat() += n->grad.flat() * s; };
  }
  return Var{n};
}

Var mul_const(Var a, const Tensor& m) {
  check(a.value().same_shape(m), "mul_const: shape mismatch");
  Tensor out = a.value();
  out.flat() *= m.flat();
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, m] { an->grad_ref().flat() += n->grad.flat() * m.flat(); };
  }
  return Var{n};
}

Var abs_(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().abs();
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] {
      an->grad_ref().flat() += n->grad.flat() * an->value.flat().sign();
    };
  }
  return Var{n};
}

Var square(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().square();
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] {
      an->grad_ref().flat() += 2.0 * n->grad.flat() * an->value.flat();
    };
  }
  return Var{n};
}

Var sqrt_(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().sqrt();
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] {
      an->grad_ref().flat() += 0.5 * n->grad.flat() / n->value.flat();
    };
  }
  return Var{n};
}

Var clamp_min(Var a, double lo) {
  Tensor out = a.value();
  out.flat() = out.flat().max(lo);
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, lo] {
      an->grad_ref().flat() +=
          n->grad.flat() * (an->value.flat() > lo).cast<double>();
    };
  }
  return Var{n};
}

Var relu(Var a) { return leaky_relu(a, 0.0); }

Var leaky_relu(Var a, double slope) {
  Tensor out = a.value();
  out.flat() = out.flat().max(out.flat() * slope);
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, slope] {
      const auto mask = (an->value.flat() > 0.0).cast<double>();
      an->grad_ref().flat() += n->grad.flat() * (mask + (1.0 - mask) * slope);
    };
  }
  return Var{n};
}

Var tanh_(Var a) {
  Tensor out = a.value();
  out.flat() = out.flat().tanh();
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] {
      an->grad_ref().flat() += n->grad.flat() * (1.0 - n->value.flat().square());
    };
  }
  return Var{n};
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  out.flat() = 1.0 / (1.0 + (-out.flat()).exp());
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] {
      an->grad_ref().flat() +=
          n->grad.flat() * n->value.flat() * (1.0 - n->value.flat());
    };
  }
  return Var{n};
}

Var softplus(Var a) {
  Tensor out = a.value();
  // log(1+e^x), overflow-safe on both tails.
  out.flat() = out.flat().unaryExpr([](double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] {
      an->grad_ref().flat() +=
          n->grad.flat() * (1.0 / (1.0 + (-an->value.flat()).exp()));
    };
  }
  return Var{n};
}

Var detach(Var a) { return Var{a.node->owner->make(a.value(), false)}; }

// --- reductions ------------------------------------------------------------------

Var sum(Var a) {
  Tensor out({1});
  out[0] = a.value().flat().sum();
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] { an->grad_ref().flat() += n->grad[0]; };
  }
  return Var{n};
}

Var mean(Var a) {
  const double inv = 1.0 / static_cast<double>(a.value().numel());
  Tensor out({1});
  out[0] = a.value().flat().sum() * inv;
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, inv] { an->grad_ref().flat() += n->grad[0] * inv; };
  }
  return Var{n};
}

Var mean_abs(Var a) { return mean(abs_(a)); }

Var global_avg_pool(Var a) {
  check(a.value().rank() == 4, "global_avg_pool: expected [N,C,H,W]");
  const int nb = a.value().dim(0), c = a.value().dim(1);
  const int h = a.value().dim(2), w = a.value().dim(3);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  Tensor out({nb, c});
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < c; ++j) {
      double s = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) s += a.value().at(i, j, y, x);
      out.at(i, j) = s * inv;
    }
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, nb, c, h, w, inv] {
      Tensor& g = an->grad_ref();
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < c; ++j) {
          const double gv = n->grad.at(i, j) * inv;
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) g.at(i, j, y, x) += gv;
        }
    };
  }
  return Var{n};
}

// --- shape / structure --------------------------------------------------------------

Var reshape(Var a, std::vector<int> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an] { an->grad_ref().flat() += n->grad.flat(); };
  }
  return Var{n};
}

Var concat_channels(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_channels: empty");
  const Tensor& first = parts[0].value();
  check(first.rank() == 4, "concat_channels: expected [N,C,H,W]");
  const int nb = first.dim(0), h = first.dim(2), w = first.dim(3);
  int c_total = 0;
  for (const Var& p : parts) {
    check(p.value().rank() == 4 && p.value().dim(0) == nb && p.value().dim(2) == h &&
              p.value().dim(3) == w,
          "concat_channels: incompatible part");
    c_total += p.value().dim(1);
  }
  Tensor out({nb, c_total, h, w});
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  {
    int c_off = 0;
    for (const Var& p : parts) {
      const int pc = p.value().dim(1);
      for (int i = 0; i < nb; ++i) {
        const double* src = p.value().data() + static_cast<Eigen::Index>(i) * pc * plane;
        double* dst = out.data() + (static_cast<Eigen::Index>(i) * c_total + c_off) * plane;
        std::copy(src, src + static_cast<Eigen::Index>(pc) * plane, dst);
      }
      c_off += pc;
    }
  }
  bool req = false;
  for (const Var& p : parts) req = req || p.node->requires_grad;
  Node* n = parts[0].node->owner->make(std::move(out), req);
  if (req) {
    std::vector<Node*> srcs;
    for (const Var& p : parts) srcs.push_back(p.node);
    n->backprop = [n, srcs, nb, c_total, plane] {
      int c_off = 0;
      for (Node* s : srcs) {
        const int pc = s->value.dim(1);
        if (s->requires_grad) {
          Tensor& g = s->grad_ref();
          for (int i = 0; i < nb; ++i) {
            const double* src =
                n->grad.data() + (static_cast<Eigen::Index>(i) * c_total + c_off) * plane;
            double* dst = g.data() + static_cast<Eigen::Index>(i) * pc * plane;
            for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(pc) * plane; ++k)
              dst[k] += src[k];
          }
        }
        c_off += pc;
      }
    };
  }
  return Var{n};
}

Var concat_batch(const std::vector<Var>& parts) {
  check(!parts.empty(), "concat_batch: empty");
  const Tensor& first = parts[0].value();
  std::vector<int> shape = first.shape();
  int n_total = 0;
  Eigen::Index per = first.numel() / first.dim(0);
  for (const Var& p : parts) {
    check(p.value().rank() == first.rank() && p.value().numel() / p.value().dim(0) == per,
          "concat_batch: incompatible part");
    n_total += p.value().dim(0);
  }
  shape[0] = n_total;
  Tensor out(shape);
  {
    Eigen::Index off = 0;
    for (const Var& p : parts) {
      std::copy(p.value().data(), p.value().data() + p.value().numel(), out.data() + off);
      off += p.value().numel();
    }
  }
  bool req = false;
  for (const Var& p : parts) req = req || p.node->requires_grad;
  Node* n = parts[0].node->owner->make(std::move(out), req);
  if (req) {
    std::vector<Node*> srcs;
    for (const Var& p : parts) srcs.push_back(p.node);
    n->backprop = [n, srcs] {
      Eigen::Index off = 0;
      for (Node* s : srcs) {
        const Eigen::Index len = s->value.numel();
        if (s->requires_grad) {
          Tensor& g = s->grad_ref();
          for (Eigen::Index k = 0; k < len; ++k) g[k] += n->grad[off + k];
        }
        off += len;
      }
    };
  }
  return Var{n};
}

Var upsample_nearest2(Var a) {
  check(a.value().rank() == 4, "upsample_nearest2: expected [N,C,H,W]");
  const int nb = a.value().dim(0), c = a.value().dim(1);
  const int h = a.value().dim(2), w = a.value().dim(3);
  Tensor out({nb, c, h * 2, w * 2});
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h * 2; ++y)
        for (int x = 0; x < w * 2; ++x)
          out.at(i, j, y, x) = a.value().at(i, j, y / 2, x / 2);
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, nb, c, h, w] {
      Tensor& g = an->grad_ref();
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < c; ++j)
          for (int y = 0; y < h * 2; ++y)
            for (int x = 0; x < w * 2; ++x)
              g.at(i, j, y / 2, x / 2) += n->grad.at(i, j, y, x);
    };
  }
  return Var{n};
}

Var avg_pool2(Var a) {
  check(a.value().rank() == 4, "avg_pool2: expected [N,C,H,W]");
  const int nb = a.value().dim(0), c = a.value().dim(1);
  const int h = a.value().dim(2), w = a.value().dim(3);
  check(h % 2 == 0 && w % 2 == 0, "avg_pool2: odd spatial size");
  Tensor out({nb, c, h / 2, w / 2});
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h / 2; ++y)
        for (int x = 0; x < w / 2; ++x)
          out.at(i, j, y, x) = 0.25 * (a.value().at(i, j, 2 * y, 2 * x) +
                                       a.value().at(i, j, 2 * y, 2 * x + 1) +
                                       a.value().at(i, j, 2 * y + 1, 2 * x) +
                                       a.value().at(i, j, 2 * y + 1, 2 * x + 1));
  Node* n = result_node({a}, std::move(out));
  if (n->requires_grad) {
    Node* an = a.node;
    n->backprop = [n, an, nb, c, h, w] {
      Tensor& g = an->grad_ref();
      for (int i = 0; i < nb; ++i)
        for (int j = 0; j < c; ++j)
          for (int y = 0; y < h / 2; ++y)
            for (int x = 0; x < w / 2; ++x) {
              const double gv = 0.25 * n->grad.at(i, j, y, x);
              g.at(i, j, 2 * y, 2 * x) += gv;
              g.at(i, j, 2 * y, 2 * x + 1) += gv;
              g.at(i, j, 2 * y + 1, 2 * x) += gv;
              g.at(i, j, 2 * y + 1, 2 * x + 1) += gv;
            }
    };
  }
  return Var{n};
}

// --- linear algebra ------------------------------------------------------------------

Var matmul(Var a, Var b) {
  check(a.value().rank() == 2 && b.value().rank() == 2 && a.value().dim(1) == b.value().dim(0),
        "matmul: incompatible shapes");
  const int m = a.value().dim(0), k = a.value().dim(1), p = b.value().dim(1);
  Tensor out({m, p});
  MapRM(out.data(), m, p).noalias() =
      CMapRM(a.value().data(), m, k) * CMapRM(b.value().data(), k, p);
  Node* n = result_node({a, b}, std::move(out));
  if (n->requires_grad) {
    Node *an = a.node, *bn = b.node;
    n->backprop = [n, an, bn, m, k, p] {
      CMapRM gy(n->grad.data(), m, p);
      if (an->requires_grad)
        MapRM(an->grad_ref().data(), m, k).noalias() +=
            gy * CMapRM(bn->value.data(), k, p).transpose();
      if (bn->requires_grad)
        MapRM(bn->grad_ref().data(), k, p).noalias() +=
            CMapRM(an->value.data(), m, k).transpose() * gy;
    };
  }
  return Var{n};
}

Var linear(Var x, Var w, Var b) {
  Var y = matmul(x, w);
  check(b.value().rank() == 1 && b.value().dim(0) == y.value().dim(1), "linear: bias shape");
  const int m = y.value().dim(0), p = y.value().dim(1);
  Tensor out = y.value();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < p; ++j) out.at(i, j) += b.value()[j];
  Node* n = result_node({y, b}, std::move(out));
  if (n->requires_grad) {
    Node *yn = y.node, *bn = b.node;
    n->backprop = [n, yn, bn, m, p] {
      if (yn->requires_grad) accumulate(yn, n->grad);
      if (bn->requires_grad) {
        Tensor& g = bn->grad_ref();
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < p; ++j) g[j] += n->grad.at(i, j);
      }
    };
  }
  return Var{n};
}

// --- convolution ----------------------------------------------------------------------

namespace {

struct ConvDims {
  int nb, ci, h, w, co, k, ho, wo;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  check(x.rank() == 4 && w.rank() == 4, "conv2d: expected 4-d tensors");
  check(x.dim(1) == w.dim(1), "conv2d: channel mismatch");
  check(w.dim(2) == w.dim(3), "conv2d: non-square kernel");
  ConvDims d;
  d.nb = x.dim(0);
  d.ci = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.co = w.dim(0);
  d.k = w.dim(2);
  d.ho = (d.h + 2 * pad - d.k) / stride + 1;
  d.wo = (d.w + 2 * pad - d.k) / stride + 1;
  check(d.ho > 0 && d.wo > 0, "conv2d: output would be empty");
  return d;
}

// col is [Ci*k*k, Ho*Wo], column-major in Eigen's default layout.
void im2col(const double* x, const ConvDims& d, int stride, int pad, Eigen::MatrixXd& col) {
  col.resize(static_cast<Eigen::Index>(d.ci) * d.k * d.k,
             static_cast<Eigen::Index>(d.ho) * d.wo);
  for (int oy = 0; oy < d.ho; ++oy) {
    for (int ox = 0; ox < d.wo; ++ox) {
      const Eigen::Index pix = static_cast<Eigen::Index>(oy) * d.wo + ox;
      Eigen::Index r = 0;
      for (int c = 0; c < d.ci; ++c) {
        const double* plane = x + static_cast<Eigen::Index>(c) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
          const int yy = oy * stride - pad + ky;
          for (int kx = 0; kx < d.k; ++kx, ++r) {
            const int xx = ox * stride - pad + kx;
            col(r, pix) = (yy >= 0 && yy < d.h && xx >= 0 && xx < d.w)
                              ? plane[static_cast<Eigen::Index>(yy) * d.w + xx]
                              : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXd& col, const ConvDims& d, int stride, int pad,
                double* x_grad) {
  for (int oy = 0; oy < d.ho; ++oy) {
    for (int ox = 0; ox < d.wo; ++ox) {
      const Eigen::Index pix = static_cast<Eigen::Index>(oy) * d.wo + ox;
      Eigen::Index r = 0;
      for (int c = 0; c < d.ci; ++c) {
        double* plane = x_grad + static_cast<Eigen::Index>(c) * d.h * d.w;
        for (int ky = 0; ky < d.k; ++ky) {
          const int yy = oy * stride - pad + ky;
          for (int kx = 0; kx < d.k; ++kx, ++r) {
            const int xx = ox * stride - pad + kx;
            if (yy >= 0 && yy < d.h && xx >= 0 && xx < d.w)
              plane[static_cast<Eigen::Index>(yy) * d.w + xx] += col(r, pix);
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var w, Var b, int stride, int pad) {
  const ConvDims d = conv_dims(x.value(), w.value(), stride, pad);
  const bool has_bias = b.defined();
  if (has_bias)
    check(b.value().rank() == 1 && b.value().dim(0) == d.co, "conv2d: bias shape");

  Tensor out({d.nb, d.co, d.ho, d.wo});
  const Eigen::Index ck2 = static_cast<Eigen::Index>(d.ci) * d.k * d.k;
  const Eigen::Index opix = static_cast<Eigen::Index>(d.ho) * d.wo;
  CMapRM wmat(w.value().data(), d.co, ck2);
  Eigen::MatrixXd col;
  for (int i = 0; i < d.nb; ++i) {
    im2col(x.value().data() + static_cast<Eigen::Index>(i) * d.ci * d.h * d.w, d, stride, pad,
           col);
    MapRM y(out.data() + static_cast<Eigen::Index>(i) * d.co * opix, d.co, opix);
    y.noalias() = wmat * col;
    if (has_bias)
      for (int o = 0; o < d.co; ++o) y.row(o).array() += b.value()[o];
  }

  Node* n = has_bias ? result_node({x, w, b}, std::move(out))
                     : result_node({x, w}, std::move(out));
  if (n->requires_grad) {
    Node *xn = x.node, *wn = w.node;
    Node* bn = has_bias ? b.node : nullptr;
    n->backprop = [n, xn, wn, bn, d, stride, pad, ck2, opix] {
      Eigen::MatrixXd col;
      CMapRM wmat(wn->value.data(), d.co, ck2);
      for (int i = 0; i < d.nb; ++i) {
        CMapRM gy(n->grad.data() + static_cast<Eigen::Index>(i) * d.co * opix, d.co, opix);
        if (wn->requires_grad || xn->requires_grad)
          im2col(xn->value.data() + static_cast<Eigen::Index>(i) * d.ci * d.h * d.w, d, stride,
                 pad, col);
        if (wn->requires_grad)
          MapRM(wn->grad_ref().data(), d.co, ck2).noalias() += gy * col.transpose();
        if (xn->requires_grad) {
          Eigen::MatrixXd dcol = wmat.transpose() * gy;
          col2im_add(dcol, d, stride, pad,
                     xn->grad_ref().data() + static_cast<Eigen::Index>(i) * d.ci * d.h * d.w);
        }
        if (bn && bn->requires_grad) {
          Tensor& g = bn->grad_ref();
          for (int o = 0; o < d.co; ++o) g[o] += gy.row(o).sum();
        }
      }
    };
  }
  return Var{n};
}

Var conv2d_modulated(Var x, Var w, Var style, bool demodulate, Var b) {
  const int k = w.value().dim(2);
  const int pad = k / 2;
  const ConvDims d = conv_dims(x.value(), w.value(), 1, pad);
  check(style.value().rank() == 2 && style.value().dim(0) == d.nb &&
            style.value().dim(1) == d.ci,
        "conv2d_modulated: style shape");
  const bool has_bias = b.defined();
  constexpr double kDemodEps = 1e-8;

  const Eigen::Index ck2 = static_cast<Eigen::Index>(d.ci) * d.k * d.k;
  const Eigen::Index opix = static_cast<Eigen::Index>(d.ho) * d.wo;
  const Eigen::Index kk = static_cast<Eigen::Index>(d.k) * d.k;

  // Per-sample modulated (and optionally demodulated) weights.
  std::vector<Tensor> wmod(static_cast<std::size_t>(d.nb));
  std::vector<Eigen::VectorXd> demod(static_cast<std::size_t>(d.nb));
  for (int i = 0; i < d.nb; ++i) {
    Tensor wn = w.value();
    for (int o = 0; o < d.co; ++o)
      for (int c = 0; c < d.ci; ++c) {
        const double s = style.value().at(i, c);
        double* base = wn.data() + (static_cast<Eigen::Index>(o) * d.ci + c) * kk;
        for (Eigen::Index t = 0; t < kk; ++t) base[t] *= s;
      }
    if (demodulate) {
      Eigen::VectorXd dvec(d.co);
      for (int o = 0; o < d.co; ++o) {
        const double* base = wn.data() + static_cast<Eigen::Index>(o) * ck2;
        double ss = 0;
        for (Eigen::Index t = 0; t < ck2; ++t) ss += base[t] * base[t];
        dvec[o] = 1.0 / std::sqrt(ss + kDemodEps);
      }
      for (int o = 0; o < d.co; ++o) {
        double* base = wn.data() + static_cast<Eigen::Index>(o) * ck2;
        for (Eigen::Index t = 0; t < ck2; ++t) base[t] *= dvec[o];
      }
      demod[static_cast<std::size_t>(i)] = std::move(dvec);
    }
    wmod[static_cast<std::size_t>(i)] = std::move(wn);
  }

  Tensor out({d.nb, d.co, d.ho, d.wo});
  Eigen::MatrixXd col;
  for (int i = 0; i < d.nb; ++i) {
    im2col(x.value().data() + static_cast<Eigen::Index>(i) * d.ci * d.h * d.w, d, 1, pad, col);
    MapRM y(out.data() + static_cast<Eigen::Index>(i) * d.co * opix, d.co, opix);
    y.noalias() = CMapRM(wmod[static_cast<std::size_t>(i)].data(), d.co, ck2) * col;
    if (has_bias)
      for (int o = 0; o < d.co; ++o) y.row(o).array() += b.value()[o];
  }

  Node* n = has_bias ? result_node({x, w, style, b}, std::move(out))
                     : result_node({x, w, style}, std::move(out));
  if (n->requires_grad) {
    Node *xn = x.node, *wn = w.node, *sn = style.node;
    Node* bn = has_bias ? b.node : nullptr;
    n->backprop = [n, xn, wn, sn, bn, d, pad, ck2, opix, kk, demodulate, wmod, demod] {
      Eigen::MatrixXd col;
      for (int i = 0; i < d.nb; ++i) {
        CMapRM gy(n->grad.data() + static_cast<Eigen::Index>(i) * d.co * opix, d.co, opix);
        im2col(xn->value.data() + static_cast<Eigen::Index>(i) * d.ci * d.h * d.w, d, 1, pad,
               col);
        // Gradient w.r.t. the per-sample weight.
        Eigen::MatrixXd dWn = gy * col.transpose();  // [Co, ck2]
        if (xn->requires_grad) {
          Eigen::MatrixXd dcol =
              CMapRM(wmod[static_cast<std::size_t>(i)].data(), d.co, ck2).transpose() * gy;
          col2im_add(dcol, d, 1, pad,
                     xn->grad_ref().data() + static_cast<Eigen::Index>(i) * d.ci * d.h * d.w);
        }
        if (bn && bn->requires_grad) {
          Tensor& g = bn->grad_ref();
          for (int o = 0; o < d.co; ++o) g[o] += gy.row(o).sum();
        }
        if (!wn->requires_grad && !sn->requires_grad) continue;

        // Undo demodulation: w_n = a * d(a), a[o,i,t] = w[o,i,t]*s[i].
        Eigen::MatrixXd dA(d.co, ck2);
        if (demodulate) {
          const Eigen::VectorXd& dvec = demod[static_cast<std::size_t>(i)];
          for (int o = 0; o < d.co; ++o) {
            // a = wmod / d  (recover the pre-demod modulated weight).
            Eigen::RowVectorXd a_row(ck2);
            const double* wm = wmod[static_cast<std::size_t>(i)].data() +
                               static_cast<Eigen::Index>(o) * ck2;
            for (Eigen::Index t = 0; t < ck2; ++t) a_row[t] = wm[t] / dvec[o];
            const double ddot = dWn.row(o).dot(a_row);
            // d(d)/d(a) = -d^3 * a
            dA.row(o) =
                dvec[o] * dWn.row(o) - (ddot * dvec[o] * dvec[o] * dvec[o]) * a_row;
          }
        } else {
          dA = dWn;
        }
        // Chain a -> (w, s).
        for (int o = 0; o < d.co; ++o) {
          for (int c = 0; c < d.ci; ++c) {
            const double s = sn->value.at(i, c);
            const Eigen::Index flat = (static_cast<Eigen::Index>(o) * d.ci + c) * kk;
            const Eigen::Index colbase = static_cast<Eigen::Index>(c) * kk;
            double sacc = 0;
            for (Eigen::Index t = 0; t < kk; ++t) {
              const double da = dA(o, colbase + t);
              if (wn->requires_grad) wn->grad_ref()[flat + t] += da * s;
              sacc += da * wn->value[flat + t];
            }
            if (sn->requires_grad) sn->grad_ref().at(i, c) += sacc;
          }
        }
      }
    };
  }
  return Var{n};
}

// --- normalization / noise ---------------------------------------------------------------

Var normalize_unit(Var x, double eps) {
  check(x.value().rank() == 4, "normalize_unit: expected [N,C,H,W]");
  const int nb = x.value().dim(0);
  const Eigen::Index m = x.value().numel() / nb;
  Tensor out(x.value().shape());
  std::vector<double> stds(static_cast<std::size_t>(nb));
  for (int i = 0; i < nb; ++i) {
    auto seg = x.value().flat().segment(static_cast<Eigen::Index>(i) * m, m);
    const double mu = seg.sum() / static_cast<double>(m);
    const double var = (seg - mu).square().sum() / static_cast<double>(m);
    const double sd = std::sqrt(var + eps);
    stds[static_cast<std::size_t>(i)] = sd;
    out.flat().segment(static_cast<Eigen::Index>(i) * m, m) = (seg - mu) / sd;
  }
  Node* n = result_node({x}, std::move(out));
  if (n->requires_grad) {
    Node* xn = x.node;
    n->backprop = [n, xn, nb, m, stds] {
      // dx = (dy - mean(dy) - y * mean(dy*y)) / std
      Tensor& g = xn->grad_ref();
      for (int i = 0; i < nb; ++i) {
        auto gy = n->grad.flat().segment(static_cast<Eigen::Index>(i) * m, m);
        auto y = n->value.flat().segment(static_cast<Eigen::Index>(i) * m, m);
        const double mg = gy.sum() / static_cast<double>(m);
        const double mgy = (gy * y).sum() / static_cast<double>(m);
        g.flat().segment(static_cast<Eigen::Index>(i) * m, m) +=
            (gy - mg - y * mgy) / stds[static_cast<std::size_t>(i)];
      }
    };
  }
  return Var{n};
}

Var add_noise(Var x, Var strength, const Tensor& noise) {
  check(strength.value().numel() == 1, "add_noise: strength must be scalar");
  check(x.value().same_shape(noise), "add_noise: noise shape mismatch");
  Tensor out = x.value();
  out.flat() += strength.value()[0] * noise.flat();
  Node* n = result_node({x, strength}, std::move(out));
  if (n->requires_grad) {
    Node *xn = x.node, *sn = strength.node;
    n->backprop = [n, xn, sn, noise] {
      if (xn->requires_grad) accumulate(xn, n->grad);
      if (sn->requires_grad) sn->grad_ref()[0] += (n->grad.flat() * noise.flat()).sum();
    };
  }
  return Var{n};
}

Var add_channel_bias(Var x, Var b) {
  check(x.value().rank() == 4, "add_channel_bias: expected [N,C,H,W]");
  const int nb = x.value().dim(0), c = x.value().dim(1);
  const int h = x.value().dim(2), w = x.value().dim(3);
  check(b.value().rank() == 1 && b.value().dim(0) == c, "add_channel_bias: bias shape");
  Tensor out = x.value();
  const Eigen::Index plane = static_cast<Eigen::Index>(h) * w;
  for (int i = 0; i < nb; ++i)
    for (int j = 0; j < c; ++j)
      out.flat().segment((static_cast<Eigen::Index>(i) * c + j) * plane, plane) +=
          b.value()[j];
  Node* n = result_node({x, b}, std::move(out));
  if (n->requires_grad) {
    Node *xn = x.node, *bn = b.node;
    n->backprop = [n, xn, bn, nb, c, plane] {
      if (xn->requires_grad) accumulate(xn, n->grad);
      if (bn->requires_grad) {
        Tensor& g = bn->grad_ref();
        for (int i = 0; i < nb; ++i)
          for (int j = 0; j < c; ++j)
            g[j] +=
                n->grad.flat().segment((static_cast<Eigen::Index>(i) * c + j) * plane, plane)
                    .sum();
      }
    };
  }
  return Var{n};
}

// --- warping ---------------------------------------------------------------------------

Var grid_sample(Var src, Var coords) {
  Tensor out = uvgeom::grid_sample(src.value(), coords.value());
  Node* n = result_node({src, coords}, std::move(out));
  if (n->requires_grad) {
    Node *sn = src.node, *cn = coords.node;
    n->backprop = [n, sn, cn] {
      Tensor* sg = sn->requires_grad ? &sn->grad_ref() : nullptr;
      Tensor* cg = cn->requires_grad ? &cn->grad_ref() : nullptr;
      uvgeom::grid_sample_backward(sn->value, cn->value, n->grad, sg, cg);
    };
  }
  return Var{n};
}

Var uv_gather(Var uv_data, std::shared_ptr<const uvgeom::GatherPlan> plan) {
  check(plan != nullptr, "uv_gather: null plan");
  Tensor out = uvgeom::apply_gather(*plan, uv_data.value());
  Node* n = result_node({uv_data}, std::move(out));
  if (n->requires_grad) {
    Node* un = uv_data.node;
    const int sh = uv_data.value().dim(2), sw = uv_data.value().dim(3);
    n->backprop = [n, un, plan, sh, sw] {
      Tensor g = uvgeom::apply_gather_transpose(*plan, n->grad, sh, sw);
      un->grad_ref().flat() += g.flat();
    };
  }
  return Var{n};
}

}  // namespace posewarp::ad
