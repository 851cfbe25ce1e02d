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

#include "posewarp/tensor.hpp"

namespace posewarp {

Tensor tensor_from_planes(const std::vector<const GridD*>& planes) {
  check(!planes.empty(), "tensor_from_planes: no planes");
  const int h = static_cast<int>(planes[0]->rows());
  const int w = static_cast<int>(planes[0]->cols());
  Tensor t({static_cast<int>(planes.size()), h, w});
  for (std::size_t c = 0; c < planes.size(); ++c) {
    const GridD& p = *planes[c];
    check(p.rows() == h && p.cols() == w, "tensor_from_planes: size mismatch");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) t.at(static_cast<int>(c), y, x) = p(y, x);
  }
  return t;
}

GridD plane_from_tensor(const Tensor& t, int n, int c) {
  check(t.rank() == 4 || (t.rank() == 3 && n == 0), "plane_from_tensor: rank");
  const int h = t.dim(t.rank() - 2);
  const int w = t.dim(t.rank() - 1);
  GridD p(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      p(y, x) = t.rank() == 4 ? t.at(n, c, y, x) : t.at(c, y, x);
  return p;
}

Tensor with_batch_dim(const Tensor& chw) {
  check(chw.rank() == 3, "with_batch_dim: expected rank 3");
  return chw.reshaped({1, chw.dim(0), chw.dim(1), chw.dim(2)});
}

Tensor without_batch_dim(const Tensor& nchw) {
  check(nchw.rank() == 4 && nchw.dim(0) == 1, "without_batch_dim: expected [1,C,H,W]");
  return nchw.reshaped({nchw.dim(1), nchw.dim(2), nchw.dim(3)});
}

}  // namespace posewarp
