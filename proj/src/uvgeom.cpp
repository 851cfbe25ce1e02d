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

#include "posewarp/uvgeom.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace posewarp::uvgeom {

namespace {

bool is_binary(const GridD& m) {
  for (int y = 0; y < m.rows(); ++y)
    for (int x = 0; x < m.cols(); ++x)
      if (m(y, x) != 0.0 && m(y, x) != 1.0) return false;
  return true;
}

}  // namespace

void IUVMap::validate(int part_count) const {
  check(part.rows() == u.rows() && part.cols() == u.cols() &&
            part.rows() == v.rows() && part.cols() == v.cols(),
        "IUVMap: channel size mismatch");
  for (int y = 0; y < part.rows(); ++y) {
    for (int x = 0; x < part.cols(); ++x) {
      const int p = part(y, x);
      if (p < 0 || p > part_count)
        throw ValidationError("IUVMap: part index " + std::to_string(p) +
                              " outside [0," + std::to_string(part_count) + "]");
      if (u(y, x) < 0.0 || u(y, x) > 1.0 || v(y, x) < 0.0 || v(y, x) > 1.0)
        throw ValidationError("IUVMap: (u,v) outside [0,1]");
    }
  }
}

void MappingAtlas::validate() const {
  check(part_count >= 1, "MappingAtlas: part_count < 1");
  check(static_cast<int>(charts.size()) == part_count, "MappingAtlas: chart table size");
  check(static_cast<int>(symmetry_pairs.size()) == part_count + 1,
        "MappingAtlas: symmetry table size");
  for (int p = 1; p <= part_count; ++p) {
    const int q = symmetry_pairs[static_cast<std::size_t>(p)];
    check(q >= 1 && q <= part_count, "MappingAtlas: pairing out of range");
    check(symmetry_pairs[static_cast<std::size_t>(q)] == p,
          "MappingAtlas: pairing is not an involution");
    const Chart& c = charts[static_cast<std::size_t>(p - 1)];
    check(c.w >= 2 && c.h >= 2, "MappingAtlas: degenerate chart");
    check(c.x0 >= 0 && c.y0 >= 0 && c.x0 + c.w <= uv_width && c.y0 + c.h <= uv_height,
          "MappingAtlas: chart outside atlas");
  }
  // Charts of distinct parts must not overlap; paint and compare.
  GridI paint = GridI::Zero(uv_height, uv_width);
  for (int p = 1; p <= part_count; ++p) {
    const Chart& c = charts[static_cast<std::size_t>(p - 1)];
    for (int y = c.y0; y < c.y0 + c.h; ++y)
      for (int x = c.x0; x < c.x0 + c.w; ++x) {
        check(paint(y, x) == 0, "MappingAtlas: overlapping charts");
        paint(y, x) = p;
      }
  }
  check(uv_to_part.rows() == uv_height && uv_to_part.cols() == uv_width,
        "MappingAtlas: uv_to_part size");
  for (int y = 0; y < uv_height; ++y)
    for (int x = 0; x < uv_width; ++x) {
      const int p = uv_to_part(y, x);
      check(p >= 0 && p <= part_count, "MappingAtlas: uv_to_part label range");
      if (p > 0)
        check(paint(y, x) == p, "MappingAtlas: texel outside its part's chart");
    }
}

MappingAtlas build_synthetic_atlas(int part_count, std::pair<int, int> uv_resolution) {
  check(part_count >= 2, "build_synthetic_atlas: need at least 2 parts");
  const int h = uv_resolution.first;
  const int w = uv_resolution.second;
  check(h >= 2 && w >= 2, "build_synthetic_atlas: resolution too small");

  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(part_count))));
  const int rows = (part_count + cols - 1) / cols;
  const int chart_w = w / cols;
  const int chart_h = h / rows;
  if (chart_w < 8 || chart_h < 8)
    throw ValidationError("build_synthetic_atlas: cannot pack " + std::to_string(part_count) +
                          " charts of at least 8x8 into " + std::to_string(h) + "x" +
                          std::to_string(w));

  MappingAtlas atlas;
  atlas.uv_height = h;
  atlas.uv_width = w;
  atlas.part_count = part_count;
  atlas.mirror_rule = MirrorRule::kHorizontalFlip;
  atlas.uv_to_part = GridI::Zero(h, w);
  atlas.charts.resize(static_cast<std::size_t>(part_count));
  for (int p = 1; p <= part_count; ++p) {
    Chart c;
    c.x0 = ((p - 1) % cols) * chart_w;
    c.y0 = ((p - 1) / cols) * chart_h;
    c.w = chart_w;
    c.h = chart_h;
    atlas.charts[static_cast<std::size_t>(p - 1)] = c;
    for (int y = c.y0; y < c.y0 + c.h; ++y)
      for (int x = c.x0; x < c.x0 + c.w; ++x) atlas.uv_to_part(y, x) = p;
  }
  atlas.symmetry_pairs.assign(static_cast<std::size_t>(part_count) + 1, 0);
  for (int p = 1; p + 1 <= part_count; p += 2) {
    atlas.symmetry_pairs[static_cast<std::size_t>(p)] = p + 1;
    atlas.symmetry_pairs[static_cast<std::size_t>(p + 1)] = p;
  }
  if (part_count % 2 == 1)
    atlas.symmetry_pairs[static_cast<std::size_t>(part_count)] = part_count;  // midline
  atlas.validate();
  return atlas;
}

void CoordField::validate() const {
  check(x.rows() == y.rows() && x.cols() == y.cols() && x.rows() == mask.rows() &&
            x.cols() == mask.cols(),
        "CoordField: channel size mismatch");
  if (!is_binary(mask)) throw ValidationError("CoordField: mask is not binary");
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) {
      if (mask(r, c) == 1.0) {
        check(x(r, c) >= -1.0 && x(r, c) <= 1.0 && y(r, c) >= -1.0 && y(r, c) <= 1.0,
              "CoordField: valid coordinate outside [-1,1]");
      } else {
        check(x(r, c) == kCoordSentinel && y(r, c) == kCoordSentinel,
              "CoordField: masked-out entry does not hold the sentinel");
      }
    }
}

CoordField meshgrid_coords(int h, int w) {
  CoordField f;
  f.x = GridD(h, w);
  f.y = GridD(h, w);
  f.mask = GridD::Ones(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      f.x(r, c) = normalize_coord(c, w);
      f.y(r, c) = normalize_coord(r, h);
    }
  return f;
}

// ---------------------------------------------------------------------------
// Scatter.

namespace {

// Core bilinear splat of per-pixel payload channels into the atlas grid.
// `include` selects which pixels participate.
UvScatterResult scatter_to_uv(const IUVMap& iuv, const MappingAtlas& atlas,
                              const Tensor& payload, const GridD& include) {
  const int h = iuv.height();
  const int w = iuv.width();
  check(payload.rank() == 3 && payload.dim(1) == h && payload.dim(2) == w,
        "image_to_uv: payload not aligned with IUV grid");
  iuv.validate(atlas.part_count);

  const int channels = payload.dim(0);
  const int uh = atlas.uv_height;
  const int uw = atlas.uv_width;
  Tensor acc({channels, uh, uw});
  GridD wsum = GridD::Zero(uh, uw);

  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      if (include(py, px) != 1.0) continue;
      const int p = iuv.part(py, px);
      if (p == 0) continue;
      const auto [tx, ty] = atlas.texel_of(p, iuv.u(py, px), iuv.v(py, px));
      const int x0 = static_cast<int>(std::floor(tx));
      const int y0 = static_cast<int>(std::floor(ty));
      const double fx = tx - x0;
      const double fy = ty - y0;
      const double wq[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (wq[k] == 0.0) continue;
        if (xs[k] < 0 || xs[k] >= uw || ys[k] < 0 || ys[k] >= uh) continue;
        wsum(ys[k], xs[k]) += wq[k];
        for (int c = 0; c < channels; ++c)
          acc.at(c, ys[k], xs[k]) += wq[k] * payload.at(c, py, px);
      }
    }
  }

  UvScatterResult out;
  out.payload = Tensor({channels, uh, uw});
  out.mask = GridD::Zero(uh, uw);
  for (int y = 0; y < uh; ++y)
    for (int x = 0; x < uw; ++x) {
      if (wsum(y, x) >= kVisibilityThreshold) {
        out.mask(y, x) = 1.0;
        for (int c = 0; c < channels; ++c)
          out.payload.at(c, y, x) = acc.at(c, y, x) / wsum(y, x);
      }
    }
  return out;
}

}  // namespace

UvScatterResult image_to_uv(const IUVMap& iuv, const MappingAtlas& atlas,
                            const Tensor& payload) {
  return scatter_to_uv(iuv, atlas, payload, iuv.foreground_mask());
}

CoordField image_to_uv(const IUVMap& iuv, const MappingAtlas& atlas,
                       const CoordField& field) {
  check(field.height() == iuv.height() && field.width() == iuv.width(),
        "image_to_uv: coordinate field not aligned with IUV grid");
  const GridD include = iuv.foreground_mask() * field.mask;
  const Tensor payload = field.coords_tensor();
  const UvScatterResult scattered = scatter_to_uv(iuv, atlas, payload, include);

  CoordField out = CoordField::invalid(atlas.uv_height, atlas.uv_width);
  out.mask = scattered.mask;
  for (int y = 0; y < atlas.uv_height; ++y)
    for (int x = 0; x < atlas.uv_width; ++x)
      if (out.mask(y, x) == 1.0) {
        out.x(y, x) = std::clamp(scattered.payload.at(0, y, x), -1.0, 1.0);
        out.y(y, x) = std::clamp(scattered.payload.at(1, y, x), -1.0, 1.0);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Mirror prior.

IUVMap mirror_iuv(const IUVMap& iuv, const MappingAtlas& atlas) {
  iuv.validate(atlas.part_count);
  const int h = iuv.height();
  const int w = iuv.width();
  IUVMap out = IUVMap::background(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int sx = w - 1 - x;
      const int p = iuv.part(y, sx);
      if (p == 0) continue;
      out.part(y, x) = atlas.paired_part(p);
      const auto [mu, mv] = atlas.mirror_uv(iuv.u(y, sx), iuv.v(y, sx));
      out.u(y, x) = mu;
      out.v(y, x) = mv;
    }
  }
  return out;
}

CoordField combine_symmetry(const CoordField& base, const CoordField& mirrored) {
  check(base.height() == mirrored.height() && base.width() == mirrored.width(),
        "combine_symmetry: field size mismatch");
  if (!is_binary(base.mask) || !is_binary(mirrored.mask))
    throw ValidationError("combine_symmetry: non-binary mask");

  const int h = base.height();
  const int w = base.width();
  CoordField out = CoordField::invalid(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double mb = base.mask(y, x);
      // Mirrored visibility is stripped wherever the base already covers.
      const double mm = mirrored.mask(y, x) - mb * mirrored.mask(y, x);
      out.mask(y, x) = mb + mm;
      if (mb == 1.0) {
        out.x(y, x) = base.x(y, x);
        out.y(y, x) = base.y(y, x);
      } else if (mm == 1.0) {
        out.x(y, x) = mirrored.x(y, x);
        out.y(y, x) = mirrored.y(y, x);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gather.

GatherPlan build_uv_gather(const IUVMap& iuv_target, const MappingAtlas& atlas) {
  iuv_target.validate(atlas.part_count);
  const int h = iuv_target.height();
  const int w = iuv_target.width();
  GatherPlan plan;
  plan.out_height = h;
  plan.out_width = w;
  plan.src_height = atlas.uv_height;
  plan.src_width = atlas.uv_width;
  plan.taps.assign(static_cast<std::size_t>(h) * w, {});
  plan.foreground.assign(static_cast<std::size_t>(h) * w, 0);

  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const std::size_t pix = static_cast<std::size_t>(py) * w + px;
      const int p = iuv_target.part(py, px);
      if (p == 0) continue;
      plan.foreground[pix] = 1;
      const auto [tx, ty] = atlas.texel_of(p, iuv_target.u(py, px), iuv_target.v(py, px));
      const int x0 = static_cast<int>(std::floor(tx));
      const int y0 = static_cast<int>(std::floor(ty));
      const double fx = tx - x0;
      const double fy = ty - y0;
      const double wq[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (wq[k] == 0.0) continue;
        if (xs[k] < 0 || xs[k] >= atlas.uv_width || ys[k] < 0 || ys[k] >= atlas.uv_height)
          continue;
        plan.taps[pix][static_cast<std::size_t>(k)] = {ys[k] * atlas.uv_width + xs[k], wq[k]};
      }
    }
  }
  return plan;
}

Tensor apply_gather(const GatherPlan& plan, const Tensor& uv_data) {
  check(uv_data.rank() == 4 && uv_data.dim(2) == plan.src_height &&
            uv_data.dim(3) == plan.src_width,
        "apply_gather: UV data shape mismatch");
  const int n_count = uv_data.dim(0);
  const int channels = uv_data.dim(1);
  const Eigen::Index src_plane = static_cast<Eigen::Index>(plan.src_height) * plan.src_width;
  const Eigen::Index out_plane = plan.pixel_count();
  Tensor out({n_count, channels, plan.out_height, plan.out_width});
  for (int n = 0; n < n_count; ++n) {
    for (int c = 0; c < channels; ++c) {
      const double* src = uv_data.data() + (static_cast<Eigen::Index>(n) * channels + c) * src_plane;
      double* dst = out.data() + (static_cast<Eigen::Index>(n) * channels + c) * out_plane;
      for (Eigen::Index pix = 0; pix < out_plane; ++pix) {
        if (!plan.foreground[static_cast<std::size_t>(pix)]) continue;
        double acc = 0.0;
        for (const GatherTap& tap : plan.taps[static_cast<std::size_t>(pix)])
          if (tap.weight != 0.0) acc += tap.weight * src[tap.index];
        dst[pix] = acc;
      }
    }
  }
  return out;
}

Tensor apply_gather_transpose(const GatherPlan& plan, const Tensor& out_grad,
                              int src_h, int src_w) {
  check(out_grad.rank() == 4 && out_grad.dim(2) == plan.out_height &&
            out_grad.dim(3) == plan.out_width,
        "apply_gather_transpose: grad shape mismatch");
  const int n_count = out_grad.dim(0);
  const int channels = out_grad.dim(1);
  const Eigen::Index src_plane = static_cast<Eigen::Index>(src_h) * src_w;
  const Eigen::Index out_plane = plan.pixel_count();
  Tensor grad({n_count, channels, src_h, src_w});
  for (int n = 0; n < n_count; ++n) {
    for (int c = 0; c < channels; ++c) {
      double* dst = grad.data() + (static_cast<Eigen::Index>(n) * channels + c) * src_plane;
      const double* g = out_grad.data() + (static_cast<Eigen::Index>(n) * channels + c) * out_plane;
      for (Eigen::Index pix = 0; pix < out_plane; ++pix) {
        if (!plan.foreground[static_cast<std::size_t>(pix)] || g[pix] == 0.0) continue;
        for (const GatherTap& tap : plan.taps[static_cast<std::size_t>(pix)])
          if (tap.weight != 0.0) dst[tap.index] += tap.weight * g[pix];
      }
    }
  }
  return grad;
}

CoordField uv_to_image(const CoordField& c_uv, const IUVMap& iuv_target,
                       const MappingAtlas& atlas) {
  check(c_uv.height() == atlas.uv_height && c_uv.width() == atlas.uv_width,
        "uv_to_image: field not at atlas resolution");
  const GatherPlan plan = build_uv_gather(iuv_target, atlas);
  CoordField out = CoordField::invalid(plan.out_height, plan.out_width);
  for (int py = 0; py < plan.out_height; ++py) {
    for (int px = 0; px < plan.out_width; ++px) {
      const std::size_t pix = static_cast<std::size_t>(py) * plan.out_width + px;
      if (!plan.foreground[pix]) continue;
      double vw = 0.0, ax = 0.0, ay = 0.0;
      for (const GatherTap& tap : plan.taps[pix]) {
        if (tap.weight == 0.0) continue;
        const int ty = tap.index / atlas.uv_width;
        const int tx = tap.index % atlas.uv_width;
        if (c_uv.mask(ty, tx) != 1.0) continue;
        vw += tap.weight;
        ax += tap.weight * c_uv.x(ty, tx);
        ay += tap.weight * c_uv.y(ty, tx);
      }
      if (vw >= kVisibilityThreshold) {
        out.mask(py, px) = 1.0;
        out.x(py, px) = std::clamp(ax / vw, -1.0, 1.0);
        out.y(py, px) = std::clamp(ay / vw, -1.0, 1.0);
      }
    }
  }
  return out;
}

GridI map_segmentation(const UVSegmentation& seg, const IUVMap& iuv_target,
                       const MappingAtlas& atlas) {
  check(seg.labels.rows() == atlas.uv_height && seg.labels.cols() == atlas.uv_width,
        "map_segmentation: segmentation not at atlas resolution");
  iuv_target.validate(atlas.part_count);
  const int h = iuv_target.height();
  const int w = iuv_target.width();
  GridI out = GridI::Zero(h, w);
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < w; ++px) {
      const int p = iuv_target.part(py, px);
      if (p == 0) continue;
      const auto [tx, ty] = atlas.texel_of(p, iuv_target.u(py, px), iuv_target.v(py, px));
      const int nx = std::clamp(static_cast<int>(std::lround(tx)), 0, atlas.uv_width - 1);
      const int ny = std::clamp(static_cast<int>(std::lround(ty)), 0, atlas.uv_height - 1);
      out(py, px) = seg.labels(ny, nx);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bilinear sampling.

Tensor grid_sample(const Tensor& src, const Tensor& coords) {
  check(src.rank() == 4 && coords.rank() == 4 && coords.dim(1) == 2,
        "grid_sample: expected src [N,C,H,W], coords [N,2,Ho,Wo]");
  check(src.dim(0) == coords.dim(0), "grid_sample: batch mismatch");
  const int n_count = src.dim(0);
  const int channels = src.dim(1);
  const int sh = src.dim(2);
  const int sw = src.dim(3);
  const int oh = coords.dim(2);
  const int ow = coords.dim(3);
  Tensor out({n_count, channels, oh, ow});
  for (int n = 0; n < n_count; ++n) {
    for (int py = 0; py < oh; ++py) {
      for (int px = 0; px < ow; ++px) {
        const double gx = denormalize_coord(coords.at(n, 0, py, px), sw);
        const double gy = denormalize_coord(coords.at(n, 1, py, px), sh);
        const int x0 = static_cast<int>(std::floor(gx));
        const int y0 = static_cast<int>(std::floor(gy));
        const double fx = gx - x0;
        const double fy = gy - y0;
        for (int c = 0; c < channels; ++c) {
          double acc = 0.0;
          for (int dy = 0; dy <= 1; ++dy) {
            const int yy = y0 + dy;
            if (yy < 0 || yy >= sh) continue;
            const double wy = dy == 0 ? 1 - fy : fy;
            for (int dx = 0; dx <= 1; ++dx) {
              const int xx = x0 + dx;
              if (xx < 0 || xx >= sw) continue;
              const double wx = dx == 0 ? 1 - fx : fx;
              acc += wx * wy * src.at(n, c, yy, xx);
            }
          }
          out.at(n, c, py, px) = acc;
        }
      }
    }
  }
  return out;
}

void grid_sample_backward(const Tensor& src, const Tensor& coords,
                          const Tensor& out_grad, Tensor* src_grad,
                          Tensor* coords_grad) {
  const int n_count = src.dim(0);
  const int channels = src.dim(1);
  const int sh = src.dim(2);
  const int sw = src.dim(3);
  const int oh = coords.dim(2);
  const int ow = coords.dim(3);
  for (int n = 0; n < n_count; ++n) {
    for (int py = 0; py < oh; ++py) {
      for (int px = 0; px < ow; ++px) {
        const double gx = denormalize_coord(coords.at(n, 0, py, px), sw);
        const double gy = denormalize_coord(coords.at(n, 1, py, px), sh);
        const int x0 = static_cast<int>(std::floor(gx));
        const int y0 = static_cast<int>(std::floor(gy));
        const double fx = gx - x0;
        const double fy = gy - y0;
        double dgx = 0.0, dgy = 0.0;
        for (int c = 0; c < channels; ++c) {
          const double g = out_grad.at(n, c, py, px);
          if (g == 0.0) continue;
          for (int dy = 0; dy <= 1; ++dy) {
            const int yy = y0 + dy;
            if (yy < 0 || yy >= sh) continue;
            const double wy = dy == 0 ? 1 - fy : fy;
            const double sy = dy == 0 ? -1.0 : 1.0;
            for (int dx = 0; dx <= 1; ++dx) {
              const int xx = x0 + dx;
              if (xx < 0 || xx >= sw) continue;
              const double wx = dx == 0 ? 1 - fx : fx;
              const double sx = dx == 0 ? -1.0 : 1.0;
              const double val = src.at(n, c, yy, xx);
              if (src_grad) src_grad->at(n, c, yy, xx) += g * wx * wy;
              dgx += g * sx * wy * val;
              dgy += g * sy * wx * val;
            }
          }
        }
        if (coords_grad) {
          // d pixel / d normalized = S/2.
          coords_grad->at(n, 0, py, px) += dgx * sw / 2.0;
          coords_grad->at(n, 1, py, px) += dgy * sh / 2.0;
        }
      }
    }
  }
}

Tensor bilinear_sample(const Tensor& src, const CoordField& coords) {
  check(src.rank() == 3, "bilinear_sample: expected src [C,H,W]");
  const Tensor coords4 = with_batch_dim(coords.coords_tensor());
  return without_batch_dim(grid_sample(with_batch_dim(src), coords4));
}

CoordField resize_coord_field(const CoordField& field, int h, int w) {
  const int ih = field.height();
  const int iw = field.width();
  CoordField out = CoordField::invalid(h, w);
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      const double gx = (ox + 0.5) * iw / w - 0.5;
      const double gy = (oy + 0.5) * ih / h - 0.5;
      const int x0 = static_cast<int>(std::floor(gx));
      const int y0 = static_cast<int>(std::floor(gy));
      const double fx = gx - x0;
      const double fy = gy - y0;
      double vw = 0.0, tw = 0.0, ax = 0.0, ay = 0.0;
      for (int dy = 0; dy <= 1; ++dy) {
        const int yy = y0 + dy;
        const double wy = dy == 0 ? 1 - fy : fy;
        for (int dx = 0; dx <= 1; ++dx) {
          const int xx = x0 + dx;
          const double wgt = wy * (dx == 0 ? 1 - fx : fx);
          if (wgt == 0.0) continue;
          tw += wgt;
          if (yy < 0 || yy >= ih || xx < 0 || xx >= iw) continue;
          if (field.mask(yy, xx) != 1.0) continue;
          vw += wgt;
          ax += wgt * field.x(yy, xx);
          ay += wgt * field.y(yy, xx);
        }
      }
      if (tw > 0.0 && vw >= 0.5 * tw) {
        out.mask(oy, ox) = 1.0;
        out.x(oy, ox) = ax / vw;
        out.y(oy, ox) = ay / vw;
      }
    }
  }
  return out;
}

GridD resize_mask_nearest(const GridD& mask, int h, int w) {
  const int ih = static_cast<int>(mask.rows());
  const int iw = static_cast<int>(mask.cols());
  GridD out(h, w);
  for (int oy = 0; oy < h; ++oy) {
    const int sy = std::clamp(static_cast<int>((oy + 0.5) * ih / h), 0, ih - 1);
    for (int ox = 0; ox < w; ++ox) {
      const int sx = std::clamp(static_cast<int>((ox + 0.5) * iw / w), 0, iw - 1);
      out(oy, ox) = mask(sy, sx);
    }
  }
  return out;
}

IUVMap resize_iuv_nearest(const IUVMap& iuv, int h, int w) {
  const int ih = iuv.height();
  const int iw = iuv.width();
  IUVMap out = IUVMap::background(h, w);
  for (int oy = 0; oy < h; ++oy) {
    const int sy = std::clamp(static_cast<int>((oy + 0.5) * ih / h), 0, ih - 1);
    for (int ox = 0; ox < w; ++ox) {
      const int sx = std::clamp(static_cast<int>((ox + 0.5) * iw / w), 0, iw - 1);
      out.part(oy, ox) = iuv.part(sy, sx);
      out.u(oy, ox) = iuv.u(sy, sx);
      out.v(oy, ox) = iuv.v(sy, sx);
    }
  }
  return out;
}

Tensor resize_bilinear(const Tensor& image, int h, int w) {
  check(image.rank() == 3, "resize_bilinear: expected [C,H,W]");
  const int c_count = image.dim(0);
  const int ih = image.dim(1);
  const int iw = image.dim(2);
  Tensor out({c_count, h, w});
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      const double gx = (ox + 0.5) * iw / w - 0.5;
      const double gy = (oy + 0.5) * ih / h - 0.5;
      const int x0 = static_cast<int>(std::floor(gx));
      const int y0 = static_cast<int>(std::floor(gy));
      const double fx = gx - x0;
      const double fy = gy - y0;
      for (int c = 0; c < c_count; ++c) {
        double acc = 0.0;
        for (int dy = 0; dy <= 1; ++dy) {
          const int yy = std::clamp(y0 + dy, 0, ih - 1);
          const double wy = dy == 0 ? 1 - fy : fy;
          for (int dx = 0; dx <= 1; ++dx) {
            const int xx = std::clamp(x0 + dx, 0, iw - 1);
            acc += wy * (dx == 0 ? 1 - fx : fx) * image.at(c, yy, xx);
          }
        }
        out.at(c, oy, ox) = acc;
      }
    }
  }
  return out;
}

}  // namespace posewarp::uvgeom
