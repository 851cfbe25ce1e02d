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

#ifndef POSEWARP_UVGEOM_HPP
#define POSEWARP_UVGEOM_HPP

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "posewarp/tensor.hpp"

namespace posewarp::uvgeom {

// u,v surface coordinates live on a 16-bit fixed-point grid (the storage
// quantum of the IUV file format). Keeping in-memory values on the same grid
// makes the left-right mirror an exact involution.
inline constexpr int kUvQuantum = 65535;

inline double snap_uv(double u) {
  const long q = std::lround(u * kUvQuantum);
  return static_cast<double>(q) / kUvQuantum;
}

// Accumulated-weight threshold below which a scattered texel stays invisible.
inline constexpr double kVisibilityThreshold = 1e-4;

// Sentinel stored in masked-out coordinate entries; outside the valid [-1,1]
// range so an accidental sample lands in the zero-padding region.
inline constexpr double kCoordSentinel = -2.0;

// Per-pixel body-part index plus surface coordinates. part == 0 is background
// and its (u,v) are stored as 0.
struct IUVMap {
  GridI part;  // H x W, 0..part_count
  GridD u;     // H x W in [0,1]
  GridD v;     // H x W in [0,1]

  int height() const { return static_cast<int>(part.rows()); }
  int width() const { return static_cast<int>(part.cols()); }

  GridD foreground_mask() const {
    return (part > 0).cast<double>();
  }

  static IUVMap background(int h, int w) {
    IUVMap m;
    m.part = GridI::Zero(h, w);
    m.u = GridD::Zero(h, w);
    m.v = GridD::Zero(h, w);
    return m;
  }

  void validate(int part_count) const;
};

// Rectangular chart placement of one body part inside the atlas.
struct Chart {
  int x0 = 0;
  int y0 = 0;
  int w = 0;
  int h = 0;
};

enum class MirrorRule : std::uint32_t {
  kHorizontalFlip = 1,  // (u,v) -> (1-u, v)
};

// Precomputed bidirectional image-space <-> UV-space lookup plus the
// left/right part pairing used by the symmetry prior.
struct MappingAtlas {
  int uv_height = 0;
  int uv_width = 0;
  int part_count = 0;
  MirrorRule mirror_rule = MirrorRule::kHorizontalFlip;
  std::vector<Chart> charts;        // 1-based conceptually; charts[p-1]
  std::vector<int> symmetry_pairs;  // size part_count+1, pairs[0] unused
  GridI uv_to_part;                 // uv_height x uv_width, 0 = unused texel

  const Chart& chart(int part) const { return charts.at(static_cast<std::size_t>(part - 1)); }
  int paired_part(int part) const { return symmetry_pairs.at(static_cast<std::size_t>(part)); }

  // Continuous texel position of (part,u,v); u,v=0..1 span the chart's texel
  // centers inclusive.
  std::pair<double, double> texel_of(int part, double u, double v) const {
    const Chart& c = chart(part);
    return {c.x0 + u * (c.w - 1), c.y0 + v * (c.h - 1)};
  }

  // Mirrored surface coordinates within a part (the involutive intra-part
  // rule). Exact on the 16-bit uv grid.
  std::pair<double, double> mirror_uv(double u, double v) const {
    const long q = std::lround(u * kUvQuantum);
    return {static_cast<double>(kUvQuantum - q) / kUvQuantum, v};
  }

  void validate() const;
};

// Builds a self-contained atlas: charts packed on a regular grid, parts paired
// (1,2), (3,4), ... with a trailing odd part self-paired (midline).
MappingAtlas build_synthetic_atlas(int part_count, std::pair<int, int> uv_resolution);

// 2-channel coordinate grid with validity mask. Invalid entries hold the
// sentinel and must never be sampled.
struct CoordField {
  GridD x;     // H x W, valid entries in [-1,1]
  GridD y;     // H x W, valid entries in [-1,1]
  GridD mask;  // H x W, binary

  int height() const { return static_cast<int>(x.rows()); }
  int width() const { return static_cast<int>(x.cols()); }

  static CoordField invalid(int h, int w) {
    CoordField f;
    f.x = GridD::Constant(h, w, kCoordSentinel);
    f.y = GridD::Constant(h, w, kCoordSentinel);
    f.mask = GridD::Zero(h, w);
    return f;
  }

  // [2,H,W] tensor view (x then y channel), sentinels included.
  Tensor coords_tensor() const { return tensor_from_planes({&x, &y}); }
  Tensor mask_tensor() const { return tensor_from_planes({&mask}); }

  void validate() const;
};

// Normalized pixel-center coordinates of an H x W grid, all valid.
CoordField meshgrid_coords(int h, int w);

// Normalized coordinate of pixel index k on an axis of size s (pixel centers,
// align-corners false).
inline double normalize_coord(double k, int s) { return (2.0 * k + 1.0) / s - 1.0; }
// Inverse of normalize_coord.
inline double denormalize_coord(double c, int s) { return ((c + 1.0) * s - 1.0) / 2.0; }

// Garment-region labels over the atlas texels.
struct UVSegmentation {
  GridI labels;  // uv_height x uv_width
};

// ---------------------------------------------------------------------------
// Scatter: image space -> UV space.

struct UvScatterResult {
  Tensor payload;  // [C, Huv, Wuv]
  GridD mask;      // Huv x Wuv, binary (accumulated weight above threshold)
};

// Splats each foreground pixel's payload channels to the texel addressed by
// its (part,u,v); fractional positions are spread bilinearly and collisions
// resolved by weighted average.
UvScatterResult image_to_uv(const IUVMap& iuv, const MappingAtlas& atlas,
                            const Tensor& payload);

// CoordField payload convenience: scatters only where both the pixel is
// foreground and the field entry is valid.
CoordField image_to_uv(const IUVMap& iuv, const MappingAtlas& atlas,
                       const CoordField& field);

// ---------------------------------------------------------------------------
// Mirror prior.

// Horizontally flips the pixel grid, relabels parts through the symmetry
// pairing and mirrors (u,v) within the part.
IUVMap mirror_iuv(const IUVMap& iuv, const MappingAtlas& atlas);

// Mask-priority combine of the base and mirrored UV fields: base wins where
// both are visible, the mirrored field only fills base holes.
CoordField combine_symmetry(const CoordField& base, const CoordField& mirrored);

// ---------------------------------------------------------------------------
// Gather: UV space -> image space.

// One output pixel's bilinear taps into the flattened UV grid.
struct GatherTap {
  int index = 0;
  double weight = 0.0;
};

struct GatherPlan {
  int out_height = 0;
  int out_width = 0;
  int src_height = 0;
  int src_width = 0;
  std::vector<std::array<GatherTap, 4>> taps;  // per output pixel, weight 0 taps unused
  std::vector<std::uint8_t> foreground;        // per output pixel

  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(out_height) * out_width; }
};

// Fixed gather geometry for mapping UV-space data onto a target pose. The
// taps depend only on the target IUV and the atlas, never on the payload.
GatherPlan build_uv_gather(const IUVMap& iuv_target, const MappingAtlas& atlas);

// Applies a gather plan to [N,C,Huv,Wuv] data; background pixels come out 0.
Tensor apply_gather(const GatherPlan& plan, const Tensor& uv_data);
// Transpose of apply_gather (scatter-add), used by gradient propagation.
Tensor apply_gather_transpose(const GatherPlan& plan, const Tensor& out_grad,
                              int src_h, int src_w);

// For each target foreground pixel, gathers the source-image coordinate
// stored at its UV texel. Taps whose texel is invalid in C_uv are dropped and
// the rest renormalized; a pixel with too little valid weight is masked out.
CoordField uv_to_image(const CoordField& c_uv, const IUVMap& iuv_target,
                       const MappingAtlas& atlas);

// Nearest-neighbor gather of categorical labels onto the target foreground.
GridI map_segmentation(const UVSegmentation& seg, const IUVMap& iuv_target,
                       const MappingAtlas& atlas);

// ---------------------------------------------------------------------------
// Bilinear sampling (the shared warp kernel).

// Samples src [N,C,H,W] at coords [N,2,Ho,Wo] (x then y channel, [-1,1],
// pixel centers). Out-of-range and sentinel coordinates produce zeros.
Tensor grid_sample(const Tensor& src, const Tensor& coords);

// Gradients w.r.t. both source values and coordinates.
void grid_sample_backward(const Tensor& src, const Tensor& coords,
                          const Tensor& out_grad, Tensor* src_grad,
                          Tensor* coords_grad);

// Single-image convenience: src [C,H,W] sampled at a CoordField.
Tensor bilinear_sample(const Tensor& src, const CoordField& coords);

// Downscales a coordinate field to (h,w): coordinates averaged bilinearly
// over valid entries, validity by majority weight.
CoordField resize_coord_field(const CoordField& field, int h, int w);
// Nearest-neighbor mask resize (masks are categorical).
GridD resize_mask_nearest(const GridD& mask, int h, int w);
// Nearest-neighbor IUV resize (parts are categorical; u,v travel with them).
IUVMap resize_iuv_nearest(const IUVMap& iuv, int h, int w);
// Plain bilinear image resize for [C,H,W] tensors.
Tensor resize_bilinear(const Tensor& image, int h, int w);

}  // namespace posewarp::uvgeom

#endif  // POSEWARP_UVGEOM_HPP
