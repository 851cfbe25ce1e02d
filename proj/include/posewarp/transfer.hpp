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

#ifndef POSEWARP_TRANSFER_HPP
#define POSEWARP_TRANSFER_HPP

#include <vector>

#include "posewarp/coordnet.hpp"
#include "posewarp/posegen.hpp"
#include "posewarp/uvgeom.hpp"

namespace posewarp::transfer {

struct GarmentSource {
  Tensor image;             // [3,R,R]
  uvgeom::IUVMap iuv;       // pose of this source
  std::vector<int> labels;  // garment-region labels claimed by this source
};

struct TransferSpec {
  GarmentSource person;  // claims every label the garments do not (incl. background)
  std::vector<GarmentSource> garments;
  uvgeom::IUVMap target_iuv;
  GridD target_mask;

  // Garment label sets must be pairwise disjoint.
  void validate() const;
};

// Hard per-pixel selection masks at a given level resolution: entry 0 is the
// person source, then one per garment. The masks partition every pixel.
std::vector<GridD> selection_masks(const TransferSpec& spec,
                                   const uvgeom::UVSegmentation& seg,
                                   const uvgeom::MappingAtlas& atlas, int level_res);

// Warps every source's appearance pyramid to the common target pose and
// composites the levels by the mapped segmentation labels. Returns the
// composited (pre-fusion) pyramid, coarse to fine.
std::vector<ad::Var> transfer_features(ad::Graph& g, posegen::Generator& gen,
                                       coordnet::CoordNet& frozen_coordnet,
                                       const TransferSpec& spec,
                                       const uvgeom::UVSegmentation& seg,
                                       const uvgeom::MappingAtlas& atlas);

// Full try-on: composited features through the standard fusion/modulation
// path. Deterministic under zero or fixed noise.
Tensor tryon(posegen::Generator& gen, coordnet::CoordNet& frozen_coordnet,
             const TransferSpec& spec, const uvgeom::UVSegmentation& seg,
             const uvgeom::MappingAtlas& atlas, posegen::NoiseMode noise_mode,
             Rng* noise_rng = nullptr);

}  // namespace posewarp::transfer

#endif  // POSEWARP_TRANSFER_HPP
