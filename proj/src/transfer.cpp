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

#include "posewarp/transfer.hpp"

#include <algorithm>
#include <set>

namespace posewarp::transfer {

namespace ad = posewarp::ad;
using uvgeom::CoordField;

void TransferSpec::validate() const {
  std::set<int> seen;
  for (const GarmentSource& gsrc : garments) {
    check(!gsrc.labels.empty(), "TransferSpec: garment source claims no labels");
    for (int l : gsrc.labels) {
      if (!seen.insert(l).second)
        throw ValidationError("TransferSpec: garment label " + std::to_string(l) +
                              " claimed by more than one source");
    }
  }
  const int r = target_iuv.height();
  check(target_mask.rows() == r && target_mask.cols() == target_iuv.width(),
        "TransferSpec: target mask does not match the target pose");
  check(person.image.rank() == 3 && person.image.dim(0) == 3, "TransferSpec: bad person image");
}

std::vector<GridD> selection_masks(const TransferSpec& spec,
                                   const uvgeom::UVSegmentation& seg,
                                   const uvgeom::MappingAtlas& atlas, int level_res) {
  const GridI labels_full = uvgeom::map_segmentation(seg, spec.target_iuv, atlas);
  // nearest-neighbor label resize (labels are categorical)
  const int full = spec.target_iuv.height();
  GridI labels(level_res, level_res);
  for (int y = 0; y < level_res; ++y) {
    const int sy = std::clamp(static_cast<int>((y + 0.5) * full / level_res), 0, full - 1);
    for (int x = 0; x < level_res; ++x) {
      const int sx = std::clamp(static_cast<int>((x + 0.5) * full / level_res), 0, full - 1);
      labels(y, x) = labels_full(sy, sx);
    }
  }

  std::set<int> garment_claimed;
  for (const GarmentSource& gsrc : spec.garments)
    garment_claimed.insert(gsrc.labels.begin(), gsrc.labels.end());

  std::vector<GridD> masks;
  GridD person_mask(level_res, level_res);
  for (int y = 0; y < level_res; ++y)
    for (int x = 0; x < level_res; ++x)
      person_mask(y, x) = garment_claimed.count(labels(y, x)) ? 0.0 : 1.0;
  masks.push_back(std::move(person_mask));

  for (const GarmentSource& gsrc : spec.garments) {
    GridD m = GridD::Zero(level_res, level_res);
    const std::set<int> mine(gsrc.labels.begin(), gsrc.labels.end());
    for (int y = 0; y < level_res; ++y)
      for (int x = 0; x < level_res; ++x)
        if (mine.count(labels(y, x))) m(y, x) = 1.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

namespace {

// Per-level warp coordinates for one source into the common target pose.
std::vector<Tensor> source_warp_coords(const posegen::GeneratorConfig& cfg,
                                       coordnet::CoordNet& net, const uvgeom::IUVMap& src_iuv,
                                       const uvgeom::IUVMap& trg_iuv,
                                       const uvgeom::MappingAtlas& atlas) {
  coordnet::SymmetryInputs fields = coordnet::symmetry_inputs(src_iuv, atlas);
  CoordField dense = net.complete(fields.combined);
  CoordField t_coord = uvgeom::uv_to_image(dense, trg_iuv, atlas);
  std::vector<Tensor> coords;
  for (int l = 0; l < cfg.levels(); ++l) {
    const int lr = cfg.resolution_at(l);
    CoordField level = uvgeom::resize_coord_field(t_coord, lr, lr);
    Tensor t({1, 2, lr, lr});
    for (int y = 0; y < lr; ++y)
      for (int x = 0; x < lr; ++x) {
        t.at(0, 0, y, x) = level.x(y, x);
        t.at(0, 1, y, x) = level.y(y, x);
      }
    coords.push_back(std::move(t));
  }
  return coords;
}

Tensor channel_mask(const GridD& m, int channels) {
  Tensor t({1, channels, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < m.rows(); ++y)
      for (int x = 0; x < m.cols(); ++x) t.at(0, c, y, x) = m(y, x);
  return t;
}

}  // namespace

std::vector<ad::Var> transfer_features(ad::Graph& g, posegen::Generator& gen,
                                       coordnet::CoordNet& frozen_coordnet,
                                       const TransferSpec& spec,
                                       const uvgeom::UVSegmentation& seg,
                                       const uvgeom::MappingAtlas& atlas) {
  spec.validate();
  const posegen::GeneratorConfig& cfg = gen.config();
  check(cfg.appearance_source == posegen::AppearanceSource::kSourceImage,
        "transfer_features: garment transfer runs on the source-image appearance path");

  std::vector<const GarmentSource*> sources;
  sources.push_back(&spec.person);
  for (const GarmentSource& gsrc : spec.garments) sources.push_back(&gsrc);

  // Warp each source's pyramid to the target pose.
  std::vector<std::vector<ad::Var>> warped_per_source;
  for (const GarmentSource* src : sources) {
    std::vector<ad::Var> feats =
        gen.encode_source(g, g.constant(with_batch_dim(src->image)));
    std::vector<Tensor> coords =
        source_warp_coords(cfg, frozen_coordnet, src->iuv, spec.target_iuv, atlas);
    warped_per_source.push_back(gen.warp_levels(g, feats, coords));
  }

  // Hard label selection per level; exactly one source owns each pixel.
  std::vector<ad::Var> composited;
  for (int l = 0; l < cfg.levels(); ++l) {
    const int lr = cfg.resolution_at(l);
    const std::vector<GridD> masks = selection_masks(spec, seg, atlas, lr);
    ad::Var acc;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      const int ch = warped_per_source[s][static_cast<std::size_t>(l)].value().dim(1);
      ad::Var term = ad::mul_const(warped_per_source[s][static_cast<std::size_t>(l)],
                                   channel_mask(masks[s], ch));
      acc = acc.defined() ? ad::add(acc, term) : term;
    }
    composited.push_back(acc);
  }
  return composited;
}

Tensor tryon(posegen::Generator& gen, coordnet::CoordNet& frozen_coordnet,
             const TransferSpec& spec, const uvgeom::UVSegmentation& seg,
             const uvgeom::MappingAtlas& atlas, posegen::NoiseMode noise_mode,
             Rng* noise_rng) {
  const posegen::GeneratorConfig& cfg = gen.config();
  ad::Graph g;

  std::vector<ad::Var> composited = transfer_features(g, gen, frozen_coordnet, spec, seg, atlas);

  std::vector<Tensor> level_masks;
  for (int l = 0; l < cfg.levels(); ++l) {
    const int lr = cfg.resolution_at(l);
    const GridD m = uvgeom::resize_mask_nearest(spec.target_mask, lr, lr);
    level_masks.push_back(channel_mask(m, 1));
  }
  std::vector<ad::Var> fused = gen.fuse(g, composited, level_masks);
  ad::Var pose = gen.encode_pose(
      g, g.constant(posegen::iuv_pose_tensor(spec.target_iuv, atlas.part_count)));
  ad::Var out = gen.synthesize(g, pose, fused, noise_mode, noise_rng);
  if (!out.value().all_finite())
    throw NumericError("tryon: non-finite activations in the output image");
  return out.value();
}

}  // namespace posewarp::transfer
