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

#ifndef POSEWARP_COORDNET_HPP
#define POSEWARP_COORDNET_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "posewarp/data_io.hpp"
#include "posewarp/nn.hpp"
#include "posewarp/uvgeom.hpp"

namespace posewarp::coordnet {

struct CoordNetConfig {
  int base_channels = 32;
  int depth = 4;  // down/up levels
  bool gated = true;
  double lambda_mirrored = 0.5;
  int uv_height = 32;
  int uv_width = 32;
  // Optimizer settings (inpainting defaults; not tied to the GAN schedule).
  double lr = 3e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 1;

  void validate() const;
  int channels(int level) const;  // capped doubling schedule
};

// The base / stripped-mirrored / combined UV coordinate fields derived from a
// source pose. `mirrored` already has base-covered texels removed, so the two
// visibility masks are disjoint by construction.
struct SymmetryInputs {
  uvgeom::CoordField base;
  uvgeom::CoordField mirrored;
  uvgeom::CoordField combined;
};

SymmetryInputs symmetry_inputs(const uvgeom::IUVMap& iuv_src,
                               const uvgeom::MappingAtlas& atlas);

// Everything one training step needs; UV-space fields at atlas resolution,
// images at pose resolution.
struct CoordBatch {
  SymmetryInputs fields;
  uvgeom::IUVMap iuv_src;
  uvgeom::IUVMap iuv_trg;
  Tensor src_image;  // [3,H,W]
  Tensor trg_image;
  GridD src_pose_mask;
  GridD trg_pose_mask;
};

CoordBatch make_coord_batch(const data_io::FixturePair& fx);

// Gated-convolution encoder/decoder with skip connections and a tanh-bounded
// 2-channel head; inpaints the partial UV correspondence field.
class CoordNet {
 public:
  explicit CoordNet(const CoordNetConfig& cfg);

  // input [N,3,Huv,Wuv] (2 coord channels + mask) -> [N,2,Huv,Wuv] in (-1,1)
  ad::Var forward(ad::Graph& g, ad::Var input);

  // Builds the network input from a combined field (sentinel-coded coords +
  // mask channel).
  static Tensor pack_input(const uvgeom::CoordField& combined);

  // Dense inpainted field for a combined input; no gradients recorded.
  uvgeom::CoordField complete(const uvgeom::CoordField& combined);

  nn::ParamRefs parameters();
  const CoordNetConfig& config() const { return cfg_; }

  void save(const std::string& path) const;
  static std::unique_ptr<CoordNet> load(const std::string& path);

 private:
  struct Stage {
    nn::GatedConv2d gated;
    nn::Conv2d plain;
  };
  ad::Var run_stage(ad::Graph& g, Stage& s, ad::Var x);

  CoordNetConfig cfg_;
  std::vector<Stage> encoder_;  // [0] stem, then `depth` stride-2 stages
  Stage bottleneck_;
  std::vector<Stage> decoder_;  // upsample + skip-concat stages
  nn::Conv2d head_;
  mutable nn::ParamRefs params_cache_;
};

// Masked L1 against the base coordinates plus lambda-weighted masked L1
// against the mirrored ones, normalized by total element count. The two
// visibility masks must be disjoint.
ad::Var loss_coord(ad::Var c_out, const uvgeom::CoordField& base,
                   const uvgeom::CoordField& mirrored, double lambda);

// Warp-consistency loss: maps the inpainted field to source and target image
// space, warps the source image by each, and penalizes the L1 error on the
// respective pose foregrounds. Differentiable through the field values.
ad::Var loss_rgb(ad::Var c_out, const CoordBatch& batch, const uvgeom::MappingAtlas& atlas);

struct CoordStepStats {
  double l_coord = 0.0;
  double l_rgb = 0.0;
  double l_total = 0.0;
};

class CoordNetTrainer {
 public:
  CoordNetTrainer(CoordNet& net, const uvgeom::MappingAtlas& atlas);

  CoordStepStats step(const CoordBatch& batch);

 private:
  CoordNet& net_;
  const uvgeom::MappingAtlas& atlas_;
  nn::Adam adam_;
};

}  // namespace posewarp::coordnet

#endif  // POSEWARP_COORDNET_HPP
