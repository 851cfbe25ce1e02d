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

#ifndef POSEWARP_POSEGEN_HPP
#define POSEWARP_POSEGEN_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "posewarp/nn.hpp"
#include "posewarp/uvgeom.hpp"

namespace posewarp::posegen {

enum class ModulationMode { kSpatial, kNonSpatial };
enum class AppearanceSource { kIncompleteUv, kCompleteUv, kSourceImage };
enum class NoiseMode { kRandom, kFixed, kZero };

ModulationMode modulation_mode_from_string(const std::string& s);
AppearanceSource appearance_source_from_string(const std::string& s);
NoiseMode noise_mode_from_string(const std::string& s);
std::string to_string(ModulationMode m);
std::string to_string(AppearanceSource s);
std::string to_string(NoiseMode m);

struct GeneratorConfig {
  int output_resolution = 64;
  int base_resolution = 4;
  // Channels per resolution, coarse to fine, starting at base_resolution.
  // Index 0 is the pose-feature width.
  std::vector<int> channel_schedule = {128, 96, 64, 48, 32};
  int fpn_channels = 32;
  ModulationMode modulation_mode = ModulationMode::kSpatial;
  AppearanceSource appearance_source = AppearanceSource::kSourceImage;
  std::uint64_t seed = 1;

  void validate() const;
  int levels() const;                  // style-block levels (base excluded)
  int resolution_at(int level) const;  // level 0 -> 2*base, last -> output
  int channels_at(int level) const;    // feature width at that resolution
  int pose_channels() const { return channel_schedule.front(); }
};

// Everything the generator consumes for one sample, all constants w.r.t. the
// generator's parameters. `warp_coords` sample each pyramid level's source
// feature grid ([-1,1] coordinates, sentinel where nothing maps).
struct GenInputs {
  Tensor pose_input;                // [N,3,R,R] target IUV channels
  Tensor encoder_input;             // [N,3,R,R] image or UV-space texture
  std::vector<Tensor> warp_coords;  // per level [N,2,r,r]
  std::vector<Tensor> level_masks;  // per level [N,1,r,r]
  Tensor cond_input;                // [N,3,R,R] discriminator conditioning
};

// Assembles GenInputs for one sample. The meaning of `field` follows the
// appearance source: target coordinates in image space (kSourceImage) or the
// (partial or completed) UV-space field (kIncompleteUv / kCompleteUv).
GenInputs build_gen_inputs(const GeneratorConfig& cfg, const Tensor& src_image,
                           const uvgeom::IUVMap& iuv_trg, const GridD& trg_mask,
                           const uvgeom::CoordField& field,
                           const uvgeom::MappingAtlas& atlas);

// Stacks single-sample inputs along the batch dimension.
GenInputs concat_batch(const std::vector<GenInputs>& items);

// Discriminator conditioning channels (part/255, u, v) for one IUV.
Tensor iuv_condition_tensor(const uvgeom::IUVMap& iuv);
// Pose-encoder input channels (part/part_count, u, v).
Tensor iuv_pose_tensor(const uvgeom::IUVMap& iuv, int part_count);

// One modulated 3x3 convolution with noise-and-bias tail. Spatial mode
// follows modulate -> conv -> normalize -> noise -> bias; non-spatial mode
// uses weight modulation/demodulation with the same tail and no explicit
// normalization.
struct ModulatedConv {
  nn::Parameter w;         // [Co,Ci,3,3]
  nn::Parameter bias;      // [Co]
  nn::Parameter noise_strength;  // [1]
  GridD fixed_noise;       // per-layer noise map at the conv's resolution

  ModulatedConv() = default;
  ModulatedConv(const std::string& name, int in_ch, int out_ch, int res, Rng& rng);

  ad::Var forward_spatial(ad::Graph& g, ad::Var x, ad::Var alpha, ad::Var beta,
                          const Tensor& noise);
  ad::Var forward_nonspatial(ad::Graph& g, ad::Var x, ad::Var style, const Tensor& noise);

  // [N,Co,r,r] noise tensor for this layer under the given mode.
  Tensor make_noise(int n, NoiseMode mode, Rng* rng) const;

  void collect(nn::ParamRefs& out);
  int out_channels() const { return w.value.dim(0); }
  int resolution() const { return static_cast<int>(fixed_noise.rows()); }
};

// Two 1x1 convolutions separated by a ReLU for each parameter; the final
// alpha layer starts at zero with a +1 output offset so modulation begins
// neutral.
struct AffineParamsNet {
  nn::Conv2d alpha1, alpha2;
  nn::Conv2d beta1, beta2;

  AffineParamsNet() = default;
  AffineParamsNet(const std::string& name, int app_ch, int feat_ch, Rng& rng);

  std::pair<ad::Var, ad::Var> forward(ad::Graph& g, ad::Var f_app);
  void collect(nn::ParamRefs& out);
};

// Style vector head for the non-spatial baseline: global average pooling of
// the fused level followed by one affine layer, starting at 1.
struct StyleVectorHead {
  nn::Linear affine;

  StyleVectorHead() = default;
  StyleVectorHead(const std::string& name, int app_ch, int feat_ch, Rng& rng);

  ad::Var forward(ad::Graph& g, ad::Var f_app);
  void collect(nn::ParamRefs& out);
};

class Generator {
 public:
  explicit Generator(const GeneratorConfig& cfg);

  // Stage-wise API (used directly by garment transfer).
  ad::Var encode_pose(ad::Graph& g, ad::Var pose_input);
  std::vector<ad::Var> encode_source(ad::Graph& g, ad::Var encoder_input);  // coarse->fine
  std::vector<ad::Var> warp_levels(ad::Graph& g, const std::vector<ad::Var>& src_feats,
                                   const std::vector<Tensor>& warp_coords);
  std::vector<ad::Var> fuse(ad::Graph& g, const std::vector<ad::Var>& warped,
                            const std::vector<Tensor>& level_masks);
  ad::Var synthesize(ad::Graph& g, ad::Var f_pose, const std::vector<ad::Var>& f_app,
                     NoiseMode noise_mode, Rng* noise_rng);

  ad::Var forward(ad::Graph& g, const GenInputs& in, NoiseMode noise_mode, Rng* noise_rng);
  // Convenience inference entry point; output [N,3,R,R] in [-1,1].
  Tensor generate(const GenInputs& in, NoiseMode noise_mode, Rng* noise_rng = nullptr);

  nn::ParamRefs parameters();
  const GeneratorConfig& config() const { return cfg_; }

  void save(const std::string& path) const;
  static std::unique_ptr<Generator> load(const std::string& path);

 private:
  GeneratorConfig cfg_;
  // pose encoder
  nn::Conv2d pose_stem_;
  std::vector<nn::ResBlock> pose_blocks_;
  // source encoder
  nn::Conv2d src_stem_;
  std::vector<nn::ResBlock> src_blocks_;
  // feature pyramid
  std::vector<nn::Conv2d> fpn_lateral_;
  std::vector<nn::Conv2d> fpn_output_;
  // synthesis
  std::vector<ModulatedConv> convs_;  // two per level
  std::vector<AffineParamsNet> apn_;
  std::vector<StyleVectorHead> style_heads_;
  nn::Conv2d rgb_head_;
};

// Conditional realism scorer. The dual-mode forward propagates an input
// tangent alongside the values, which makes the R1 penalty's parameter
// gradient expressible on the ordinary tape.
class Discriminator {
 public:
  explicit Discriminator(const GeneratorConfig& cfg);

  // image [N,3,R,R] + condition [N,3,R,R] -> [N,1] logits. With `frozen` the
  // weights enter as constants (no gradient accumulation).
  ad::Var score(ad::Graph& g, ad::Var image, const Tensor& cond, bool frozen = false);
  // Returns (score, score_tangent) for an input-direction tangent.
  std::pair<ad::Var, ad::Var> score_dual(ad::Graph& g, ad::Var image, ad::Var tangent,
                                         const Tensor& cond, bool frozen = false);

  nn::ParamRefs parameters();

  void save(const std::string& path) const;
  void load_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  struct DualVar {
    ad::Var value;
    ad::Var tangent;
  };
  DualVar dual_conv(ad::Graph& g, nn::Conv2d& c, DualVar x, bool frozen);
  DualVar dual_lrelu(DualVar x, double slope);

  GeneratorConfig cfg_;
  nn::Conv2d stem_;
  std::vector<nn::Conv2d> downs_;
  nn::Linear final_;
};

}  // namespace posewarp::posegen

#endif  // POSEWARP_POSEGEN_HPP
