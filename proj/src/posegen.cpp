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

#include "posewarp/posegen.hpp"

#include <json.hpp>

#include <cmath>

#include "posewarp/data_io.hpp"

namespace posewarp::posegen {

using json = nlohmann::json;
namespace ad = posewarp::ad;
using uvgeom::CoordField;
using uvgeom::IUVMap;
using uvgeom::MappingAtlas;

ModulationMode modulation_mode_from_string(const std::string& s) {
  if (s == "spatial") return ModulationMode::kSpatial;
  if (s == "nonspatial") return ModulationMode::kNonSpatial;
  throw ValidationError("unknown modulation_mode: " + s);
}

AppearanceSource appearance_source_from_string(const std::string& s) {
  if (s == "incomplete_uv") return AppearanceSource::kIncompleteUv;
  if (s == "complete_uv") return AppearanceSource::kCompleteUv;
  if (s == "source_image") return AppearanceSource::kSourceImage;
  throw ValidationError("unknown appearance_source: " + s);
}

NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "random") return NoiseMode::kRandom;
  if (s == "fixed") return NoiseMode::kFixed;
  if (s == "zero") return NoiseMode::kZero;
  throw ValidationError("unknown noise mode: " + s);
}

std::string to_string(ModulationMode m) {
  return m == ModulationMode::kSpatial ? "spatial" : "nonspatial";
}
std::string to_string(AppearanceSource s) {
  switch (s) {
    case AppearanceSource::kIncompleteUv: return "incomplete_uv";
    case AppearanceSource::kCompleteUv: return "complete_uv";
    default: return "source_image";
  }
}
std::string to_string(NoiseMode m) {
  switch (m) {
    case NoiseMode::kRandom: return "random";
    case NoiseMode::kFixed: return "fixed";
    default: return "zero";
  }
}

void GeneratorConfig::validate() const {
  check(base_resolution >= 2, "GeneratorConfig: base_resolution too small");
  check(output_resolution > base_resolution,
        "GeneratorConfig: output must exceed base resolution");
  int r = base_resolution;
  int count = 0;
  while (r < output_resolution) {
    r *= 2;
    ++count;
  }
  check(r == output_resolution,
        "GeneratorConfig: output resolution is not base * 2^k");
  check(static_cast<int>(channel_schedule.size()) == count + 1,
        "GeneratorConfig: channel_schedule must have one entry per resolution");
  for (int c : channel_schedule)
    check(c >= 1, "GeneratorConfig: non-positive channel count");
}

int GeneratorConfig::levels() const {
  return static_cast<int>(channel_schedule.size()) - 1;
}

int GeneratorConfig::resolution_at(int level) const {
  return base_resolution << (level + 1);
}

int GeneratorConfig::channels_at(int level) const {
  return channel_schedule.at(static_cast<std::size_t>(level) + 1);
}

// --- input assembly -----------------------------------------------------------------

Tensor iuv_condition_tensor(const IUVMap& iuv) {
  Tensor t({1, 3, iuv.height(), iuv.width()});
  for (int y = 0; y < iuv.height(); ++y)
    for (int x = 0; x < iuv.width(); ++x) {
      t.at(0, 0, y, x) = static_cast<double>(iuv.part(y, x)) / 255.0;
      t.at(0, 1, y, x) = iuv.u(y, x);
      t.at(0, 2, y, x) = iuv.v(y, x);
    }
  return t;
}

Tensor iuv_pose_tensor(const IUVMap& iuv, int part_count) {
  Tensor t({1, 3, iuv.height(), iuv.width()});
  for (int y = 0; y < iuv.height(); ++y)
    for (int x = 0; x < iuv.width(); ++x) {
      t.at(0, 0, y, x) = static_cast<double>(iuv.part(y, x)) / part_count;
      t.at(0, 1, y, x) = iuv.u(y, x);
      t.at(0, 2, y, x) = iuv.v(y, x);
    }
  return t;
}

namespace {

Tensor coords_tensor_batched(const CoordField& f) {
  Tensor t({1, 2, f.height(), f.width()});
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      t.at(0, 0, y, x) = f.x(y, x);
      t.at(0, 1, y, x) = f.y(y, x);
    }
  return t;
}

Tensor mask_tensor_batched(const GridD& m) {
  Tensor t({1, 1, static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (int y = 0; y < m.rows(); ++y)
    for (int x = 0; x < m.cols(); ++x) t.at(0, 0, y, x) = m(y, x);
  return t;
}

// Coordinates into a level-resolution texture pyramid for each target pixel's
// UV texel; background pixels get the sentinel.
Tensor uv_level_coords(const IUVMap& iuv_level, const MappingAtlas& atlas, int level_res) {
  Tensor t = Tensor::full({1, 2, level_res, level_res}, uvgeom::kCoordSentinel);
  for (int y = 0; y < level_res; ++y)
    for (int x = 0; x < level_res; ++x) {
      const int p = iuv_level.part(y, x);
      if (p == 0) continue;
      const auto [tx, ty] = atlas.texel_of(p, iuv_level.u(y, x), iuv_level.v(y, x));
      // Box-scale atlas texel position into the level grid, then normalize.
      const double lx = (tx + 0.5) * level_res / atlas.uv_width - 0.5;
      const double ly = (ty + 0.5) * level_res / atlas.uv_height - 0.5;
      t.at(0, 0, y, x) = (2.0 * lx + 1.0) / level_res - 1.0;
      t.at(0, 1, y, x) = (2.0 * ly + 1.0) / level_res - 1.0;
    }
  return t;
}

}  // namespace

GenInputs build_gen_inputs(const GeneratorConfig& cfg, const Tensor& src_image,
                           const IUVMap& iuv_trg, const GridD& trg_mask,
                           const CoordField& field, const MappingAtlas& atlas) {
  cfg.validate();
  const int r = cfg.output_resolution;
  check(src_image.rank() == 3 && src_image.dim(0) == 3, "build_gen_inputs: bad source image");
  check(iuv_trg.height() == r && iuv_trg.width() == r,
        "build_gen_inputs: target IUV not at output resolution");
  check(trg_mask.rows() == r && trg_mask.cols() == r,
        "build_gen_inputs: target mask not at output resolution");

  GenInputs in;
  in.pose_input = iuv_pose_tensor(iuv_trg, atlas.part_count);
  in.cond_input = iuv_condition_tensor(iuv_trg);

  if (cfg.appearance_source == AppearanceSource::kSourceImage) {
    check(src_image.dim(1) == r && src_image.dim(2) == r,
          "build_gen_inputs: source image not at output resolution");
    check(field.height() == r && field.width() == r,
          "build_gen_inputs: target coordinates not at output resolution");
    in.encoder_input = with_batch_dim(src_image);
    for (int l = 0; l < cfg.levels(); ++l) {
      const int lr = cfg.resolution_at(l);
      in.warp_coords.push_back(coords_tensor_batched(uvgeom::resize_coord_field(field, lr, lr)));
    }
  } else {
    check(field.height() == atlas.uv_height && field.width() == atlas.uv_width,
          "build_gen_inputs: UV field not at atlas resolution");
    // UV-space texture: the source image sampled at the (partial or complete)
    // stored coordinates; sentinel entries come out as zeros.
    Tensor texture = uvgeom::bilinear_sample(src_image, field);
    in.encoder_input = with_batch_dim(uvgeom::resize_bilinear(texture, r, r));
    for (int l = 0; l < cfg.levels(); ++l) {
      const int lr = cfg.resolution_at(l);
      const IUVMap iuv_level = uvgeom::resize_iuv_nearest(iuv_trg, lr, lr);
      in.warp_coords.push_back(uv_level_coords(iuv_level, atlas, lr));
    }
  }
  for (int l = 0; l < cfg.levels(); ++l) {
    const int lr = cfg.resolution_at(l);
    in.level_masks.push_back(mask_tensor_batched(uvgeom::resize_mask_nearest(trg_mask, lr, lr)));
  }
  return in;
}

GenInputs concat_batch(const std::vector<GenInputs>& items) {
  check(!items.empty(), "concat_batch: empty batch");
  auto stack = [&](auto pick) {
    const Tensor& first = pick(items[0]);
    std::vector<int> shape = first.shape();
    shape[0] = 0;
    for (const GenInputs& it : items) shape[0] += pick(it).dim(0);
    Tensor out(shape);
    Eigen::Index off = 0;
    for (const GenInputs& it : items) {
      const Tensor& t = pick(it);
      check(t.numel() == first.numel(), "concat_batch: shape mismatch");
      std::copy(t.data(), t.data() + t.numel(), out.data() + off);
      off += t.numel();
    }
    return out;
  };
  GenInputs out;
  out.pose_input = stack([](const GenInputs& g) -> const Tensor& { return g.pose_input; });
  out.encoder_input = stack([](const GenInputs& g) -> const Tensor& { return g.encoder_input; });
  out.cond_input = stack([](const GenInputs& g) -> const Tensor& { return g.cond_input; });
  const std::size_t levels = items[0].warp_coords.size();
  for (std::size_t l = 0; l < levels; ++l) {
    out.warp_coords.push_back(
        stack([l](const GenInputs& g) -> const Tensor& { return g.warp_coords[l]; }));
    out.level_masks.push_back(
        stack([l](const GenInputs& g) -> const Tensor& { return g.level_masks[l]; }));
  }
  return out;
}

// --- modulated convolution -------------------------------------------------------------

ModulatedConv::ModulatedConv(const std::string& name, int in_ch, int out_ch, int res,
                             Rng& rng) {
  w.name = name + ".w";
  w.value = nn::kaiming_normal({out_ch, in_ch, 3, 3}, in_ch * 9, rng);
  bias.name = name + ".bias";
  bias.value = Tensor::zeros({out_ch});
  noise_strength.name = name + ".noise_strength";
  noise_strength.value = Tensor::zeros({1});
  fixed_noise = GridD(res, res);
  for (int y = 0; y < res; ++y)
    for (int x = 0; x < res; ++x) fixed_noise(y, x) = rng.normal();
}

Tensor ModulatedConv::make_noise(int n, NoiseMode mode, Rng* rng) const {
  const int res = resolution();
  const int co = out_channels();
  Tensor t({n, co, res, res});
  if (mode == NoiseMode::kZero) return t;
  for (int i = 0; i < n; ++i) {
    GridD map;
    if (mode == NoiseMode::kFixed) {
      map = fixed_noise;
    } else {
      check(rng != nullptr, "ModulatedConv: random noise requires an RNG");
      map = GridD(res, res);
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) map(y, x) = rng->normal();
    }
    // single-channel map broadcast over channels
    for (int c = 0; c < co; ++c)
      for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) t.at(i, c, y, x) = map(y, x);
  }
  return t;
}

ad::Var ModulatedConv::forward_spatial(ad::Graph& g, ad::Var x, ad::Var alpha, ad::Var beta,
                                       const Tensor& noise) {
  ad::Var modulated = ad::add(ad::mul(x, alpha), beta);
  ad::Var y = ad::conv2d(modulated, g.param(w), ad::Var{}, 1, 1);
  y = ad::normalize_unit(y, 1e-8);
  y = ad::add_noise(y, g.param(noise_strength), noise);
  return ad::add_channel_bias(y, g.param(bias));
}

ad::Var ModulatedConv::forward_nonspatial(ad::Graph& g, ad::Var x, ad::Var style,
                                          const Tensor& noise) {
  ad::Var y = ad::conv2d_modulated(x, g.param(w), style, /*demodulate=*/true, ad::Var{});
  y = ad::add_noise(y, g.param(noise_strength), noise);
  return ad::add_channel_bias(y, g.param(bias));
}

void ModulatedConv::collect(nn::ParamRefs& out) {
  out.push_back(&w);
  out.push_back(&bias);
  out.push_back(&noise_strength);
}

AffineParamsNet::AffineParamsNet(const std::string& name, int app_ch, int feat_ch, Rng& rng)
    : alpha1(name + ".alpha1", app_ch, app_ch, 1, 1, rng),
      alpha2(name + ".alpha2", app_ch, feat_ch, 1, 1, rng, /*zero_init=*/true),
      beta1(name + ".beta1", app_ch, app_ch, 1, 1, rng),
      beta2(name + ".beta2", app_ch, feat_ch, 1, 1, rng, /*zero_init=*/true) {}

std::pair<ad::Var, ad::Var> AffineParamsNet::forward(ad::Graph& g, ad::Var f_app) {
  ad::Var a = ad::add_scalar(alpha2.forward(g, ad::relu(alpha1.forward(g, f_app))), 1.0);
  ad::Var b = beta2.forward(g, ad::relu(beta1.forward(g, f_app)));
  return {a, b};
}

void AffineParamsNet::collect(nn::ParamRefs& out) {
  alpha1.collect(out);
  alpha2.collect(out);
  beta1.collect(out);
  beta2.collect(out);
}

StyleVectorHead::StyleVectorHead(const std::string& name, int app_ch, int feat_ch, Rng& rng)
    : affine(name + ".affine", app_ch, feat_ch, rng, /*zero_init=*/true) {}

ad::Var StyleVectorHead::forward(ad::Graph& g, ad::Var f_app) {
  return ad::add_scalar(affine.forward(g, ad::global_avg_pool(f_app)), 1.0);
}

void StyleVectorHead::collect(nn::ParamRefs& out) { affine.collect(out); }

// --- generator -----------------------------------------------------------------------------

Generator::Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  const int levels = cfg_.levels();
  const auto& sched = cfg_.channel_schedule;

  pose_stem_ = nn::Conv2d("gen.pose.stem", 3, sched[static_cast<std::size_t>(levels)], 3, 1, rng);
  for (int k = 1; k <= levels; ++k)
    pose_blocks_.emplace_back("gen.pose.down" + std::to_string(k),
                              sched[static_cast<std::size_t>(levels - k + 1)],
                              sched[static_cast<std::size_t>(levels - k)], true, rng);

  src_stem_ = nn::Conv2d("gen.src.stem", 3, sched[static_cast<std::size_t>(levels)], 3, 1, rng);
  for (int k = 1; k < levels; ++k)
    src_blocks_.emplace_back("gen.src.down" + std::to_string(k),
                             sched[static_cast<std::size_t>(levels - k + 1)],
                             sched[static_cast<std::size_t>(levels - k)], true, rng);

  for (int l = 0; l < levels; ++l) {
    // encoder channels at this level plus the mask channel
    const int enc_ch = sched[static_cast<std::size_t>(l + 1)] + 1;
    fpn_lateral_.emplace_back("gen.fpn.lat" + std::to_string(l), enc_ch, cfg_.fpn_channels, 1,
                              1, rng);
    fpn_output_.emplace_back("gen.fpn.out" + std::to_string(l), cfg_.fpn_channels,
                             cfg_.fpn_channels, 3, 1, rng);
  }

  for (int l = 0; l < levels; ++l) {
    const int res = cfg_.resolution_at(l);
    const int in1 = sched[static_cast<std::size_t>(l)];
    const int out = sched[static_cast<std::size_t>(l + 1)];
    convs_.emplace_back("gen.block" + std::to_string(l) + ".conv1", in1, out, res, rng);
    convs_.emplace_back("gen.block" + std::to_string(l) + ".conv2", out, out, res, rng);
    apn_.emplace_back("gen.block" + std::to_string(l) + ".apn1", cfg_.fpn_channels, in1, rng);
    apn_.emplace_back("gen.block" + std::to_string(l) + ".apn2", cfg_.fpn_channels, out, rng);
    style_heads_.emplace_back("gen.block" + std::to_string(l) + ".style1", cfg_.fpn_channels,
                              in1, rng);
    style_heads_.emplace_back("gen.block" + std::to_string(l) + ".style2", cfg_.fpn_channels,
                              out, rng);
  }
  rgb_head_ = nn::Conv2d("gen.rgb", sched.back(), 3, 1, 1, rng);
}

ad::Var Generator::encode_pose(ad::Graph& g, ad::Var pose_input) {
  check(pose_input.value().dim(2) == cfg_.output_resolution &&
            pose_input.value().dim(3) == cfg_.output_resolution,
        "encode_pose: input not at output resolution");
  ad::Var x = ad::leaky_relu(pose_stem_.forward(g, pose_input), 0.2);
  for (nn::ResBlock& b : pose_blocks_) x = b.forward(g, x);
  return x;
}

std::vector<ad::Var> Generator::encode_source(ad::Graph& g, ad::Var encoder_input) {
  const int levels = cfg_.levels();
  std::vector<ad::Var> taps(static_cast<std::size_t>(levels));
  ad::Var x = ad::leaky_relu(src_stem_.forward(g, encoder_input), 0.2);
  taps[static_cast<std::size_t>(levels - 1)] = x;
  for (int k = 1; k < levels; ++k) {
    x = src_blocks_[static_cast<std::size_t>(k - 1)].forward(g, x);
    taps[static_cast<std::size_t>(levels - 1 - k)] = x;
  }
  return taps;  // coarse -> fine
}

std::vector<ad::Var> Generator::warp_levels(ad::Graph& g, const std::vector<ad::Var>& src_feats,
                                            const std::vector<Tensor>& warp_coords) {
  check(src_feats.size() == warp_coords.size(), "warp_levels: level count mismatch");
  std::vector<ad::Var> warped;
  for (std::size_t l = 0; l < src_feats.size(); ++l)
    warped.push_back(ad::grid_sample(src_feats[l], g.constant(warp_coords[l])));
  return warped;
}

std::vector<ad::Var> Generator::fuse(ad::Graph& g, const std::vector<ad::Var>& warped,
                                     const std::vector<Tensor>& level_masks) {
  const int levels = cfg_.levels();
  std::vector<ad::Var> laterals;
  for (int l = 0; l < levels; ++l) {
    ad::Var with_mask = ad::concat_channels(
        {warped[static_cast<std::size_t>(l)], g.constant(level_masks[static_cast<std::size_t>(l)])});
    laterals.push_back(fpn_lateral_[static_cast<std::size_t>(l)].forward(g, with_mask));
  }
  // top-down pathway with lateral sums
  std::vector<ad::Var> fused(static_cast<std::size_t>(levels));
  ad::Var p = laterals[0];
  fused[0] = fpn_output_[0].forward(g, p);
  for (int l = 1; l < levels; ++l) {
    p = ad::add(laterals[static_cast<std::size_t>(l)], ad::upsample_nearest2(p));
    fused[static_cast<std::size_t>(l)] = fpn_output_[static_cast<std::size_t>(l)].forward(g, p);
  }
  return fused;
}

ad::Var Generator::synthesize(ad::Graph& g, ad::Var f_pose, const std::vector<ad::Var>& f_app,
                              NoiseMode noise_mode, Rng* noise_rng) {
  const int levels = cfg_.levels();
  const int n = f_pose.value().dim(0);
  ad::Var x = f_pose;
  for (int l = 0; l < levels; ++l) {
    x = ad::upsample_nearest2(x);
    for (int c = 0; c < 2; ++c) {
      const std::size_t idx = static_cast<std::size_t>(2 * l + c);
      ModulatedConv& mc = convs_[idx];
      const Tensor noise = mc.make_noise(n, noise_mode, noise_rng);
      if (cfg_.modulation_mode == ModulationMode::kSpatial) {
        auto [alpha, beta] = apn_[idx].forward(g, f_app[static_cast<std::size_t>(l)]);
        x = mc.forward_spatial(g, x, alpha, beta, noise);
      } else {
        ad::Var style = style_heads_[idx].forward(g, f_app[static_cast<std::size_t>(l)]);
        x = mc.forward_nonspatial(g, x, style, noise);
      }
      x = ad::leaky_relu(x, 0.2);
      if (!x.value().all_finite())
        throw NumericError("generator: non-finite activations after block " +
                           std::to_string(l) + " conv " + std::to_string(c + 1));
    }
  }
  return ad::tanh_(rgb_head_.forward(g, x));
}

ad::Var Generator::forward(ad::Graph& g, const GenInputs& in, NoiseMode noise_mode,
                           Rng* noise_rng) {
  ad::Var f_pose = encode_pose(g, g.constant(in.pose_input));
  std::vector<ad::Var> src = encode_source(g, g.constant(in.encoder_input));
  std::vector<ad::Var> warped = warp_levels(g, src, in.warp_coords);
  std::vector<ad::Var> fused = fuse(g, warped, in.level_masks);
  return synthesize(g, f_pose, fused, noise_mode, noise_rng);
}

Tensor Generator::generate(const GenInputs& in, NoiseMode noise_mode, Rng* noise_rng) {
  ad::Graph g;
  ad::Var out = forward(g, in, noise_mode, noise_rng);
  if (!out.value().all_finite())
    throw NumericError("generate: non-finite activations in the output image");
  return out.value();
}

nn::ParamRefs Generator::parameters() {
  nn::ParamRefs out;
  pose_stem_.collect(out);
  for (auto& b : pose_blocks_) b.collect(out);
  src_stem_.collect(out);
  for (auto& b : src_blocks_) b.collect(out);
  for (auto& c : fpn_lateral_) c.collect(out);
  for (auto& c : fpn_output_) c.collect(out);
  for (auto& c : convs_) c.collect(out);
  for (auto& a : apn_) a.collect(out);
  for (auto& s : style_heads_) s.collect(out);
  rgb_head_.collect(out);
  return out;
}

namespace {

json config_to_json(const GeneratorConfig& cfg) {
  return json{{"output_resolution", cfg.output_resolution},
              {"base_resolution", cfg.base_resolution},
              {"channel_schedule", cfg.channel_schedule},
              {"fpn_channels", cfg.fpn_channels},
              {"modulation_mode", to_string(cfg.modulation_mode)},
              {"appearance_source", to_string(cfg.appearance_source)},
              {"seed", cfg.seed}};
}

GeneratorConfig config_from_json(const json& c) {
  GeneratorConfig cfg;
  cfg.output_resolution = c.at("output_resolution").get<int>();
  cfg.base_resolution = c.at("base_resolution").get<int>();
  cfg.channel_schedule = c.at("channel_schedule").get<std::vector<int>>();
  cfg.fpn_channels = c.at("fpn_channels").get<int>();
  cfg.modulation_mode = modulation_mode_from_string(c.at("modulation_mode").get<std::string>());
  cfg.appearance_source =
      appearance_source_from_string(c.at("appearance_source").get<std::string>());
  cfg.seed = c.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void Generator::save(const std::string& path) const {
  json meta;
  meta["kind"] = "generator";
  meta["config"] = config_to_json(cfg_);
  auto* self = const_cast<Generator*>(this);
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (nn::Parameter* p : self->parameters()) tensors.emplace_back(p->name, &p->value);
  data_io::save_checkpoint(path, meta.dump(), tensors);
}

std::unique_ptr<Generator> Generator::load(const std::string& path) {
  data_io::Checkpoint ckpt = data_io::load_checkpoint(path);
  json meta = json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "generator")
    throw IoError("not a generator checkpoint: " + path);
  auto gen = std::make_unique<Generator>(config_from_json(meta.at("config")));
  nn::load_named_tensors(gen->parameters(), ckpt.tensors);
  return gen;
}

// --- discriminator ---------------------------------------------------------------------------

Discriminator::Discriminator(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed + 0x517CC1B727220A95ULL);
  const int levels = cfg_.levels();
  const auto& sched = cfg_.channel_schedule;
  stem_ = nn::Conv2d("disc.stem", 6, sched[static_cast<std::size_t>(levels)], 3, 1, rng);
  for (int k = 1; k <= levels; ++k)
    downs_.emplace_back("disc.down" + std::to_string(k),
                        sched[static_cast<std::size_t>(levels - k + 1)],
                        sched[static_cast<std::size_t>(levels - k)], 3, 2, rng);
  const int flat = sched[0] * cfg_.base_resolution * cfg_.base_resolution;
  final_ = nn::Linear("disc.final", flat, 1, rng);
}

Discriminator::DualVar Discriminator::dual_conv(ad::Graph& g, nn::Conv2d& c, DualVar x,
                                                bool frozen) {
  ad::Var wv = frozen ? g.constant(c.w.value) : g.param(c.w);
  ad::Var bv = frozen ? g.constant(c.b.value) : g.param(c.b);
  DualVar out;
  out.value = ad::conv2d(x.value, wv, bv, c.stride, c.pad);
  if (x.tangent.defined())
    out.tangent = ad::conv2d(x.tangent, wv, ad::Var{}, c.stride, c.pad);
  return out;
}

Discriminator::DualVar Discriminator::dual_lrelu(DualVar x, double slope) {
  DualVar out;
  out.value = ad::leaky_relu(x.value, slope);
  if (x.tangent.defined()) {
    // piecewise-linear: the tangent passes through the active-slope mask
    Tensor mask(x.value.value().shape());
    mask.flat() =
        (x.value.value().flat() > 0.0).cast<double>() * (1.0 - slope) + slope;
    out.tangent = ad::mul_const(x.tangent, mask);
  }
  return out;
}

ad::Var Discriminator::score(ad::Graph& g, ad::Var image, const Tensor& cond, bool frozen) {
  auto [s, unused] = score_dual(g, image, ad::Var{}, cond, frozen);
  (void)unused;
  return s;
}

std::pair<ad::Var, ad::Var> Discriminator::score_dual(ad::Graph& g, ad::Var image,
                                                      ad::Var tangent, const Tensor& cond,
                                                      bool frozen) {
  const int n = image.value().dim(0);
  check(cond.rank() == 4 && cond.dim(0) == n, "Discriminator: condition batch mismatch");
  DualVar x;
  x.value = ad::concat_channels({image, g.constant(cond)});
  if (tangent.defined()) {
    Tensor zeros(cond.shape());
    x.tangent = ad::concat_channels({tangent, g.constant(zeros)});
  }
  x = dual_lrelu(dual_conv(g, stem_, x, frozen), 0.2);
  for (nn::Conv2d& c : downs_) x = dual_lrelu(dual_conv(g, c, x, frozen), 0.2);

  const int flat = cfg_.channel_schedule[0] * cfg_.base_resolution * cfg_.base_resolution;
  ad::Var wv = frozen ? g.constant(final_.w.value) : g.param(final_.w);
  ad::Var bv = frozen ? g.constant(final_.b.value) : g.param(final_.b);
  ad::Var sv = ad::linear(ad::reshape(x.value, {n, flat}), wv, bv);
  ad::Var st;
  if (x.tangent.defined())
    st = ad::matmul(ad::reshape(x.tangent, {n, flat}), wv);
  return {sv, st};
}

nn::ParamRefs Discriminator::parameters() {
  nn::ParamRefs out;
  stem_.collect(out);
  for (auto& c : downs_) c.collect(out);
  final_.collect(out);
  return out;
}

void Discriminator::save(const std::string& path) const {
  json meta;
  meta["kind"] = "discriminator";
  meta["config"] = config_to_json(cfg_);
  auto* self = const_cast<Discriminator*>(this);
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (nn::Parameter* p : self->parameters()) tensors.emplace_back(p->name, &p->value);
  data_io::save_checkpoint(path, meta.dump(), tensors);
}

void Discriminator::load_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  nn::load_named_tensors(parameters(), tensors);
}

}  // namespace posewarp::posegen
