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

#include "posewarp/coordnet.hpp"

#include <json.hpp>

#include <cmath>

namespace posewarp::coordnet {

using json = nlohmann::json;
namespace ad = posewarp::ad;

void CoordNetConfig::validate() const {
  check(depth >= 2, "CoordNetConfig: depth must be at least 2");
  check(base_channels >= 1, "CoordNetConfig: base_channels must be positive");
  check(lambda_mirrored >= 0.0, "CoordNetConfig: negative lambda_mirrored");
  const int factor = 1 << depth;
  check(uv_height % factor == 0 && uv_width % factor == 0,
        "CoordNetConfig: atlas resolution not divisible by 2^depth");
}

int CoordNetConfig::channels(int level) const {
  return std::min(base_channels << level, 256);
}

SymmetryInputs symmetry_inputs(const uvgeom::IUVMap& iuv_src,
                               const uvgeom::MappingAtlas& atlas) {
  using uvgeom::CoordField;
  const int h = iuv_src.height();
  const int w = iuv_src.width();
  CoordField mesh = uvgeom::meshgrid_coords(h, w);

  SymmetryInputs out;
  out.base = image_to_uv(iuv_src, atlas, mesh);

  // The mirrored field carries coordinates into the *original* source image:
  // pixel (y,x) of the flipped grid sits at column W-1-x, whose normalized
  // x-coordinate is exactly the negation.
  CoordField flipped = mesh;
  flipped.x = -mesh.x;
  const uvgeom::IUVMap mirrored_iuv = mirror_iuv(iuv_src, atlas);
  CoordField mirrored_full = image_to_uv(mirrored_iuv, atlas, flipped);

  out.combined = combine_symmetry(out.base, mirrored_full);

  // Strip base-covered texels so the two loss masks stay disjoint.
  out.mirrored = CoordField::invalid(atlas.uv_height, atlas.uv_width);
  for (int y = 0; y < atlas.uv_height; ++y)
    for (int x = 0; x < atlas.uv_width; ++x)
      if (mirrored_full.mask(y, x) == 1.0 && out.base.mask(y, x) == 0.0) {
        out.mirrored.mask(y, x) = 1.0;
        out.mirrored.x(y, x) = mirrored_full.x(y, x);
        out.mirrored.y(y, x) = mirrored_full.y(y, x);
      }
  return out;
}

CoordBatch make_coord_batch(const data_io::FixturePair& fx) {
  CoordBatch b;
  b.fields = symmetry_inputs(fx.src_iuv, fx.atlas);
  b.iuv_src = fx.src_iuv;
  b.iuv_trg = fx.trg_iuv;
  b.src_image = fx.src_image;
  b.trg_image = fx.trg_image;
  b.src_pose_mask = fx.src_fg;
  b.trg_pose_mask = fx.trg_fg;
  return b;
}

CoordNet::CoordNet(const CoordNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  auto make_stage = [&](const std::string& name, int in_ch, int out_ch, int stride) {
    Stage s;
    if (cfg_.gated)
      s.gated = nn::GatedConv2d(name, in_ch, out_ch, 3, stride, rng);
    else
      s.plain = nn::Conv2d(name, in_ch, out_ch, 3, stride, rng);
    return s;
  };

  encoder_.push_back(make_stage("coordnet.stem", 3, cfg_.channels(0), 1));
  for (int l = 0; l < cfg_.depth; ++l)
    encoder_.push_back(make_stage("coordnet.down" + std::to_string(l), cfg_.channels(l),
                                  cfg_.channels(l + 1), 2));
  bottleneck_ = make_stage("coordnet.mid", cfg_.channels(cfg_.depth), cfg_.channels(cfg_.depth), 1);
  for (int l = cfg_.depth - 1; l >= 0; --l) {
    const int in_ch = cfg_.channels(l + 1) + cfg_.channels(l);  // upsampled + skip
    decoder_.push_back(
        make_stage("coordnet.up" + std::to_string(l), in_ch, cfg_.channels(l), 1));
  }
  head_ = nn::Conv2d("coordnet.head", cfg_.channels(0), 2, 3, 1, rng);
}

ad::Var CoordNet::run_stage(ad::Graph& g, Stage& s, ad::Var x) {
  if (cfg_.gated) return s.gated.forward(g, x);
  return ad::leaky_relu(s.plain.forward(g, x), 0.2);
}

ad::Var CoordNet::forward(ad::Graph& g, ad::Var input) {
  check(input.value().rank() == 4 && input.value().dim(1) == 3,
        "CoordNet: expected input [N,3,Huv,Wuv]");
  check(input.value().dim(2) == cfg_.uv_height && input.value().dim(3) == cfg_.uv_width,
        "CoordNet: input does not match the configured atlas resolution");

  std::vector<ad::Var> skips;
  ad::Var x = run_stage(g, encoder_[0], input);
  skips.push_back(x);
  for (int l = 0; l < cfg_.depth; ++l) {
    x = run_stage(g, encoder_[static_cast<std::size_t>(l) + 1], x);
    if (l + 1 < cfg_.depth) skips.push_back(x);
  }
  x = run_stage(g, bottleneck_, x);
  for (int i = 0; i < cfg_.depth; ++i) {
    x = ad::upsample_nearest2(x);
    ad::Var skip = skips[skips.size() - 1 - static_cast<std::size_t>(i)];
    x = run_stage(g, decoder_[static_cast<std::size_t>(i)], ad::concat_channels({x, skip}));
  }
  return ad::tanh_(head_.forward(g, x));
}

Tensor CoordNet::pack_input(const uvgeom::CoordField& combined) {
  Tensor t({1, 3, combined.height(), combined.width()});
  for (int y = 0; y < combined.height(); ++y)
    for (int x = 0; x < combined.width(); ++x) {
      t.at(0, 0, y, x) = combined.x(y, x);
      t.at(0, 1, y, x) = combined.y(y, x);
      t.at(0, 2, y, x) = combined.mask(y, x);
    }
  return t;
}

uvgeom::CoordField CoordNet::complete(const uvgeom::CoordField& combined) {
  check(combined.height() == cfg_.uv_height && combined.width() == cfg_.uv_width,
        "CoordNet::complete: field does not match the configured atlas resolution");
  ad::Graph g;
  ad::Var out = forward(g, g.constant(pack_input(combined)));
  uvgeom::CoordField field;
  field.x = plane_from_tensor(out.value(), 0, 0);
  field.y = plane_from_tensor(out.value(), 0, 1);
  field.mask = GridD::Ones(cfg_.uv_height, cfg_.uv_width);
  return field;
}

nn::ParamRefs CoordNet::parameters() {
  nn::ParamRefs out;
  auto collect_stage = [&](Stage& s) {
    if (cfg_.gated)
      s.gated.collect(out);
    else
      s.plain.collect(out);
  };
  for (Stage& s : encoder_) collect_stage(s);
  collect_stage(bottleneck_);
  for (Stage& s : decoder_) collect_stage(s);
  head_.collect(out);
  return out;
}

void CoordNet::save(const std::string& path) const {
  json meta;
  meta["kind"] = "coordnet";
  meta["config"] = {{"base_channels", cfg_.base_channels}, {"depth", cfg_.depth},
                    {"gated", cfg_.gated},                 {"lambda_mirrored", cfg_.lambda_mirrored},
                    {"uv_height", cfg_.uv_height},         {"uv_width", cfg_.uv_width},
                    {"lr", cfg_.lr},                       {"beta1", cfg_.beta1},
                    {"beta2", cfg_.beta2},                 {"seed", cfg_.seed}};
  auto* self = const_cast<CoordNet*>(this);
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (nn::Parameter* p : self->parameters()) tensors.emplace_back(p->name, &p->value);
  data_io::save_checkpoint(path, meta.dump(), tensors);
}

std::unique_ptr<CoordNet> CoordNet::load(const std::string& path) {
  data_io::Checkpoint ckpt = data_io::load_checkpoint(path);
  json meta = json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "coordnet")
    throw IoError("not a coordnet checkpoint: " + path);
  const json& c = meta.at("config");
  CoordNetConfig cfg;
  cfg.base_channels = c.at("base_channels").get<int>();
  cfg.depth = c.at("depth").get<int>();
  cfg.gated = c.at("gated").get<bool>();
  cfg.lambda_mirrored = c.at("lambda_mirrored").get<double>();
  cfg.uv_height = c.at("uv_height").get<int>();
  cfg.uv_width = c.at("uv_width").get<int>();
  cfg.lr = c.at("lr").get<double>();
  cfg.beta1 = c.at("beta1").get<double>();
  cfg.beta2 = c.at("beta2").get<double>();
  cfg.seed = c.at("seed").get<std::uint64_t>();
  auto net = std::make_unique<CoordNet>(cfg);
  nn::load_named_tensors(net->parameters(), ckpt.tensors);
  return net;
}

namespace {

// [N,C,H,W] constant replicating a plane across N and C.
Tensor broadcast_plane(const GridD& plane, int n, int c) {
  const int h = static_cast<int>(plane.rows());
  const int w = static_cast<int>(plane.cols());
  Tensor t({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(i, j, y, x) = plane(y, x);
  return t;
}

// Coordinates times mask, zeros elsewhere (drops the sentinel).
Tensor masked_coords_tensor(const uvgeom::CoordField& f, int n) {
  Tensor t({n, 2, f.height(), f.width()});
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x)
        if (f.mask(y, x) == 1.0) {
          t.at(i, 0, y, x) = f.x(y, x);
          t.at(i, 1, y, x) = f.y(y, x);
        }
  return t;
}

}  // namespace

ad::Var loss_coord(ad::Var c_out, const uvgeom::CoordField& base,
                   const uvgeom::CoordField& mirrored, double lambda) {
  base.validate();
  mirrored.validate();
  if ((base.mask * mirrored.mask).sum() != 0.0)
    throw ValidationError("loss_coord: base and mirrored masks overlap");
  const int n = c_out.value().dim(0);
  check(c_out.value().rank() == 4 && c_out.value().dim(1) == 2 &&
            c_out.value().dim(2) == base.height() && c_out.value().dim(3) == base.width(),
        "loss_coord: output/field shape mismatch");

  ad::Graph& g = *c_out.node->owner;
  const Tensor mb = broadcast_plane(base.mask, n, 2);
  const Tensor mm = broadcast_plane(mirrored.mask, n, 2);
  // masked_coords_tensor already zeroes invalid entries, i.e. holds C * M.
  ad::Var term_base = ad::mean_abs(
      ad::sub(ad::mul_const(c_out, mb), g.constant(masked_coords_tensor(base, n))));
  ad::Var term_mirror = ad::mean_abs(
      ad::sub(ad::mul_const(c_out, mm), g.constant(masked_coords_tensor(mirrored, n))));
  return ad::add(term_base, ad::mul_scalar(term_mirror, lambda));
}

ad::Var loss_rgb(ad::Var c_out, const CoordBatch& batch, const uvgeom::MappingAtlas& atlas) {
  ad::Graph& g = *c_out.node->owner;
  const int n = c_out.value().dim(0);

  auto batched = [n](const Tensor& chw) {
    Tensor t({n, chw.dim(0), chw.dim(1), chw.dim(2)});
    for (int i = 0; i < n; ++i)
      std::copy(chw.data(), chw.data() + chw.numel(),
                t.data() + static_cast<Eigen::Index>(i) * chw.numel());
    return t;
  };
  const Tensor src_batch = batched(batch.src_image);

  // Warp the source image by the field mapped into the given pose's image
  // space and penalize against `truth` on that pose's foreground.
  auto term = [&](const uvgeom::IUVMap& iuv, const Tensor& truth_chw, const GridD& pose_mask) {
    auto plan = std::make_shared<uvgeom::GatherPlan>(build_uv_gather(iuv, atlas));
    ad::Var coords = ad::uv_gather(c_out, std::move(plan));  // [N,2,H,W]
    ad::Var warped = ad::grid_sample(g.constant(src_batch), coords);
    const Tensor m = broadcast_plane(pose_mask, n, 3);
    Tensor truth = batched(truth_chw);
    truth.flat() *= m.flat();
    return ad::mean_abs(ad::sub(ad::mul_const(warped, m), g.constant(truth)));
  };

  return ad::add(term(batch.iuv_src, batch.src_image, batch.src_pose_mask),
                 term(batch.iuv_trg, batch.trg_image, batch.trg_pose_mask));
}

CoordNetTrainer::CoordNetTrainer(CoordNet& net, const uvgeom::MappingAtlas& atlas)
    : net_(net),
      atlas_(atlas),
      adam_(net.config().lr, net.config().beta1, net.config().beta2) {}

CoordStepStats CoordNetTrainer::step(const CoordBatch& batch) {
  nn::ParamRefs params = net_.parameters();
  nn::zero_grad(params);

  ad::Graph g;
  ad::Var input = g.constant(CoordNet::pack_input(batch.fields.combined));
  ad::Var c_out = net_.forward(g, input);
  ad::Var lc = loss_coord(c_out, batch.fields.base, batch.fields.mirrored,
                          net_.config().lambda_mirrored);
  ad::Var lr = loss_rgb(c_out, batch, atlas_);
  ad::Var total = ad::add(lc, lr);

  CoordStepStats stats;
  stats.l_coord = lc.value()[0];
  stats.l_rgb = lr.value()[0];
  stats.l_total = total.value()[0];
  if (!std::isfinite(stats.l_total))
    throw NumericError("coordnet training: non-finite loss (L_coord=" +
                       std::to_string(stats.l_coord) +
                       ", L_rgb=" + std::to_string(stats.l_rgb) + ")");
  g.backward(total);
  adam_.step(params);
  return stats;
}

}  // namespace posewarp::coordnet
