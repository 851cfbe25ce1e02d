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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "oracles.hpp"
#include "posewarp/coordnet.hpp"
#include "posewarp/data_io.hpp"
#include "posewarp/posegen.hpp"

using namespace posewarp;
using namespace posewarp::posegen;
using namespace posewarp::uvgeom;
namespace ad = posewarp::ad;

namespace {

GeneratorConfig desk_config() {
  GeneratorConfig cfg;
  cfg.output_resolution = 64;
  cfg.base_resolution = 4;
  cfg.channel_schedule = {48, 32, 24, 16, 12};
  cfg.fpn_channels = 12;
  cfg.seed = 21;
  return cfg;
}

GenInputs fixture_inputs(const GeneratorConfig& cfg, const data_io::FixturePair& fx) {
  return build_gen_inputs(cfg, fx.src_image, fx.trg_iuv, fx.trg_fg, fx.gt_tcoord, fx.atlas);
}

}  // namespace

TEST_CASE("pose encoding is deterministic and distinguishes poses") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  data_io::FixturePair fx = data_io::make_fixture(3, 0.3);

  Tensor pose = iuv_pose_tensor(fx.trg_iuv, fx.atlas.part_count);
  ad::Graph g;
  ad::Var a = gen.encode_pose(g, g.constant(pose));
  ad::Var b = gen.encode_pose(g, g.constant(pose));
  CHECK(a.value().shape() == std::vector<int>{1, 48, 4, 4});
  CHECK((a.value().flat() == b.value().flat()).all());

  Tensor blank = iuv_pose_tensor(IUVMap::background(64, 64), fx.atlas.part_count);
  ad::Var c = gen.encode_pose(g, g.constant(blank));
  CHECK((a.value().flat() - c.value().flat()).square().sum() > 0.0);
}

TEST_CASE("pose features land at 16x16 when configured at a larger scale") {
  GeneratorConfig cfg;
  cfg.output_resolution = 128;
  cfg.base_resolution = 16;
  cfg.channel_schedule = {24, 16, 12, 8};
  cfg.fpn_channels = 8;
  cfg.seed = 4;
  Generator gen(cfg);
  Tensor pose({1, 3, 128, 128});
  ad::Graph g;
  ad::Var f = gen.encode_pose(g, g.constant(pose));
  CHECK(f.value().shape() == std::vector<int>{1, 24, 16, 16});
}

TEST_CASE("source encoding yields one level per style block with doubling sizes") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  Rng rng(5);
  Tensor img = Tensor::random_uniform({1, 3, 64, 64}, rng, -1, 1);
  ad::Graph g;
  std::vector<ad::Var> levels = gen.encode_source(g, g.constant(img));
  REQUIRE(levels.size() == 4);
  const int want_res[4] = {8, 16, 32, 64};
  for (int l = 0; l < 4; ++l) {
    CHECK(levels[static_cast<std::size_t>(l)].value().dim(2) == want_res[l]);
    CHECK(levels[static_cast<std::size_t>(l)].value().dim(3) == want_res[l]);
  }
  std::vector<ad::Var> again = gen.encode_source(g, g.constant(img));
  for (int l = 0; l < 4; ++l)
    CHECK((levels[static_cast<std::size_t>(l)].value().flat() ==
           again[static_cast<std::size_t>(l)].value().flat())
              .all());
}

TEST_CASE("identity warp reproduces source features, invalid warp zeroes them") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  Rng rng(6);
  Tensor img = Tensor::random_uniform({1, 3, 64, 64}, rng, -1, 1);
  ad::Graph g;
  std::vector<ad::Var> src = gen.encode_source(g, g.constant(img));

  CoordField identity = meshgrid_coords(64, 64);
  std::vector<Tensor> id_coords;
  for (int l = 0; l < 4; ++l) {
    const int r = cfg.resolution_at(l);
    CoordField f = resize_coord_field(identity, r, r);
    Tensor t({1, 2, r, r});
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        t.at(0, 0, y, x) = f.x(y, x);
        t.at(0, 1, y, x) = f.y(y, x);
      }
    id_coords.push_back(t);
  }
  std::vector<ad::Var> warped = gen.warp_levels(g, src, id_coords);
  for (int l = 0; l < 4; ++l)
    CHECK((warped[static_cast<std::size_t>(l)].value().flat() -
           src[static_cast<std::size_t>(l)].value().flat())
              .abs()
              .maxCoeff() < 1e-9);

  std::vector<Tensor> invalid_coords;
  for (int l = 0; l < 4; ++l) {
    const int r = cfg.resolution_at(l);
    invalid_coords.push_back(Tensor::full({1, 2, r, r}, kCoordSentinel));
  }
  std::vector<ad::Var> zeroed = gen.warp_levels(g, src, invalid_coords);
  for (int l = 0; l < 4; ++l)
    CHECK(zeroed[static_cast<std::size_t>(l)].value().max_abs() == 0.0);
}

TEST_CASE("with nothing warped, fusion depends only on the mask channel") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  Rng rng(7);
  Tensor img_a = Tensor::random_uniform({1, 3, 64, 64}, rng, -1, 1);
  Tensor img_b = Tensor::random_uniform({1, 3, 64, 64}, rng, -1, 1);

  std::vector<Tensor> invalid_coords, masks;
  for (int l = 0; l < 4; ++l) {
    const int r = cfg.resolution_at(l);
    invalid_coords.push_back(Tensor::full({1, 2, r, r}, kCoordSentinel));
    Tensor m({1, 1, r, r});
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) m.at(0, 0, y, x) = (x + y) % 2;
    masks.push_back(m);
  }
  ad::Graph g;
  auto run = [&](const Tensor& img) {
    std::vector<ad::Var> src = gen.encode_source(g, g.constant(img));
    std::vector<ad::Var> warped = gen.warp_levels(g, src, invalid_coords);
    return gen.fuse(g, warped, masks);
  };
  std::vector<ad::Var> fa = run(img_a);
  std::vector<ad::Var> fb = run(img_b);
  for (int l = 0; l < 4; ++l)
    CHECK((fa[static_cast<std::size_t>(l)].value().flat() ==
           fb[static_cast<std::size_t>(l)].value().flat())
              .all());
}

TEST_CASE("pixel-shuffle warp permutes features exactly") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  Rng rng(8);
  Tensor img = Tensor::random_uniform({1, 3, 64, 64}, rng, -1, 1);
  ad::Graph g;
  std::vector<ad::Var> src = gen.encode_source(g, g.constant(img));

  // shuffle only the coarsest level; identity elsewhere
  const int r = cfg.resolution_at(0);
  std::vector<int> perm(static_cast<std::size_t>(r) * r);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  for (std::size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

  Tensor coords({1, 2, r, r});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      const int source = perm[static_cast<std::size_t>(y) * r + x];
      coords.at(0, 0, y, x) = normalize_coord(source % r, r);
      coords.at(0, 1, y, x) = normalize_coord(source / r, r);
    }
  ad::Var warped = ad::grid_sample(src[0], g.constant(coords));
  for (int c = 0; c < src[0].value().dim(1); ++c)
    for (int y = 0; y < r; ++y)
      for (int x = 0; x < r; ++x) {
        const int source = perm[static_cast<std::size_t>(y) * r + x];
        CHECK(warped.value().at(0, c, y, x) ==
              doctest::Approx(src[0].value().at(0, c, source / r, source % r)).epsilon(1e-12));
      }
}

TEST_CASE("horizontal-shift warp equals shifted features on the interior") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  Rng rng(9);
  Tensor img = Tensor::random_uniform({1, 3, 64, 64}, rng, -1, 1);
  ad::Graph g;
  std::vector<ad::Var> src = gen.encode_source(g, g.constant(img));

  const int r = cfg.resolution_at(1);
  const int shift = 3;
  Tensor coords({1, 2, r, r});
  for (int y = 0; y < r; ++y)
    for (int x = 0; x < r; ++x) {
      coords.at(0, 0, y, x) = normalize_coord(x - shift, r);  // sample from the left
      coords.at(0, 1, y, x) = normalize_coord(y, r);
    }
  ad::Var warped = ad::grid_sample(src[1], g.constant(coords));
  for (int c = 0; c < src[1].value().dim(1); ++c)
    for (int y = 0; y < r; ++y)
      for (int x = shift; x < r; ++x)
        CHECK(warped.value().at(0, c, y, x) ==
              doctest::Approx(src[1].value().at(0, c, y, x - shift)).epsilon(1e-12));
}

TEST_CASE("affine heads start neutral over 100 seeds and stay independent") {
  Rng data_rng(10);
  Tensor f_app = Tensor::random_uniform({2, 12, 8, 8}, data_rng, -1, 1);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    AffineParamsNet apn("apn", 12, 24, rng);
    ad::Graph g;
    auto [alpha, beta] = apn.forward(g, g.constant(f_app));
    CHECK(alpha.value().shape() == std::vector<int>{2, 24, 8, 8});
    const double mean_alpha = alpha.value().flat().mean();
    const double mean_abs_beta = beta.value().flat().abs().mean();
    CHECK(mean_alpha >= 0.9);
    CHECK(mean_alpha <= 1.1);
    CHECK(mean_abs_beta < 0.1);
  }

  // each modulated convolution owns its own parameter heads
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  nn::ParamRefs params = gen.parameters();
  std::set<std::string> names;
  std::set<const void*> addrs;
  for (nn::Parameter* p : params) {
    CHECK(names.insert(p->name).second);
    CHECK(addrs.insert(p).second);
  }
  CHECK(names.count("gen.block0.apn1.alpha2.w") == 1);
  CHECK(names.count("gen.block3.apn2.alpha2.w") == 1);
}

TEST_CASE("modulated conv normalization hits zero mean unit std before noise and bias") {
  Rng rng(11);
  ModulatedConv mc("mc", 6, 8, 8, rng);
  Tensor x = Tensor::random_uniform({2, 6, 8, 8}, rng, -1, 1);
  Tensor alpha = Tensor::random_uniform({2, 6, 8, 8}, rng, 0.5, 1.5);
  Tensor beta = Tensor::random_uniform({2, 6, 8, 8}, rng, -0.3, 0.3);

  ad::Graph g;
  ad::Var modulated = ad::add(ad::mul(g.constant(x), g.constant(alpha)), g.constant(beta));
  ad::Var conv = ad::conv2d(modulated, g.constant(mc.w.value), ad::Var{}, 1, 1);
  ad::Var normed = ad::normalize_unit(conv, 1e-8);

  const Eigen::Index per = normed.value().numel() / 2;
  for (int n = 0; n < 2; ++n) {
    auto seg = normed.value().flat().segment(n * per, per);
    const double mu = seg.sum() / static_cast<double>(per);
    const double sd = std::sqrt((seg - mu).square().sum() / static_cast<double>(per));
    CHECK(std::abs(mu) < 1e-5);
    CHECK(std::abs(sd - 1.0) < 1e-4);
  }
}

TEST_CASE("neutral modulation equals the unmodulated path exactly") {
  Rng rng(12);
  ModulatedConv mc("mc", 6, 8, 8, rng);
  mc.noise_strength.value[0] = 0.37;
  mc.bias.value = Tensor::random_normal({8}, rng, 0.1);
  Tensor x = Tensor::random_uniform({2, 6, 8, 8}, rng, -1, 1);
  Tensor noise = mc.make_noise(2, NoiseMode::kFixed, nullptr);

  ad::Graph g;
  ad::Var ones = g.constant(Tensor::ones({2, 6, 8, 8}));
  ad::Var zeros = g.constant(Tensor::zeros({2, 6, 8, 8}));
  ad::Var modulated = mc.forward_spatial(g, g.constant(x), ones, zeros, noise);

  // plain path with the same weights and the same noise realization
  ad::Var plain = ad::conv2d(g.constant(x), g.constant(mc.w.value), ad::Var{}, 1, 1);
  plain = ad::normalize_unit(plain, 1e-8);
  plain = ad::add_noise(plain, g.constant(mc.noise_strength.value), noise);
  plain = ad::add_channel_bias(plain, g.constant(mc.bias.value));

  CHECK((modulated.value().flat() == plain.value().flat()).all());
}

TEST_CASE("spatially constant modulation matches weight modulation without demodulation") {
  Rng rng(13);
  Tensor x = Tensor::random_uniform({2, 5, 6, 6}, rng, -1, 1);
  Tensor w = Tensor::random_normal({7, 5, 3, 3}, rng, 0.3);
  Tensor style = Tensor::random_uniform({2, 5}, rng, 0.5, 1.5);

  // broadcast the style over space as alpha
  Tensor alpha({2, 5, 6, 6});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 5; ++c)
      for (int y = 0; y < 6; ++y)
        for (int x2 = 0; x2 < 6; ++x2) alpha.at(n, c, y, x2) = style.at(n, c);

  ad::Graph g;
  ad::Var feat_route =
      ad::conv2d(ad::mul(g.constant(x), g.constant(alpha)), g.constant(w), ad::Var{}, 1, 1);
  ad::Var weight_route =
      ad::conv2d_modulated(g.constant(x), g.constant(w), g.constant(style), false, ad::Var{});
  CHECK((feat_route.value().flat() - weight_route.value().flat()).abs().maxCoeff() < 1e-5);
}

TEST_CASE("spatial modulation gradients w.r.t. alpha and beta match finite differences") {
  Rng rng(14);
  ModulatedConv mc("mc", 4, 6, 8, rng);
  Tensor x = Tensor::random_uniform({1, 4, 8, 8}, rng, -1, 1);
  Tensor alpha = Tensor::random_uniform({1, 4, 8, 8}, rng, 0.5, 1.5);
  Tensor beta = Tensor::random_uniform({1, 4, 8, 8}, rng, -0.3, 0.3);
  Tensor noise = mc.make_noise(1, NoiseMode::kFixed, nullptr);
  mc.noise_strength.value[0] = 0.2;

  double err = oracles::fd_max_rel_error(
      {alpha, beta}, [&](ad::Graph& g, std::vector<ad::Var>& v) {
        ad::Var y = mc.forward_spatial(g, g.constant(x), v[0], v[1], noise);
        Tensor wgt(y.value().shape());
        for (Eigen::Index i = 0; i < wgt.numel(); ++i) wgt[i] = 0.05 * ((i % 11) - 5.0);
        return ad::mean(ad::mul_const(y, wgt));
      });
  CHECK(err < 1e-3);
}

TEST_CASE("generator output has the right shape and zero-noise runs are bit-identical") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  data_io::FixturePair fx = data_io::make_fixture(15, 0.4);
  GenInputs in = fixture_inputs(cfg, fx);

  Tensor a = gen.generate(in, NoiseMode::kZero);
  Tensor b = gen.generate(in, NoiseMode::kZero);
  CHECK(a.shape() == std::vector<int>{1, 3, 64, 64});
  CHECK((a.flat() == b.flat()).all());
  CHECK(a.flat().abs().maxCoeff() <= 1.0);

  Tensor c = gen.generate(in, NoiseMode::kFixed);
  Tensor d = gen.generate(in, NoiseMode::kFixed);
  CHECK((c.flat() == d.flat()).all());

  // noise strengths start at zero; give them weight so noise can show up
  for (nn::Parameter* p : gen.parameters())
    if (p->name.find("noise_strength") != std::string::npos) p->value.flat().setConstant(0.5);
  Rng r1(1), r2(2);
  Tensor e = gen.generate(in, NoiseMode::kRandom, &r1);
  Tensor f = gen.generate(in, NoiseMode::kRandom, &r2);
  CHECK((e.flat() != f.flat()).any());
}

TEST_CASE("every appearance/modulation variant is constructible and runs") {
  data_io::FixturePair fx = data_io::make_fixture(16, 0.4);
  for (AppearanceSource source : {AppearanceSource::kIncompleteUv, AppearanceSource::kCompleteUv,
                                  AppearanceSource::kSourceImage}) {
    for (ModulationMode mode : {ModulationMode::kNonSpatial, ModulationMode::kSpatial}) {
      GeneratorConfig cfg = desk_config();
      cfg.appearance_source = source;
      cfg.modulation_mode = mode;
      Generator gen(cfg);

      uvgeom::CoordField field;
      if (source == AppearanceSource::kSourceImage) {
        field = fx.gt_tcoord;
      } else {
        // partial field straight from the pose
        field = coordnet::symmetry_inputs(fx.src_iuv, fx.atlas).combined;
        if (source == AppearanceSource::kCompleteUv) {
          // densify: fill holes with zeros-as-coords for the variant smoke run
          for (int y = 0; y < field.height(); ++y)
            for (int x = 0; x < field.width(); ++x)
              if (field.mask(y, x) == 0.0) {
                field.mask(y, x) = 1.0;
                field.x(y, x) = 0.0;
                field.y(y, x) = 0.0;
              }
        }
      }
      GenInputs in =
          build_gen_inputs(cfg, fx.src_image, fx.trg_iuv, fx.trg_fg, field, fx.atlas);
      Tensor out = gen.generate(in, NoiseMode::kZero);
      CHECK(out.all_finite());
    }
  }
}

TEST_CASE("discriminator scores one logit per sample and reacts to the condition") {
  GeneratorConfig cfg = desk_config();
  Discriminator disc(cfg);
  data_io::FixturePair fx = data_io::make_fixture(17, 0.4);
  Rng rng(18);
  Tensor img = Tensor::random_uniform({2, 3, 64, 64}, rng, -1, 1);

  Tensor cond_a({2, 3, 64, 64});
  Tensor one = iuv_condition_tensor(fx.trg_iuv);
  std::copy(one.data(), one.data() + one.numel(), cond_a.data());
  std::copy(one.data(), one.data() + one.numel(), cond_a.data() + one.numel());
  Tensor cond_b = Tensor::zeros({2, 3, 64, 64});

  ad::Graph g;
  ad::Var sa = disc.score(g, g.constant(img), cond_a);
  ad::Var sb = disc.score(g, g.constant(img), cond_b);
  CHECK(sa.value().shape() == std::vector<int>{2, 1});
  CHECK((sa.value().flat() != sb.value().flat()).any());
}

TEST_CASE("checkpoint round trip preserves generator outputs bit-exactly") {
  GeneratorConfig cfg = desk_config();
  Generator gen(cfg);
  data_io::FixturePair fx = data_io::make_fixture(19, 0.4);
  GenInputs in = fixture_inputs(cfg, fx);
  Tensor before = gen.generate(in, NoiseMode::kFixed);

  const std::string path =
      (std::filesystem::temp_directory_path() / "gen_test.pwsckpt").string();
  gen.save(path);
  auto restored = Generator::load(path);
  Tensor after = restored->generate(in, NoiseMode::kFixed);
  CHECK((before.flat() == after.flat()).all());
  std::remove(path.c_str());
}
