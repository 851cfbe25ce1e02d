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

#include "oracles.hpp"
#include "posewarp/coordnet.hpp"
#include "posewarp/data_io.hpp"

using namespace posewarp;
using namespace posewarp::coordnet;
using namespace posewarp::uvgeom;
namespace ad = posewarp::ad;

namespace {

CoordNetConfig small_config() {
  CoordNetConfig cfg;
  cfg.base_channels = 8;
  cfg.depth = 2;
  cfg.uv_height = 16;
  cfg.uv_width = 16;
  cfg.seed = 3;
  return cfg;
}

// Scalar-loop reference for the masked coordinate loss.
double loss_coord_reference(const Tensor& c_out, const CoordField& base,
                            const CoordField& mirrored, double lambda) {
  double sb = 0, sm = 0;
  const int n = c_out.dim(0);
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < base.height(); ++y)
      for (int x = 0; x < base.width(); ++x) {
        if (base.mask(y, x) == 1.0) {
          sb += std::abs(c_out.at(i, 0, y, x) - base.x(y, x));
          sb += std::abs(c_out.at(i, 1, y, x) - base.y(y, x));
        }
        if (mirrored.mask(y, x) == 1.0) {
          sm += std::abs(c_out.at(i, 0, y, x) - mirrored.x(y, x));
          sm += std::abs(c_out.at(i, 1, y, x) - mirrored.y(y, x));
        }
      }
  const double total = static_cast<double>(c_out.numel());
  return sb / total + lambda * sm / total;
}

CoordField random_field(int h, int w, Rng& rng, double fill) {
  CoordField f = CoordField::invalid(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (rng.uniform() < fill) {
        f.mask(y, x) = 1.0;
        f.x(y, x) = rng.uniform(-1, 1);
        f.y(y, x) = rng.uniform(-1, 1);
      }
  return f;
}

}  // namespace

TEST_CASE("zero-weight network produces a constant field inside the tanh bound") {
  CoordNetConfig cfg = small_config();
  CoordNet net(cfg);
  for (nn::Parameter* p : net.parameters()) p->value.flat().setZero();

  CoordField combined = random_field(16, 16, *(new Rng(1)), 0.5);
  CoordField out = net.complete(combined);
  CHECK(out.x.abs().maxCoeff() == 0.0);  // tanh(0)
  CHECK(out.y.abs().maxCoeff() == 0.0);
  CHECK((out.mask == 1.0).all());
}

TEST_CASE("outputs stay in [-1,1] and runs are deterministic") {
  CoordNetConfig cfg = small_config();
  CoordNet net(cfg);
  Rng rng(2);
  CoordField combined = random_field(16, 16, rng, 0.6);
  CoordField a = net.complete(combined);
  CoordField b = net.complete(combined);
  CHECK(a.x.abs().maxCoeff() <= 1.0);
  CHECK(a.y.abs().maxCoeff() <= 1.0);
  CHECK((a.x - b.x).abs().maxCoeff() == 0.0);
}

TEST_CASE("resolution mismatch is a validation error") {
  CoordNetConfig cfg = small_config();
  CoordNet net(cfg);
  CoordField wrong = CoordField::invalid(32, 32);
  CHECK_THROWS_AS(net.complete(wrong), ValidationError);
}

TEST_CASE("loss_coord is zero at its fixed point") {
  Rng rng(4);
  CoordField base = random_field(8, 8, rng, 0.5);
  CoordField mirrored = CoordField::invalid(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (base.mask(y, x) == 0.0 && rng.uniform() < 0.5) {
        mirrored.mask(y, x) = 1.0;
        mirrored.x(y, x) = rng.uniform(-1, 1);
        mirrored.y(y, x) = rng.uniform(-1, 1);
      }
  Tensor c_out({1, 2, 8, 8});
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      if (base.mask(y, x) == 1.0) {
        c_out.at(0, 0, y, x) = base.x(y, x);
        c_out.at(0, 1, y, x) = base.y(y, x);
      } else if (mirrored.mask(y, x) == 1.0) {
        c_out.at(0, 0, y, x) = mirrored.x(y, x);
        c_out.at(0, 1, y, x) = mirrored.y(y, x);
      }
    }
  ad::Graph g;
  ad::Var loss = loss_coord(g.leaf(c_out), base, mirrored, 0.5);
  CHECK(loss.value()[0] == 0.0);
}

TEST_CASE("loss_coord: constant offset with full base mask is the offset") {
  const int s = 8;
  CoordField base = CoordField::invalid(s, s);
  Rng rng(5);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      base.mask(y, x) = 1.0;
      base.x(y, x) = rng.uniform(-0.8, 0.8);
      base.y(y, x) = rng.uniform(-0.8, 0.8);
    }
  CoordField mirrored = CoordField::invalid(s, s);
  Tensor c_out({1, 2, s, s});
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      c_out.at(0, 0, y, x) = base.x(y, x) + 0.1;
      c_out.at(0, 1, y, x) = base.y(y, x) + 0.1;
    }
  ad::Graph g;
  ad::Var loss = loss_coord(g.leaf(c_out), base, mirrored, 0.5);
  CHECK(loss.value()[0] == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("loss_coord matches the scalar-loop reference on random tensors") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    CoordField base = random_field(8, 8, rng, 0.4);
    CoordField mirrored = CoordField::invalid(8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (base.mask(y, x) == 0.0 && rng.uniform() < 0.4) {
          mirrored.mask(y, x) = 1.0;
          mirrored.x(y, x) = rng.uniform(-1, 1);
          mirrored.y(y, x) = rng.uniform(-1, 1);
        }
    Tensor c_out = Tensor::random_uniform({2, 2, 8, 8}, rng, -1, 1);
    ad::Graph g;
    ad::Var loss = loss_coord(g.leaf(c_out), base, mirrored, 0.5);
    CHECK(loss.value()[0] ==
          doctest::Approx(loss_coord_reference(c_out, base, mirrored, 0.5)).epsilon(1e-7));
  }
}

TEST_CASE("loss_coord ignores values outside both masks") {
  Rng rng(7);
  CoordField base = random_field(8, 8, rng, 0.4);
  CoordField mirrored = CoordField::invalid(8, 8);
  Tensor a = Tensor::random_uniform({1, 2, 8, 8}, rng, -1, 1);
  Tensor b = a;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (base.mask(y, x) == 0.0) {
        b.at(0, 0, y, x) = rng.uniform(-1, 1);
        b.at(0, 1, y, x) = rng.uniform(-1, 1);
      }
  ad::Graph g;
  double la = loss_coord(g.leaf(a), base, mirrored, 0.5).value()[0];
  double lb = loss_coord(g.leaf(b), base, mirrored, 0.5).value()[0];
  CHECK(la == lb);
}

TEST_CASE("loss_coord rejects overlapping masks") {
  CoordField base = CoordField::invalid(4, 4);
  CoordField mirrored = CoordField::invalid(4, 4);
  base.mask(1, 1) = 1.0;
  base.x(1, 1) = 0.0;
  base.y(1, 1) = 0.0;
  mirrored.mask(1, 1) = 1.0;
  mirrored.x(1, 1) = 0.5;
  mirrored.y(1, 1) = 0.5;
  Tensor c_out({1, 2, 4, 4});
  ad::Graph g;
  CHECK_THROWS_AS(loss_coord(g.leaf(c_out), base, mirrored, 0.5), ValidationError);
}

namespace {

// Full-coverage batch on a bijective chart: every image pixel is foreground
// and maps 1:1 onto part 1's chart.
CoordBatch bijective_batch(const MappingAtlas& atlas, Rng& rng, double trg_offset) {
  const Chart& chart = atlas.chart(1);
  const int h = chart.h, w = chart.w;
  IUVMap iuv = IUVMap::background(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      iuv.part(y, x) = 1;
      iuv.u(y, x) = snap_uv(static_cast<double>(x) / (w - 1));
      iuv.v(y, x) = snap_uv(static_cast<double>(y) / (h - 1));
    }
  CoordBatch b;
  b.iuv_src = iuv;
  b.iuv_trg = iuv;
  b.src_image = Tensor::random_uniform({3, h, w}, rng, -0.6, 0.6);
  b.trg_image = b.src_image;
  b.trg_image.flat() += trg_offset;
  b.src_pose_mask = GridD::Ones(h, w);
  b.trg_pose_mask = GridD::Ones(h, w);
  b.fields = symmetry_inputs(iuv, atlas);
  return b;
}

// Dense field equal to the base scatter (zeros on never-touched texels).
Tensor dense_from_base(const CoordField& base) {
  Tensor t({1, 2, base.height(), base.width()});
  for (int y = 0; y < base.height(); ++y)
    for (int x = 0; x < base.width(); ++x)
      if (base.mask(y, x) == 1.0) {
        t.at(0, 0, y, x) = base.x(y, x);
        t.at(0, 1, y, x) = base.y(y, x);
      }
  return t;
}

}  // namespace

TEST_CASE("loss_rgb vanishes for a perfect field on an identity pair") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  Rng rng(8);
  CoordBatch b = bijective_batch(atlas, rng, 0.0);
  Tensor dense = dense_from_base(b.fields.base);
  ad::Graph g;
  ad::Var loss = loss_rgb(g.leaf(dense), b, atlas);
  CHECK(loss.value()[0] < 1e-9);
}

TEST_CASE("loss_rgb: constant target offset shows up as the second term") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  Rng rng(9);
  CoordBatch b = bijective_batch(atlas, rng, 0.2);
  Tensor dense = dense_from_base(b.fields.base);
  ad::Graph g;
  ad::Var loss = loss_rgb(g.leaf(dense), b, atlas);
  CHECK(loss.value()[0] == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("loss_rgb gradient w.r.t. the field matches finite differences") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 16});
  Rng rng(10);
  IUVMap iuv = IUVMap::background(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (rng.uniform() < 0.8) {
        iuv.part(y, x) = static_cast<int>(rng.uniform_int(1, 2));
        iuv.u(y, x) = snap_uv(rng.uniform(0.1, 0.9));
        iuv.v(y, x) = snap_uv(rng.uniform(0.1, 0.9));
      }
  CoordBatch b;
  b.iuv_src = iuv;
  b.iuv_trg = iuv;
  b.src_image = Tensor::random_uniform({3, 8, 8}, rng, -1, 1);
  b.trg_image = Tensor::random_uniform({3, 8, 8}, rng, -1, 1);
  b.src_pose_mask = iuv.foreground_mask();
  b.trg_pose_mask = iuv.foreground_mask();
  b.fields = symmetry_inputs(iuv, atlas);

  Tensor dense = Tensor::random_uniform({1, 2, 16, 16}, rng, -0.9, 0.9);
  double err = oracles::fd_max_rel_error(
      {dense}, [&](ad::Graph&, std::vector<ad::Var>& v) { return loss_rgb(v[0], b, atlas); });
  CHECK(err < 1e-3);
}

TEST_CASE("training step: total is exactly the sum and zero-lr leaves weights fixed") {
  data_io::FixturePair fx = data_io::make_fixture(42, 0.5);
  CoordNetConfig cfg;
  cfg.base_channels = 8;
  cfg.depth = 3;
  cfg.uv_height = 32;
  cfg.uv_width = 32;
  cfg.seed = 11;
  CoordBatch batch = make_coord_batch(fx);

  {
    CoordNet net(cfg);
    CoordNetTrainer trainer(net, fx.atlas);
    CoordStepStats s = trainer.step(batch);
    CHECK(s.l_total == s.l_coord + s.l_rgb);
  }
  {
    CoordNetConfig frozen = cfg;
    frozen.lr = 0.0;
    CoordNet net(frozen);
    std::vector<Tensor> before;
    for (nn::Parameter* p : net.parameters()) before.push_back(p->value);
    CoordNetTrainer trainer(net, fx.atlas);
    trainer.step(batch);
    std::size_t i = 0;
    for (nn::Parameter* p : net.parameters())
      CHECK((p->value.flat() - before[i++].flat()).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("repeated single-sample steps trend the loss down") {
  data_io::FixturePair fx = data_io::make_fixture(77, 0.5);
  CoordNetConfig cfg;
  cfg.base_channels = 8;
  cfg.depth = 3;
  cfg.uv_height = 32;
  cfg.uv_width = 32;
  cfg.seed = 12;
  cfg.lr = 1e-3;
  CoordNet net(cfg);
  CoordNetTrainer trainer(net, fx.atlas);
  CoordBatch batch = make_coord_batch(fx);

  double first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    CoordStepStats s = trainer.step(batch);
    if (i == 0) first = s.l_total;
    last = s.l_total;
  }
  CHECK(last < first);
}

TEST_CASE("checkpoints restore the exact forward behavior") {
  CoordNetConfig cfg = small_config();
  CoordNet net(cfg);
  Rng rng(13);
  CoordField combined = random_field(16, 16, rng, 0.5);
  CoordField before = net.complete(combined);

  const std::string path =
      (std::filesystem::temp_directory_path() / "coordnet_test.pwsckpt").string();
  net.save(path);
  auto restored = CoordNet::load(path);
  CoordField after = restored->complete(combined);
  CHECK((before.x - after.x).abs().maxCoeff() == 0.0);
  CHECK((before.y - after.y).abs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}
