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

#include "oracles.hpp"
#include "posewarp/autodiff.hpp"
#include "posewarp/uvgeom.hpp"

using namespace posewarp;
using namespace posewarp::uvgeom;

namespace {

IUVMap random_iuv(int h, int w, const MappingAtlas& atlas, Rng& rng, double fg_prob = 0.7) {
  IUVMap iuv = IUVMap::background(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (rng.uniform() >= fg_prob) continue;
      iuv.part(y, x) = static_cast<int>(rng.uniform_int(1, atlas.part_count));
      iuv.u(y, x) = snap_uv(rng.uniform());
      iuv.v(y, x) = snap_uv(rng.uniform());
    }
  return iuv;
}

// IUV that maps a hxw image bijectively onto part `p`'s chart; exact on the
// uv grid when the chart sides minus one divide 65535.
IUVMap bijective_iuv(int h, int w, int p) {
  IUVMap iuv = IUVMap::background(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      iuv.part(y, x) = p;
      iuv.u(y, x) = snap_uv(static_cast<double>(x) / (w - 1));
      iuv.v(y, x) = snap_uv(static_cast<double>(y) / (h - 1));
    }
  return iuv;
}

}  // namespace

TEST_CASE("synthetic atlas: two parts") {
  MappingAtlas atlas = build_synthetic_atlas(2, {32, 32});
  CHECK(atlas.part_count == 2);
  CHECK(atlas.charts.size() == 2);
  CHECK(atlas.paired_part(1) == 2);
  CHECK(atlas.paired_part(2) == 1);
  atlas.validate();
}

TEST_CASE("synthetic atlas: 24-part layout passes the overlap checker") {
  MappingAtlas atlas = build_synthetic_atlas(24, {256, 256});
  CHECK(atlas.charts.size() == 24);
  atlas.validate();  // involution, chart overlap, texel membership
}

TEST_CASE("synthetic atlas: capacity error when charts cannot fit") {
  CHECK_THROWS_AS(build_synthetic_atlas(3, {4, 4}), ValidationError);
}

TEST_CASE("image_to_uv: bijective chart recovers the inverse chart map") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  const Chart& chart = atlas.chart(1);
  REQUIRE(chart.w == 16);
  REQUIRE(chart.h == 16);

  IUVMap iuv = bijective_iuv(16, 16, 1);
  CoordField mesh = meshgrid_coords(16, 16);
  CoordField uv = image_to_uv(iuv, atlas, mesh);

  for (int ty = 0; ty < atlas.uv_height; ++ty)
    for (int tx = 0; tx < atlas.uv_width; ++tx) {
      const bool in_chart = tx >= chart.x0 && tx < chart.x0 + chart.w && ty >= chart.y0 &&
                            ty < chart.y0 + chart.h;
      CHECK(uv.mask(ty, tx) == (in_chart ? 1.0 : 0.0));
      if (in_chart) {
        CHECK(uv.x(ty, tx) ==
              doctest::Approx(normalize_coord(tx - chart.x0, 16)).epsilon(1e-9));
        CHECK(uv.y(ty, tx) ==
              doctest::Approx(normalize_coord(ty - chart.y0, 16)).epsilon(1e-9));
      }
    }
}

TEST_CASE("image_to_uv: all-background input leaves the mask empty") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  IUVMap iuv = IUVMap::background(8, 8);
  CoordField uv = image_to_uv(iuv, atlas, meshgrid_coords(8, 8));
  CHECK(uv.mask.sum() == 0.0);
}

TEST_CASE("image_to_uv: random instances match the per-pixel scatter oracle") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  Rng rng(101);
  for (int trial = 0; trial < 25; ++trial) {
    IUVMap iuv = random_iuv(8, 8, atlas, rng);
    Tensor payload = Tensor::random_normal({3, 8, 8}, rng);
    UvScatterResult got = image_to_uv(iuv, atlas, payload);
    UvScatterResult want = oracles::image_to_uv_reference(iuv, atlas, payload);
    CHECK((got.mask - want.mask).abs().maxCoeff() == 0.0);
    CHECK((got.payload.flat() - want.payload.flat()).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("mirror_iuv: pairing sends part 1 to part 2 at mirrored columns") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  IUVMap iuv = IUVMap::background(4, 8);
  iuv.part(1, 2) = 1;
  iuv.u(1, 2) = snap_uv(0.25);
  iuv.v(1, 2) = snap_uv(0.5);

  IUVMap m = mirror_iuv(iuv, atlas);
  CHECK(m.part(1, 8 - 1 - 2) == 2);
  // mirrored u is 1-u on the 16-bit uv grid
  const double expect_u =
      static_cast<double>(kUvQuantum - std::lround(iuv.u(1, 2) * kUvQuantum)) / kUvQuantum;
  CHECK(m.u(1, 5) == expect_u);
  CHECK(m.v(1, 5) == iuv.v(1, 2));
}

TEST_CASE("mirror_iuv: symmetric midline-only pose is a fixed point") {
  MappingAtlas atlas = build_synthetic_atlas(3, {32, 32});
  REQUIRE(atlas.paired_part(3) == 3);
  const int w = 16;
  IUVMap iuv = IUVMap::background(6, w);
  for (int x = 0; x < w; ++x) {
    iuv.part(2, x) = 3;
    iuv.u(2, x) = snap_uv(static_cast<double>(x) / (w - 1));
    iuv.v(2, x) = snap_uv(0.5);
  }
  IUVMap m = mirror_iuv(iuv, atlas);
  CHECK((m.part == iuv.part).all());
  CHECK((m.u - iuv.u).abs().maxCoeff() == 0.0);
  CHECK((m.v - iuv.v).abs().maxCoeff() == 0.0);
}

TEST_CASE("mirror_iuv: twice is the identity, exactly") {
  MappingAtlas atlas = build_synthetic_atlas(3, {32, 32});
  Rng rng(202);
  for (int trial = 0; trial < 20; ++trial) {
    IUVMap iuv = random_iuv(9, 12, atlas, rng);
    IUVMap mm = mirror_iuv(mirror_iuv(iuv, atlas), atlas);
    CHECK((mm.part == iuv.part).all());
    CHECK((mm.u - iuv.u).abs().maxCoeff() == 0.0);
    CHECK((mm.v - iuv.v).abs().maxCoeff() == 0.0);
  }
}

TEST_CASE("combine_symmetry: base dominance and hole filling") {
  const int s = 4;
  CoordField base = CoordField::invalid(s, s);
  CoordField mirrored = CoordField::invalid(s, s);
  Rng rng(303);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      base.mask(y, x) = 1.0;
      base.x(y, x) = rng.uniform(-1, 1);
      base.y(y, x) = rng.uniform(-1, 1);
      mirrored.mask(y, x) = 1.0;
      mirrored.x(y, x) = rng.uniform(-1, 1);
      mirrored.y(y, x) = rng.uniform(-1, 1);
    }

  CoordField all_base = combine_symmetry(base, mirrored);
  CHECK((all_base.x - base.x).abs().maxCoeff() == 0.0);
  CHECK((all_base.mask - base.mask).abs().maxCoeff() == 0.0);

  CoordField empty_base = CoordField::invalid(s, s);
  CoordField filled = combine_symmetry(empty_base, mirrored);
  CHECK((filled.x - mirrored.x).abs().maxCoeff() == 0.0);
  CHECK((filled.mask - mirrored.mask).abs().maxCoeff() == 0.0);
}

TEST_CASE("combine_symmetry: exhaustive per-texel mask algebra") {
  // one texel per (mb, mm) combination
  CoordField base = CoordField::invalid(2, 2);
  CoordField mirrored = CoordField::invalid(2, 2);
  Rng rng(304);
  int t = 0;
  for (int mb = 0; mb <= 1; ++mb)
    for (int mm = 0; mm <= 1; ++mm, ++t) {
      const int y = t / 2, x = t % 2;
      if (mb) {
        base.mask(y, x) = 1.0;
        base.x(y, x) = rng.uniform(-1, 1);
        base.y(y, x) = rng.uniform(-1, 1);
      }
      if (mm) {
        mirrored.mask(y, x) = 1.0;
        mirrored.x(y, x) = rng.uniform(-1, 1);
        mirrored.y(y, x) = rng.uniform(-1, 1);
      }
    }

  CoordField out = combine_symmetry(base, mirrored);
  t = 0;
  for (int mb = 0; mb <= 1; ++mb)
    for (int mm = 0; mm <= 1; ++mm, ++t) {
      const int y = t / 2, x = t % 2;
      const double mm_stripped = mm - mb * mm;
      CHECK((out.mask(y, x) == 0.0 || out.mask(y, x) == 1.0));
      CHECK(out.mask(y, x) == static_cast<double>(mb) + mm_stripped);
      CHECK(mb * mm_stripped == 0.0);
      if (mb) CHECK(out.x(y, x) == base.x(y, x));
      if (!mb && mm) CHECK(out.x(y, x) == mirrored.x(y, x));
    }
}

TEST_CASE("combine_symmetry: non-binary masks are rejected") {
  CoordField base = CoordField::invalid(2, 2);
  CoordField mirrored = CoordField::invalid(2, 2);
  base.mask(0, 0) = 0.5;
  base.x(0, 0) = 0.0;
  base.y(0, 0) = 0.0;
  CHECK_THROWS_AS(combine_symmetry(base, mirrored), ValidationError);
}

TEST_CASE("uv_to_image: scatter/gather round trip on a bijective chart") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  IUVMap iuv = bijective_iuv(16, 16, 1);
  CoordField mesh = meshgrid_coords(16, 16);
  CoordField uv = image_to_uv(iuv, atlas, mesh);
  CoordField back = uv_to_image(uv, iuv, atlas);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      REQUIRE(back.mask(y, x) == 1.0);
      CHECK(std::abs(back.x(y, x) - mesh.x(y, x)) < 1e-5);
      CHECK(std::abs(back.y(y, x) - mesh.y(y, x)) < 1e-5);
    }
}

TEST_CASE("uv_to_image: background pixels stay masked with sentinel coords") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  CoordField uv = CoordField::invalid(16, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) {
      uv.mask(y, x) = 1.0;
      uv.x(y, x) = 0.0;
      uv.y(y, x) = 0.0;
    }
  IUVMap iuv = IUVMap::background(4, 4);
  iuv.part(1, 1) = 1;  // single foreground pixel
  CoordField img = uv_to_image(uv, iuv, atlas);
  CHECK(img.mask(0, 0) == 0.0);
  CHECK(img.x(0, 0) == kCoordSentinel);
  CHECK(img.mask(1, 1) == 1.0);
}

TEST_CASE("uv_to_image: random instances match the per-pixel gather oracle") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  Rng rng(404);
  for (int trial = 0; trial < 25; ++trial) {
    CoordField uv = CoordField::invalid(16, 32);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 32; ++x)
        if (rng.uniform() < 0.8) {
          uv.mask(y, x) = 1.0;
          uv.x(y, x) = rng.uniform(-1, 1);
          uv.y(y, x) = rng.uniform(-1, 1);
        }
    IUVMap iuv = random_iuv(8, 8, atlas, rng);
    CoordField got = uv_to_image(uv, iuv, atlas);
    CoordField want = oracles::uv_to_image_reference(uv, iuv, atlas);
    CHECK((got.mask - want.mask).abs().maxCoeff() == 0.0);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (got.mask(y, x) == 1.0) {
          CHECK(std::abs(got.x(y, x) - want.x(y, x)) < 1e-6);
          CHECK(std::abs(got.y(y, x) - want.y(y, x)) < 1e-6);
        }
  }
}

TEST_CASE("bilinear_sample: exact pixel centers reproduce the source") {
  Rng rng(505);
  Tensor src = Tensor::random_normal({3, 5, 7}, rng);
  CoordField mesh = meshgrid_coords(5, 7);
  Tensor out = bilinear_sample(src, mesh);
  CHECK((out.flat() - src.flat()).abs().maxCoeff() < 1e-12);
}

TEST_CASE("bilinear_sample: midpoint of four pixels averages them") {
  Tensor src({1, 2, 2});
  src.at(0, 0, 0) = 0.0;
  src.at(0, 0, 1) = 0.0;
  src.at(0, 1, 0) = 1.0;
  src.at(0, 1, 1) = 1.0;
  CoordField c = CoordField::invalid(1, 1);
  c.mask(0, 0) = 1.0;
  c.x(0, 0) = 0.0;  // grid midpoint in a 2x2 image
  c.y(0, 0) = 0.0;
  Tensor out = bilinear_sample(src, c);
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.5));
}

TEST_CASE("bilinear_sample: masked-out coordinates produce zeros") {
  Rng rng(506);
  Tensor src = Tensor::random_normal({2, 4, 4}, rng);
  CoordField c = CoordField::invalid(3, 3);
  c.mask(1, 1) = 1.0;
  c.x(1, 1) = 0.1;
  c.y(1, 1) = -0.2;
  Tensor out = bilinear_sample(src, c);
  for (int ch = 0; ch < 2; ++ch) {
    CHECK(out.at(ch, 0, 0) == 0.0);
    CHECK(out.at(ch, 1, 1) != 0.0);
  }
}

TEST_CASE("grid_sample matches the brute-force reference on random inputs") {
  Rng rng(507);
  for (int trial = 0; trial < 30; ++trial) {
    const int sh = 2 + static_cast<int>(rng.uniform_int(0, 14));
    const int sw = 2 + static_cast<int>(rng.uniform_int(0, 14));
    Tensor src = Tensor::random_normal({1, 2, sh, sw}, rng);
    Tensor coords = Tensor::random_uniform({1, 2, 6, 6}, rng, -1.2, 1.2);
    Tensor got = grid_sample(src, coords);
    Tensor want = oracles::grid_sample_reference(src, coords);
    CHECK((got.flat() - want.flat()).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("grid_sample gradients match central finite differences") {
  Rng rng(508);
  Tensor src = Tensor::random_normal({1, 2, 6, 6}, rng);
  // keep sample points well inside interpolation cells
  Tensor coords({1, 2, 4, 4});
  for (int py = 0; py < 4; ++py)
    for (int px = 0; px < 4; ++px) {
      const double gx = rng.uniform_int(0, 4) + rng.uniform(0.25, 0.75);
      const double gy = rng.uniform_int(0, 4) + rng.uniform(0.25, 0.75);
      coords.at(0, 0, py, px) = (2.0 * gx + 1.0) / 6 - 1.0;
      coords.at(0, 1, py, px) = (2.0 * gy + 1.0) / 6 - 1.0;
    }
  double err = oracles::fd_max_rel_error(
      {src, coords}, [](posewarp::ad::Graph&, std::vector<posewarp::ad::Var>& v) {
        posewarp::ad::Var y = posewarp::ad::grid_sample(v[0], v[1]);
        return posewarp::ad::mean(posewarp::ad::square(y));
      });
  CHECK(err < 1e-3);
}

TEST_CASE("map_segmentation: single label paints the whole foreground") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  UVSegmentation seg;
  seg.labels = GridI::Constant(16, 32, 5);
  Rng rng(606);
  IUVMap iuv = random_iuv(8, 8, atlas, rng);
  GridI lab = map_segmentation(seg, iuv, atlas);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      CHECK(lab(y, x) == (iuv.part(y, x) > 0 ? 5 : 0));
}

TEST_CASE("map_segmentation: part-aligned labels match the part channel") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  UVSegmentation seg;
  seg.labels = atlas.uv_to_part;  // label k on part k's chart
  Rng rng(607);
  IUVMap iuv = random_iuv(10, 10, atlas, rng);
  GridI lab = map_segmentation(seg, iuv, atlas);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) CHECK(lab(y, x) == iuv.part(y, x));
}

TEST_CASE("map_segmentation: never invents labels") {
  MappingAtlas atlas = build_synthetic_atlas(3, {32, 32});
  UVSegmentation seg;
  seg.labels = GridI::Zero(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) seg.labels(y, x) = (y < 16) ? 7 : 9;
  Rng rng(608);
  IUVMap iuv = random_iuv(12, 12, atlas, rng);
  GridI lab = map_segmentation(seg, iuv, atlas);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x)
      CHECK((lab(y, x) == 0 || lab(y, x) == 7 || lab(y, x) == 9));
}
