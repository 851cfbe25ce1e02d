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
#include <fstream>

#include "posewarp/data_io.hpp"
#include "posewarp/uvgeom.hpp"

using namespace posewarp;
using namespace posewarp::data_io;
using namespace posewarp::uvgeom;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("iuv files round-trip within the fixed-point quantum") {
  MappingAtlas atlas = build_synthetic_atlas(3, {32, 32});
  Rng rng(42);
  IUVMap iuv = IUVMap::background(10, 14);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 14; ++x)
      if (rng.uniform() < 0.6) {
        iuv.part(y, x) = static_cast<int>(rng.uniform_int(1, 3));
        iuv.u(y, x) = rng.uniform();  // deliberately off-grid
        iuv.v(y, x) = rng.uniform();
      }
  const std::string path = tmp_path("roundtrip.pwsiuv");
  save_iuv(path, iuv, atlas.part_count);
  int pc = 0;
  IUVMap back = load_iuv(path, &pc);
  CHECK(pc == 3);
  CHECK((back.part == iuv.part).all());
  CHECK((back.u - iuv.u).abs().maxCoeff() <= 0.5 / kUvQuantum + 1e-12);
  CHECK((back.v - iuv.v).abs().maxCoeff() <= 0.5 / kUvQuantum + 1e-12);
  // a second round trip is exact: values are now on the grid
  save_iuv(path, back, atlas.part_count);
  IUVMap again = load_iuv(path);
  CHECK((again.u - back.u).abs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("iuv with an out-of-range part index is rejected") {
  MappingAtlas atlas = build_synthetic_atlas(2, {16, 32});
  IUVMap iuv = IUVMap::background(4, 4);
  iuv.part(1, 1) = 2;
  iuv.u(1, 1) = 0.5;
  iuv.v(1, 1) = 0.5;
  const std::string path = tmp_path("badpart.pwsiuv");
  save_iuv(path, iuv, atlas.part_count);
  // shrink the declared part count in the header so the stored index overflows it
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8 + 4 + 4);
    const std::uint32_t one = 1;
    f.write(reinterpret_cast<const char*>(&one), sizeof(one));
  }
  CHECK_THROWS_AS(load_iuv(path), IoError);
  std::remove(path.c_str());
}

TEST_CASE("corrupt iuv header is rejected with the file named") {
  const std::string path = tmp_path("corrupt.pwsiuv");
  std::ofstream f(path, std::ios::binary);
  f << "NOTPWS00garbage";
  f.close();
  try {
    load_iuv(path);
    FAIL("expected decode error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("corrupt.pwsiuv") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("atlas files round-trip exactly") {
  MappingAtlas atlas = build_synthetic_atlas(5, {64, 64});
  const std::string path = tmp_path("atlas.pwsatlas");
  save_atlas(path, atlas);
  MappingAtlas back = load_atlas(path);
  CHECK(back.uv_height == atlas.uv_height);
  CHECK(back.part_count == atlas.part_count);
  CHECK((back.uv_to_part == atlas.uv_to_part).all());
  for (int p = 1; p <= 5; ++p) {
    CHECK(back.paired_part(p) == atlas.paired_part(p));
    CHECK(back.chart(p).x0 == atlas.chart(p).x0);
    CHECK(back.chart(p).w == atlas.chart(p).w);
  }
  std::remove(path.c_str());
}

TEST_CASE("images quantize to 8 bits and back") {
  Rng rng(7);
  Tensor img = Tensor::random_uniform({3, 6, 5}, rng, -1.0, 1.0);
  const std::string path = tmp_path("img.ppm");
  save_image(path, img);
  Tensor back = load_image(path);
  CHECK(back.shape() == img.shape());
  CHECK((back.flat() - img.flat()).abs().maxCoeff() <= 1.0 / 255.0 + 1e-12);
  std::remove(path.c_str());
}

TEST_CASE("non-binary mask bytes are a validation error") {
  const std::string path = tmp_path("bad.pgm");
  std::ofstream f(path, std::ios::binary);
  f << "P5\n2 1\n255\n";
  f.put(static_cast<char>(255));
  f.put(static_cast<char>(128));  // 0.5-ish gray
  f.close();
  CHECK_THROWS_AS(load_mask(path), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("checkpoints round-trip tensors and metadata") {
  Rng rng(9);
  Tensor a = Tensor::random_normal({2, 3}, rng);
  Tensor b = Tensor::random_normal({4}, rng);
  const std::string path = tmp_path("model.pwsckpt");
  save_checkpoint(path, "{\"kind\":\"test\"}", {{"layer.w", &a}, {"layer.b", &b}});
  Checkpoint ckpt = load_checkpoint(path);
  CHECK(ckpt.meta_json == "{\"kind\":\"test\"}");
  REQUIRE(ckpt.tensors.size() == 2);
  CHECK(ckpt.tensors[0].first == "layer.w");
  CHECK((ckpt.tensors[0].second.flat() - a.flat()).abs().maxCoeff() == 0.0);
  CHECK((ckpt.tensors[1].second.flat() - b.flat()).abs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("fixtures are byte-identical across runs") {
  FixturePair a = make_fixture(123, 0.5);
  FixturePair b = make_fixture(123, 0.5);
  CHECK((a.src_image.flat() == b.src_image.flat()).all());
  CHECK((a.trg_image.flat() == b.trg_image.flat()).all());
  CHECK((a.src_iuv.u - b.src_iuv.u).abs().maxCoeff() == 0.0);
  CHECK((a.gt_tcoord.x - b.gt_tcoord.x).abs().maxCoeff() == 0.0);

  FixturePair c = make_fixture(124, 0.5);
  CHECK((a.src_image.flat() != c.src_image.flat()).any());
}

TEST_CASE("zero-occlusion fixture fills every chart and leaves no mirror residue") {
  FixturePair fx = make_fixture(5, 0.0);
  CHECK(fx.occluded_fraction == 0.0);

  CoordField mesh = meshgrid_coords(64, 64);
  CoordField base = image_to_uv(fx.src_iuv, fx.atlas, mesh);
  for (int p = 1; p <= 3; ++p) {
    const Chart& c = fx.atlas.chart(p);
    for (int y = c.y0; y < c.y0 + c.h; ++y)
      for (int x = c.x0; x < c.x0 + c.w; ++x) CHECK(base.mask(y, x) == 1.0);
  }

  CoordField flipped = mesh;
  flipped.x = -mesh.x;
  CoordField mirrored = image_to_uv(mirror_iuv(fx.src_iuv, fx.atlas), fx.atlas, flipped);
  CoordField combined = combine_symmetry(base, mirrored);
  // base covers everything, so the mirrored contribution is fully stripped
  CHECK((combined.mask - base.mask).abs().maxCoeff() == 0.0);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      if (base.mask(y, x) == 1.0) CHECK(combined.x(y, x) == base.x(y, x));
}

TEST_CASE("half-occluded arm: mirrored coordinates fill the hidden chart region") {
  FixturePair fx = make_fixture(6, 0.5);
  CHECK(fx.occluded_fraction >= 0.45);

  CoordField mesh = meshgrid_coords(64, 64);
  CoordField base = image_to_uv(fx.src_iuv, fx.atlas, mesh);
  CoordField flipped = mesh;
  flipped.x = -mesh.x;
  CoordField mirrored = image_to_uv(mirror_iuv(fx.src_iuv, fx.atlas), fx.atlas, flipped);

  const Chart& left = fx.atlas.chart(1);
  int hidden = 0, filled = 0;
  for (int y = left.y0; y < left.y0 + left.h; ++y)
    for (int x = left.x0; x < left.x0 + left.w; ++x)
      if (base.mask(y, x) == 0.0) {
        ++hidden;
        if (mirrored.mask(y, x) == 1.0) ++filled;
      }
  REQUIRE(hidden > 0);
  CHECK(static_cast<double>(filled) / hidden >= 0.9);
}

TEST_CASE("fixture analytic correspondence agrees with the geometry pipeline") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    FixturePair fx = make_fixture(seed, 0.4);
    CoordField base = image_to_uv(fx.src_iuv, fx.atlas, meshgrid_coords(64, 64));
    CoordField t = uv_to_image(base, fx.trg_iuv, fx.atlas);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (t.mask(y, x) == 1.0) {
          REQUIRE(fx.gt_tcoord.mask(y, x) == 1.0);
          CHECK(std::abs(t.x(y, x) - fx.gt_tcoord.x(y, x)) < 1e-5);
          CHECK(std::abs(t.y(y, x) - fx.gt_tcoord.y(y, x)) < 1e-5);
        }
  }
}

TEST_CASE("fixture warp by ground truth reproduces the target exactly on shared visibility") {
  FixturePair fx = make_fixture(21, 0.0);
  Tensor warped = bilinear_sample(fx.src_image, fx.gt_tcoord);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (fx.trg_fg(y, x) == 1.0) {
        // zero-occlusion: every body point visible in both poses
        for (int c = 0; c < 3; ++c)
          CHECK(warped.at(c, y, x) == doctest::Approx(fx.trg_image.at(c, y, x)).epsilon(1e-9));
      }
}

TEST_CASE("manifest and pair loading validate dimensions") {
  namespace fs = std::filesystem;
  const std::string dir = tmp_path("fixdir");
  write_fixture_dir(dir, 31, 0.3, 3);
  auto records = load_manifest(dir + "/pairs.tsv");
  REQUIRE(records.size() == 3);
  MappingAtlas atlas = load_atlas(dir + "/atlas.pwsatlas");
  PairData pd = load_pair(records[0], atlas.part_count);
  CHECK(pd.src_image.dim(1) == 64);
  CHECK(pd.trg_fg_mask.rows() == 64);
  fs::remove_all(dir);
}
