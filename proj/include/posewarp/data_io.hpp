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

#ifndef POSEWARP_DATA_IO_HPP
#define POSEWARP_DATA_IO_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "posewarp/tensor.hpp"
#include "posewarp/uvgeom.hpp"

namespace posewarp::data_io {

// --- file formats ------------------------------------------------------------------
// IUV files: 8-bit part plane plus u and v as 16-bit fixed point (/65535).
void save_iuv(const std::string& path, const uvgeom::IUVMap& iuv, int part_count);
uvgeom::IUVMap load_iuv(const std::string& path, int* part_count_out = nullptr);

// Atlas archive, versioned header "PWSATLAS v1".
void save_atlas(const std::string& path, const uvgeom::MappingAtlas& atlas);
uvgeom::MappingAtlas load_atlas(const std::string& path);

// Lossless 8-bit raster images; values mapped [-1,1] <-> [0,255].
void save_image(const std::string& path, const Tensor& image);  // [3,H,W], PPM
Tensor load_image(const std::string& path);

// Binary masks as 8-bit rasters holding only 0 or 255.
void save_mask(const std::string& path, const GridD& mask);  // PGM
GridD load_mask(const std::string& path);

// Checkpoint archive: JSON metadata blob plus named f64 tensors.
void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors);
struct Checkpoint {
  std::string meta_json;
  std::vector<std::pair<std::string, Tensor>> tensors;
};
Checkpoint load_checkpoint(const std::string& path);

// --- dataset records ----------------------------------------------------------------

struct PairRecord {
  std::string src_image;
  std::string trg_image;
  std::string src_iuv;
  std::string trg_iuv;
  std::string trg_fg_mask;
  std::string split;
};

// Tab-separated manifest, one record per line.
std::vector<PairRecord> load_manifest(const std::string& path);
void save_manifest(const std::string& path, const std::vector<PairRecord>& records);

struct PairData {
  Tensor src_image;  // [3,H,W] in [-1,1]
  Tensor trg_image;
  uvgeom::IUVMap src_iuv;
  uvgeom::IUVMap trg_iuv;
  GridD trg_fg_mask;  // human-parse-style foreground, binary
};

// Loads and validates one record; every file must exist, decode and share the
// same resolution.
PairData load_pair(const PairRecord& record, int part_count);

// --- synthetic fixtures ---------------------------------------------------------------

// Procedural articulated figure: three 16x16 parts (left arm, right arm,
// midline torso) placed at integer offsets, later-drawn parts occluding
// earlier ones. Placement integrality keeps every pixel <-> texel
// correspondence exact, so ground truth is analytic.
struct ScenePose {
  std::array<std::pair<int, int>, 3> origins;  // (x,y) per part 1..3
  std::array<int, 3> draw_order;               // painted bottom to top
};

struct FixturePair {
  uvgeom::MappingAtlas atlas;
  Tensor src_image;  // [3,H,W]
  Tensor trg_image;
  uvgeom::IUVMap src_iuv;
  uvgeom::IUVMap trg_iuv;
  GridD src_fg;
  GridD trg_fg;
  // Exact target-pixel -> source-image correspondence (valid on the target
  // foreground, including source-occluded regions).
  uvgeom::CoordField gt_tcoord;
  // Fraction of the left-arm chart hidden in the source pose.
  double occluded_fraction = 0.0;
};

// Deterministic fixture pair; difficulty in [0,1] drives how much of the left
// arm the torso hides in the source pose.
FixturePair make_fixture(std::uint64_t seed, double difficulty, int image_size = 64);

// Writes `count` fixture pairs plus atlas and manifest into a directory.
void write_fixture_dir(const std::string& dir, std::uint64_t seed, double difficulty,
                       int count, int image_size = 64);

// Garment-region segmentation of the fixture atlas: arms = label 2 (top),
// torso = label 3 (bottom), background 0.
uvgeom::UVSegmentation fixture_segmentation(const uvgeom::MappingAtlas& atlas);

}  // namespace posewarp::data_io

#endif  // POSEWARP_DATA_IO_HPP
