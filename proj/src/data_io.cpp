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

#include "posewarp/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace posewarp::data_io {

namespace {

constexpr char kIuvMagic[8] = {'P', 'W', 'S', 'I', 'U', 'V', '1', '\n'};
constexpr char kAtlasMagic[12] = {'P', 'W', 'S', 'A', 'T', 'L', 'A', 'S', ' ', 'v', '1', '\n'};
constexpr char kCkptMagic[12] = {'P', 'W', 'S', 'C', 'K', 'P', 'T', ' ', 'v', '1', '\n', '\0'};

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for reading: " + path);
  return f;
}

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw IoError("truncated file: " + path);
  return v;
}

void read_magic(std::ifstream& f, const char* magic, std::size_t len, const std::string& path) {
  std::vector<char> buf(len);
  f.read(buf.data(), static_cast<std::streamsize>(len));
  if (!f || std::memcmp(buf.data(), magic, len) != 0)
    throw IoError("bad or corrupt header in " + path);
}

}  // namespace

// --- IUV --------------------------------------------------------------------------

void save_iuv(const std::string& path, const uvgeom::IUVMap& iuv, int part_count) {
  iuv.validate(part_count);
  check(part_count <= 255, "save_iuv: part_count exceeds 8-bit range");
  std::ofstream f = open_out(path);
  f.write(kIuvMagic, sizeof(kIuvMagic));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(iuv.height()));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(iuv.width()));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(part_count));
  for (int y = 0; y < iuv.height(); ++y)
    for (int x = 0; x < iuv.width(); ++x)
      write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(iuv.part(y, x)));
  auto write_fixed = [&](const GridD& g) {
    for (int y = 0; y < iuv.height(); ++y)
      for (int x = 0; x < iuv.width(); ++x)
        write_pod<std::uint16_t>(
            f, static_cast<std::uint16_t>(std::lround(g(y, x) * uvgeom::kUvQuantum)));
  };
  write_fixed(iuv.u);
  write_fixed(iuv.v);
  if (!f) throw IoError("write failed: " + path);
}

uvgeom::IUVMap load_iuv(const std::string& path, int* part_count_out) {
  std::ifstream f = open_in(path);
  read_magic(f, kIuvMagic, sizeof(kIuvMagic), path);
  const auto h = read_pod<std::uint32_t>(f, path);
  const auto w = read_pod<std::uint32_t>(f, path);
  const auto pc = read_pod<std::uint32_t>(f, path);
  check(h > 0 && w > 0 && h <= 1 << 16 && w <= 1 << 16, "load_iuv: bad dimensions in " + path);
  uvgeom::IUVMap iuv = uvgeom::IUVMap::background(static_cast<int>(h), static_cast<int>(w));
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x) {
      const auto p = read_pod<std::uint8_t>(f, path);
      if (p > pc)
        throw IoError("load_iuv: invalid part index " + std::to_string(p) + " in " + path);
      iuv.part(static_cast<int>(y), static_cast<int>(x)) = p;
    }
  auto read_fixed = [&](GridD& g) {
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) {
        const auto q = read_pod<std::uint16_t>(f, path);
        g(static_cast<int>(y), static_cast<int>(x)) =
            static_cast<double>(q) / uvgeom::kUvQuantum;
      }
  };
  read_fixed(iuv.u);
  read_fixed(iuv.v);
  // Background convention: (u,v) ignored, stored as 0.
  for (std::uint32_t y = 0; y < h; ++y)
    for (std::uint32_t x = 0; x < w; ++x)
      if (iuv.part(static_cast<int>(y), static_cast<int>(x)) == 0) {
        iuv.u(static_cast<int>(y), static_cast<int>(x)) = 0.0;
        iuv.v(static_cast<int>(y), static_cast<int>(x)) = 0.0;
      }
  if (part_count_out) *part_count_out = static_cast<int>(pc);
  return iuv;
}

// --- atlas -------------------------------------------------------------------------

void save_atlas(const std::string& path, const uvgeom::MappingAtlas& atlas) {
  atlas.validate();
  std::ofstream f = open_out(path);
  f.write(kAtlasMagic, sizeof(kAtlasMagic));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(atlas.uv_height));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(atlas.uv_width));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(atlas.part_count));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(atlas.mirror_rule));
  for (const uvgeom::Chart& c : atlas.charts) {
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(c.x0));
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(c.y0));
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(c.w));
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(c.h));
  }
  for (int p = 1; p <= atlas.part_count; ++p)
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(atlas.paired_part(p)));
  for (int y = 0; y < atlas.uv_height; ++y)
    for (int x = 0; x < atlas.uv_width; ++x)
      write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(atlas.uv_to_part(y, x)));
  if (!f) throw IoError("write failed: " + path);
}

uvgeom::MappingAtlas load_atlas(const std::string& path) {
  std::ifstream f = open_in(path);
  read_magic(f, kAtlasMagic, sizeof(kAtlasMagic), path);
  uvgeom::MappingAtlas atlas;
  atlas.uv_height = static_cast<int>(read_pod<std::uint32_t>(f, path));
  atlas.uv_width = static_cast<int>(read_pod<std::uint32_t>(f, path));
  atlas.part_count = static_cast<int>(read_pod<std::uint32_t>(f, path));
  atlas.mirror_rule = static_cast<uvgeom::MirrorRule>(read_pod<std::uint32_t>(f, path));
  check(atlas.mirror_rule == uvgeom::MirrorRule::kHorizontalFlip,
        "load_atlas: unknown mirror rule id in " + path);
  check(atlas.part_count >= 1 && atlas.part_count <= 4096,
        "load_atlas: implausible part count in " + path);
  atlas.charts.resize(static_cast<std::size_t>(atlas.part_count));
  for (uvgeom::Chart& c : atlas.charts) {
    c.x0 = static_cast<int>(read_pod<std::uint32_t>(f, path));
    c.y0 = static_cast<int>(read_pod<std::uint32_t>(f, path));
    c.w = static_cast<int>(read_pod<std::uint32_t>(f, path));
    c.h = static_cast<int>(read_pod<std::uint32_t>(f, path));
  }
  atlas.symmetry_pairs.assign(static_cast<std::size_t>(atlas.part_count) + 1, 0);
  for (int p = 1; p <= atlas.part_count; ++p)
    atlas.symmetry_pairs[static_cast<std::size_t>(p)] =
        static_cast<int>(read_pod<std::uint32_t>(f, path));
  atlas.uv_to_part = GridI::Zero(atlas.uv_height, atlas.uv_width);
  for (int y = 0; y < atlas.uv_height; ++y)
    for (int x = 0; x < atlas.uv_width; ++x)
      atlas.uv_to_part(y, x) = read_pod<std::uint16_t>(f, path);
  atlas.validate();
  return atlas;
}

// --- images ------------------------------------------------------------------------

void save_image(const std::string& path, const Tensor& image) {
  check(image.rank() == 3 && image.dim(0) == 3, "save_image: expected [3,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  std::ofstream f = open_out(path);
  f << "P6\n" << w << " " << h << "\n255\n";
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = (image.at(c, y, x) + 1.0) * 0.5 * 255.0;
        const int q = std::clamp(static_cast<int>(std::lround(v)), 0, 255);
        f.put(static_cast<char>(q));
      }
  if (!f) throw IoError("write failed: " + path);
}

namespace {

void read_pnm_header(std::ifstream& f, const std::string& path, const char* want_magic,
                     int* w, int* h) {
  std::string magic;
  f >> magic;
  if (magic != want_magic) throw IoError("bad or corrupt header in " + path);
  int maxval = 0;
  f >> *w >> *h >> maxval;
  if (!f || *w <= 0 || *h <= 0 || maxval != 255)
    throw IoError("bad or corrupt header in " + path);
  f.get();  // single whitespace after maxval
}

}  // namespace

Tensor load_image(const std::string& path) {
  std::ifstream f = open_in(path);
  int w = 0, h = 0;
  read_pnm_header(f, path, "P6", &w, &h);
  Tensor image({3, h, w});
  std::vector<char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    f.read(row.data(), static_cast<std::streamsize>(row.size()));
    if (!f) throw IoError("truncated file: " + path);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const auto q = static_cast<unsigned char>(row[static_cast<std::size_t>(x) * 3 + c]);
        image.at(c, y, x) = static_cast<double>(q) / 255.0 * 2.0 - 1.0;
      }
  }
  return image;
}

void save_mask(const std::string& path, const GridD& mask) {
  std::ofstream f = open_out(path);
  f << "P5\n" << mask.cols() << " " << mask.rows() << "\n255\n";
  for (int y = 0; y < mask.rows(); ++y)
    for (int x = 0; x < mask.cols(); ++x) {
      check(mask(y, x) == 0.0 || mask(y, x) == 1.0, "save_mask: mask is not binary");
      f.put(mask(y, x) == 1.0 ? static_cast<char>(255) : static_cast<char>(0));
    }
  if (!f) throw IoError("write failed: " + path);
}

GridD load_mask(const std::string& path) {
  std::ifstream f = open_in(path);
  int w = 0, h = 0;
  read_pnm_header(f, path, "P5", &w, &h);
  GridD mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int q = f.get();
      if (q == EOF) throw IoError("truncated file: " + path);
      if (q != 0 && q != 255)
        throw ValidationError("load_mask: non-binary mask value " + std::to_string(q) +
                              " in " + path);
      mask(y, x) = q == 255 ? 1.0 : 0.0;
    }
  return mask;
}

// --- checkpoints ----------------------------------------------------------------------

void save_checkpoint(const std::string& path, const std::string& meta_json,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::ofstream f = open_out(path);
  f.write(kCkptMagic, sizeof(kCkptMagic));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(meta_json.size()));
  f.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
  write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_pod<std::uint16_t>(f, static_cast<std::uint16_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(f, static_cast<std::uint8_t>(t->rank()));
    for (int i = 0; i < t->rank(); ++i)
      write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(t->dim(i)));
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
  if (!f) throw IoError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f = open_in(path);
  read_magic(f, kCkptMagic, sizeof(kCkptMagic), path);
  Checkpoint ckpt;
  const auto meta_len = read_pod<std::uint32_t>(f, path);
  ckpt.meta_json.resize(meta_len);
  f.read(ckpt.meta_json.data(), meta_len);
  const auto count = read_pod<std::uint32_t>(f, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rank = read_pod<std::uint8_t>(f, path);
    check(rank <= 4, "load_checkpoint: implausible tensor rank in " + path);
    std::vector<int> shape;
    for (int r = 0; r < rank; ++r)
      shape.push_back(static_cast<int>(read_pod<std::uint32_t>(f, path)));
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw IoError("truncated file: " + path);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

// --- manifests --------------------------------------------------------------------------

std::vector<PairRecord> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  std::vector<PairRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    PairRecord r;
    if (!(std::getline(is, r.src_image, '\t') && std::getline(is, r.trg_image, '\t') &&
          std::getline(is, r.src_iuv, '\t') && std::getline(is, r.trg_iuv, '\t') &&
          std::getline(is, r.trg_fg_mask, '\t') && std::getline(is, r.split)))
      throw IoError("malformed manifest line " + std::to_string(line_no) + " in " + path);
    records.push_back(std::move(r));
  }
  return records;
}

void save_manifest(const std::string& path, const std::vector<PairRecord>& records) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  for (const PairRecord& r : records)
    f << r.src_image << '\t' << r.trg_image << '\t' << r.src_iuv << '\t' << r.trg_iuv << '\t'
      << r.trg_fg_mask << '\t' << r.split << '\n';
}

PairData load_pair(const PairRecord& record, int part_count) {
  PairData d;
  d.src_image = load_image(record.src_image);
  d.trg_image = load_image(record.trg_image);
  int pc_src = 0, pc_trg = 0;
  d.src_iuv = load_iuv(record.src_iuv, &pc_src);
  d.trg_iuv = load_iuv(record.trg_iuv, &pc_trg);
  d.trg_fg_mask = load_mask(record.trg_fg_mask);
  check(pc_src == part_count && pc_trg == part_count,
        "load_pair: IUV part count does not match the atlas");
  const int h = d.src_image.dim(1), w = d.src_image.dim(2);
  check(d.trg_image.dim(1) == h && d.trg_image.dim(2) == w &&
            d.src_iuv.height() == h && d.src_iuv.width() == w &&
            d.trg_iuv.height() == h && d.trg_iuv.width() == w &&
            d.trg_fg_mask.rows() == h && d.trg_fg_mask.cols() == w,
        "load_pair: resolution mismatch across pair files");
  d.src_iuv.validate(part_count);
  d.trg_iuv.validate(part_count);
  return d;
}

// --- fixtures ------------------------------------------------------------------------------

namespace {

constexpr int kPartSize = 16;
constexpr int kPartCount = 3;  // 1 = left arm, 2 = right arm, 3 = torso (midline)

// Smooth seeded texture in [-1,1]; right arm mirrors the left, torso is
// self-symmetric, so mirrored correspondences return the true colors.
std::array<Tensor, 3> make_textures(Rng& rng) {
  auto pattern = [&rng]() {
    Tensor t({3, kPartSize, kPartSize});
    for (int c = 0; c < 3; ++c) {
      const double fx = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5);
      const double px = rng.uniform(0, 2 * M_PI), py = rng.uniform(0, 2 * M_PI);
      const double amp = rng.uniform(0.35, 0.6);
      const double gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);
      for (int y = 0; y < kPartSize; ++y)
        for (int x = 0; x < kPartSize; ++x) {
          const double wave = amp * std::sin(fx * x * 2 * M_PI / kPartSize + px) *
                              std::cos(fy * y * 2 * M_PI / kPartSize + py);
          const double ramp = gx * (2.0 * x / (kPartSize - 1) - 1.0) +
                              gy * (2.0 * y / (kPartSize - 1) - 1.0);
          t.at(c, y, x) = std::clamp(wave + ramp, -1.0, 1.0);
        }
    }
    return t;
  };
  auto mirror_x = [](const Tensor& t) {
    Tensor m = t;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < kPartSize; ++y)
        for (int x = 0; x < kPartSize; ++x)
          m.at(c, y, x) = t.at(c, y, kPartSize - 1 - x);
    return m;
  };
  Tensor left = pattern();
  Tensor right = mirror_x(left);
  Tensor torso_raw = pattern();
  Tensor torso = torso_raw;
  const Tensor torso_m = mirror_x(torso_raw);
  torso.flat() = 0.5 * (torso_raw.flat() + torso_m.flat());
  return {left, right, torso};
}

struct RenderedScene {
  Tensor image;  // [3,H,W], background 0
  uvgeom::IUVMap iuv;
};

RenderedScene render_scene(const ScenePose& pose, const std::array<Tensor, 3>& textures,
                           int image_size) {
  RenderedScene out;
  out.image = Tensor({3, image_size, image_size});
  out.iuv = uvgeom::IUVMap::background(image_size, image_size);
  for (int p : pose.draw_order) {
    const auto [ox, oy] = pose.origins[static_cast<std::size_t>(p - 1)];
    check(ox >= 0 && oy >= 0 && ox + kPartSize <= image_size && oy + kPartSize <= image_size,
          "render_scene: part outside the image");
    for (int j = 0; j < kPartSize; ++j)
      for (int i = 0; i < kPartSize; ++i) {
        const int y = oy + j, x = ox + i;
        out.iuv.part(y, x) = p;
        out.iuv.u(y, x) = uvgeom::snap_uv(static_cast<double>(i) / (kPartSize - 1));
        out.iuv.v(y, x) = uvgeom::snap_uv(static_cast<double>(j) / (kPartSize - 1));
        for (int c = 0; c < 3; ++c)
          out.image.at(c, y, x) = textures[static_cast<std::size_t>(p - 1)].at(c, j, i);
      }
  }
  return out;
}

}  // namespace

uvgeom::UVSegmentation fixture_segmentation(const uvgeom::MappingAtlas& atlas) {
  uvgeom::UVSegmentation seg;
  seg.labels = GridI::Zero(atlas.uv_height, atlas.uv_width);
  for (int y = 0; y < atlas.uv_height; ++y)
    for (int x = 0; x < atlas.uv_width; ++x) {
      const int p = atlas.uv_to_part(y, x);
      if (p == 0) continue;
      // left/right-paired parts (limbs) -> "top", midline parts -> "bottom"
      seg.labels(y, x) = atlas.paired_part(p) != p ? 2 : 3;
    }
  return seg;
}

FixturePair make_fixture(std::uint64_t seed, double difficulty, int image_size) {
  check(difficulty >= 0.0 && difficulty <= 1.0, "make_fixture: difficulty outside [0,1]");
  check(image_size >= 4 * kPartSize, "make_fixture: image too small for the figure");
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 1);

  FixturePair fx;
  fx.atlas = uvgeom::build_synthetic_atlas(kPartCount, {32, 32});
  const std::array<Tensor, 3> textures = make_textures(rng);

  const int center_x = (image_size - kPartSize) / 2;
  const int overlap = std::min(kPartSize - 1, static_cast<int>(std::lround(difficulty * kPartSize)));

  // Source: arms tucked against the torso; the torso is painted over the left
  // arm (hiding `overlap` columns) while the right arm is painted on top.
  ScenePose src_pose;
  const int src_y = static_cast<int>(rng.uniform_int(kPartSize, image_size - 2 * kPartSize));
  src_pose.origins[2] = {center_x, src_y};                           // torso
  src_pose.origins[0] = {center_x - kPartSize + overlap, src_y};     // left arm
  src_pose.origins[1] = {center_x + kPartSize - overlap, src_y};     // right arm (mirrored)
  src_pose.draw_order = {1, 3, 2};

  // Target: fully spread, nothing occluded.
  ScenePose trg_pose;
  const int trg_y = static_cast<int>(rng.uniform_int(0, image_size - kPartSize));
  const int arm_gap = static_cast<int>(rng.uniform_int(2, center_x - kPartSize - 1));
  trg_pose.origins[2] = {center_x, static_cast<int>(rng.uniform_int(0, image_size - kPartSize))};
  trg_pose.origins[0] = {center_x - kPartSize - arm_gap, trg_y};
  trg_pose.origins[1] = {center_x + kPartSize + arm_gap, trg_y};
  trg_pose.draw_order = {1, 2, 3};

  RenderedScene src = render_scene(src_pose, textures, image_size);
  RenderedScene trg = render_scene(trg_pose, textures, image_size);
  fx.src_image = std::move(src.image);
  fx.trg_image = std::move(trg.image);
  fx.src_iuv = std::move(src.iuv);
  fx.trg_iuv = std::move(trg.iuv);
  fx.src_fg = fx.src_iuv.foreground_mask();
  fx.trg_fg = fx.trg_iuv.foreground_mask();

  // Exact correspondence: a target pixel on part p at texel (i,j) shows the
  // same body point as source pixel (src_origin_p + (i,j)).
  fx.gt_tcoord = uvgeom::CoordField::invalid(image_size, image_size);
  for (int y = 0; y < image_size; ++y)
    for (int x = 0; x < image_size; ++x) {
      const int p = fx.trg_iuv.part(y, x);
      if (p == 0) continue;
      const auto [ox, oy] = trg_pose.origins[static_cast<std::size_t>(p - 1)];
      const int i = x - ox, j = y - oy;
      const auto [sx, sy] = src_pose.origins[static_cast<std::size_t>(p - 1)];
      fx.gt_tcoord.mask(y, x) = 1.0;
      fx.gt_tcoord.x(y, x) = uvgeom::normalize_coord(sx + i, image_size);
      fx.gt_tcoord.y(y, x) = uvgeom::normalize_coord(sy + j, image_size);
    }

  // Count left-arm texels hidden in the source.
  int hidden = 0;
  const auto [lx, ly] = src_pose.origins[0];
  for (int j = 0; j < kPartSize; ++j)
    for (int i = 0; i < kPartSize; ++i)
      if (fx.src_iuv.part(ly + j, lx + i) != 1) ++hidden;
  fx.occluded_fraction = static_cast<double>(hidden) / (kPartSize * kPartSize);

  return fx;
}

void write_fixture_dir(const std::string& dir, std::uint64_t seed, double difficulty,
                       int count, int image_size) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<PairRecord> records;
  uvgeom::MappingAtlas atlas;
  for (int i = 0; i < count; ++i) {
    FixturePair fx = make_fixture(seed + static_cast<std::uint64_t>(i), difficulty, image_size);
    if (i == 0) {
      atlas = fx.atlas;
      save_atlas(dir + "/atlas.pwsatlas", atlas);
    }
    const std::string stem = dir + "/pair" + std::to_string(i);
    PairRecord r;
    r.src_image = stem + "_src.ppm";
    r.trg_image = stem + "_trg.ppm";
    r.src_iuv = stem + "_src.pwsiuv";
    r.trg_iuv = stem + "_trg.pwsiuv";
    r.trg_fg_mask = stem + "_trgmask.pgm";
    r.split = i % 5 == 4 ? "test" : "train";
    save_image(r.src_image, fx.src_image);
    save_image(r.trg_image, fx.trg_image);
    save_iuv(r.src_iuv, fx.src_iuv, fx.atlas.part_count);
    save_iuv(r.trg_iuv, fx.trg_iuv, fx.atlas.part_count);
    save_mask(r.trg_fg_mask, fx.trg_fg);
    records.push_back(std::move(r));
  }
  save_manifest(dir + "/pairs.tsv", records);
}

}  // namespace posewarp::data_io
