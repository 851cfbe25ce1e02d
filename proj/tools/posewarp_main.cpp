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

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "posewarp/config.hpp"
#include "posewarp/coordnet.hpp"
#include "posewarp/data_io.hpp"
#include "posewarp/losses.hpp"
#include "posewarp/metrics.hpp"
#include "posewarp/posegen.hpp"
#include "posewarp/trainer.hpp"
#include "posewarp/transfer.hpp"

namespace fs = std::filesystem;
using namespace posewarp;

namespace {

struct ImageIuvArg {
  std::string image;
  std::string iuv;
};

ImageIuvArg parse_image_iuv(const std::string& arg, const std::string& flag) {
  const auto comma = arg.find(',');
  check(comma != std::string::npos, flag + " expects <image>,<iuv>");
  return {arg.substr(0, comma), arg.substr(comma + 1)};
}

// Renders a coordinate field as an RGB image: x -> red, y -> green,
// visibility -> blue (all shifted into [-1,1] storage).
Tensor coords_panel(const uvgeom::CoordField& f) {
  Tensor img({3, f.height(), f.width()});
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (f.mask(y, x) == 1.0) {
        img.at(0, y, x) = f.x(y, x);
        img.at(1, y, x) = f.y(y, x);
        img.at(2, y, x) = 1.0;
      } else {
        img.at(0, y, x) = -1.0;
        img.at(1, y, x) = -1.0;
        img.at(2, y, x) = -1.0;
      }
    }
  return img;
}

std::vector<data_io::PairRecord> records_for_split(const std::string& manifest,
                                                   const std::string& split) {
  std::vector<data_io::PairRecord> all = data_io::load_manifest(manifest);
  std::vector<data_io::PairRecord> out;
  for (auto& r : all)
    if (split.empty() || r.split == split) out.push_back(std::move(r));
  check(!out.empty(), "no records with split '" + split + "' in " + manifest);
  return out;
}

void write_metrics(const std::string& csv_path, const trainer::EvalReport& report) {
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open for writing: " + csv_path);
  csv << "pair,psnr,ssim,fid,lpips\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    csv << i << "," << r.psnr << "," << r.ssim << ",";
    if (r.fid) csv << *r.fid;
    csv << ",";
    if (r.lpips) csv << *r.lpips;
    csv << "\n";
  }
  std::ofstream jsonl(csv_path + ".jsonl");
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& r = report.rows[i];
    jsonl << "{\"pair\":" << i << ",\"psnr\":" << r.psnr << ",\"ssim\":" << r.ssim;
    if (r.lpips) jsonl << ",\"lpips\":" << *r.lpips;
    jsonl << "}\n";
  }
}

int run_make_fixtures(const std::string& out, int count, std::uint64_t seed, double difficulty,
                      int size) {
  data_io::write_fixture_dir(out, seed, difficulty, count, size);
  std::cout << "wrote " << count << " fixture pairs to " << out << "\n";
  return 0;
}

int run_train_coordnet(const std::string& config_path, const std::string& data_dir,
                       const std::string& out_path, int steps_override) {
  config::RunConfig cfg = config::load_run_config(config_path);
  uvgeom::MappingAtlas atlas = data_io::load_atlas(data_dir + "/atlas.pwsatlas");
  cfg.coordnet.uv_height = atlas.uv_height;
  cfg.coordnet.uv_width = atlas.uv_width;

  auto records = records_for_split(data_dir + "/pairs.tsv", "train");
  std::vector<coordnet::CoordBatch> batches;
  for (const auto& r : records) {
    data_io::PairData pair = data_io::load_pair(r, atlas.part_count);
    coordnet::CoordBatch b;
    b.fields = coordnet::symmetry_inputs(pair.src_iuv, atlas);
    b.iuv_src = pair.src_iuv;
    b.iuv_trg = pair.trg_iuv;
    b.src_image = pair.src_image;
    b.trg_image = pair.trg_image;
    b.src_pose_mask = pair.src_iuv.foreground_mask();
    b.trg_pose_mask = pair.trg_iuv.foreground_mask();
    batches.push_back(std::move(b));
  }

  coordnet::CoordNet net(cfg.coordnet);
  coordnet::CoordNetTrainer tr(net, atlas);
  const int steps = steps_override > 0 ? steps_override : cfg.coordnet_steps;
  for (int i = 0; i < steps; ++i) {
    const coordnet::CoordStepStats s = tr.step(batches[static_cast<std::size_t>(i) % batches.size()]);
    if (i % 50 == 0 || i == steps - 1)
      std::cout << "step " << i << "  L_coord " << s.l_coord << "  L_rgb " << s.l_rgb
                << "  L " << s.l_total << "\n";
  }
  net.save(out_path);
  std::cout << "saved coordnet to " << out_path << "\n";
  return 0;
}

int run_train_generator(const std::string& config_path, const std::string& data_dir,
                        const std::string& coordnet_path, const std::string& out_dir) {
  config::RunConfig cfg = config::load_run_config(config_path);
  const std::string dir = data_dir.empty() ? fs::path(cfg.data.manifest).parent_path().string()
                                           : data_dir;
  uvgeom::MappingAtlas atlas = data_io::load_atlas(dir + "/atlas.pwsatlas");
  const std::string ck = coordnet_path.empty() ? cfg.data.coordnet_checkpoint : coordnet_path;
  check(!ck.empty(), "train-generator: no coordnet checkpoint configured");
  auto net = coordnet::CoordNet::load(ck);

  auto records = records_for_split(dir + "/pairs.tsv", "train");
  std::vector<trainer::TrainSample> samples;
  for (const auto& r : records)
    samples.push_back(trainer::make_train_sample(
        cfg.generator, net.get(), data_io::load_pair(r, atlas.part_count), atlas));

  posegen::Generator gen(cfg.generator);
  posegen::Discriminator disc(cfg.generator);
  trainer::GanTrainer tr(gen, disc, cfg.losses.perceptual(), cfg.losses.face(), cfg.trainer);

  const std::string out = out_dir.empty() ? cfg.data.out_dir : out_dir;
  trainer::PhaseResult result = trainer::train_phase(tr, gen, disc, samples, cfg.trainer, out);

  std::ofstream csv(out + "/losses.csv");
  csv << "step,d_loss,g_loss,adv,l1,vgg,face,r1\n";
  std::ofstream jsonl(out + "/losses.jsonl");
  long step = 0;
  for (const auto& s : tr.history()) {
    csv << step << "," << s.d_loss << "," << s.g_loss << "," << s.adv << "," << s.l1 << ","
        << s.vgg << "," << s.face << "," << s.r1 << "\n";
    jsonl << "{\"step\":" << step << ",\"d_loss\":" << s.d_loss << ",\"g_loss\":" << s.g_loss
          << "}\n";
    ++step;
  }
  std::cout << "trained " << result.steps << " steps; best foreground PSNR "
            << result.best_psnr << " dB; checkpoints in " << out << "\n";
  return 0;
}

int run_repose(const std::string& gen_path, const std::string& coordnet_path,
               const std::string& atlas_path, const std::string& src_img,
               const std::string& src_iuv, const std::string& trg_iuv,
               const std::string& out_path, const std::string& noise, std::uint64_t seed) {
  uvgeom::MappingAtlas atlas = data_io::load_atlas(atlas_path);
  auto net = coordnet::CoordNet::load(coordnet_path);
  auto gen = posegen::Generator::load(gen_path);

  data_io::PairData pair;
  pair.src_image = data_io::load_image(src_img);
  pair.src_iuv = data_io::load_iuv(src_iuv);
  pair.trg_iuv = data_io::load_iuv(trg_iuv);
  pair.trg_image = Tensor({3, pair.src_image.dim(1), pair.src_image.dim(2)});
  pair.trg_fg_mask = pair.trg_iuv.foreground_mask();
  pair.src_iuv.validate(atlas.part_count);
  pair.trg_iuv.validate(atlas.part_count);

  trainer::TrainSample s = trainer::make_train_sample(gen->config(), net.get(), pair, atlas);
  Rng rng(seed);
  Tensor out = gen->generate(s.inputs, posegen::noise_mode_from_string(noise), &rng);
  data_io::save_image(out_path, without_batch_dim(out));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_tryon(const std::string& gen_path, const std::string& coordnet_path,
              const std::string& atlas_path, const std::string& person,
              const std::vector<std::string>& garments, const std::string& trg_iuv,
              const std::string& out_path, const std::string& noise, std::uint64_t seed) {
  uvgeom::MappingAtlas atlas = data_io::load_atlas(atlas_path);
  auto net = coordnet::CoordNet::load(coordnet_path);
  auto gen = posegen::Generator::load(gen_path);
  const uvgeom::UVSegmentation seg = data_io::fixture_segmentation(atlas);

  transfer::TransferSpec spec;
  const ImageIuvArg p = parse_image_iuv(person, "--person");
  spec.person.image = data_io::load_image(p.image);
  spec.person.iuv = data_io::load_iuv(p.iuv);
  for (const std::string& gspec : garments) {
    const auto eq = gspec.find('=');
    check(eq != std::string::npos, "--garment expects <top|bottom>=<image>,<iuv>");
    const std::string label = gspec.substr(0, eq);
    const ImageIuvArg g = parse_image_iuv(gspec.substr(eq + 1), "--garment");
    transfer::GarmentSource src;
    src.image = data_io::load_image(g.image);
    src.iuv = data_io::load_iuv(g.iuv);
    if (label == "top")
      src.labels = {2};
    else if (label == "bottom")
      src.labels = {3};
    else
      throw ValidationError("unknown garment slot '" + label + "' (top or bottom)");
    spec.garments.push_back(std::move(src));
  }
  spec.target_iuv = data_io::load_iuv(trg_iuv);
  spec.target_mask = spec.target_iuv.foreground_mask();

  Rng rng(seed);
  Tensor out = transfer::tryon(*gen, *net, spec, seg, atlas,
                               posegen::noise_mode_from_string(noise), &rng);
  data_io::save_image(out_path, without_batch_dim(out));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& gen_path, const std::string& coordnet_path,
             const std::string& atlas_path, const std::string& manifest,
             const std::string& split, const std::string& out_csv, const std::string& noise,
             const std::string& plugin, const std::string& compare_a,
             const std::string& compare_b, const std::string& compare_mask) {
  if (!compare_a.empty()) {
    // direct image-pair comparison mode
    const Tensor a = data_io::load_image(compare_a);
    const Tensor b = data_io::load_image(compare_b);
    GridD mask = compare_mask.empty() ? GridD::Ones(a.dim(1), a.dim(2))
                                      : data_io::load_mask(compare_mask);
    metrics::MetricRow row;
    row.psnr = metrics::psnr_foreground(a, b, mask);
    row.ssim = metrics::ssim_foreground(a, b, mask);
    std::cout << "psnr " << row.psnr << " dB, ssim " << row.ssim << "\n";
    if (!out_csv.empty()) {
      trainer::EvalReport rep;
      rep.rows.push_back(row);
      write_metrics(out_csv, rep);
    }
    return 0;
  }

  uvgeom::MappingAtlas atlas = data_io::load_atlas(atlas_path);
  auto net = coordnet::CoordNet::load(coordnet_path);
  auto gen = posegen::Generator::load(gen_path);

  std::vector<trainer::EvalPair> pairs;
  for (const auto& r : records_for_split(manifest, split)) {
    data_io::PairData pair = data_io::load_pair(r, atlas.part_count);
    trainer::TrainSample s = trainer::make_train_sample(gen->config(), net.get(), pair, atlas);
    trainer::EvalPair e;
    e.inputs = std::move(s.inputs);
    e.trg_image = pair.trg_image;
    e.fg_mask = pair.trg_fg_mask;
    pairs.push_back(std::move(e));
  }

  std::shared_ptr<losses::FeatureExtractor> backend;
  if (!plugin.empty()) backend = losses::make_feature_backend(plugin);
  trainer::EvalReport report = trainer::evaluate(
      *gen, pairs, posegen::noise_mode_from_string(noise), backend.get());

  std::cout << "pairs " << report.rows.size() << ", mean foreground PSNR " << report.mean_psnr
            << " dB, mean SSIM " << report.mean_ssim << "\n";
  if (report.fid_available)
    std::cout << "FID (plugin embedding) " << *report.fid << "\n";
  else
    std::cout << "FID: unavailable (no embedding plugin configured)\n";
  if (!out_csv.empty()) write_metrics(out_csv, report);
  return 0;
}

int run_inspect_uv(const std::string& atlas_path, const std::string& src_img,
                   const std::string& src_iuv, const std::string& coordnet_path,
                   const std::string& out_prefix) {
  uvgeom::MappingAtlas atlas = data_io::load_atlas(atlas_path);
  const Tensor image = data_io::load_image(src_img);
  uvgeom::IUVMap iuv = data_io::load_iuv(src_iuv);
  iuv.validate(atlas.part_count);

  coordnet::SymmetryInputs fields = coordnet::symmetry_inputs(iuv, atlas);
  auto dump = [&](const uvgeom::CoordField& f, const std::string& tag) {
    data_io::save_image(out_prefix + "_" + tag + "_coords.ppm", coords_panel(f));
    data_io::save_image(out_prefix + "_" + tag + "_texture.ppm",
                        uvgeom::bilinear_sample(image, f));
  };
  dump(fields.base, "base");
  dump(fields.combined, "combined");
  if (!coordnet_path.empty()) {
    auto net = coordnet::CoordNet::load(coordnet_path);
    dump(net->complete(fields.combined), "inpainted");
  }
  std::cout << "wrote panels with prefix " << out_prefix << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pose-guided person image synthesis with UV correspondence warping"};
  app.require_subcommand(1);

  // make-fixtures
  auto* fix = app.add_subcommand("make-fixtures", "generate synthetic training fixtures");
  std::string fix_out = "fixtures";
  int fix_count = 4;
  std::uint64_t fix_seed = 1;
  double fix_difficulty = 0.5;
  int fix_size = 64;
  fix->add_option("--out", fix_out, "output directory");
  fix->add_option("--count", fix_count, "number of pairs");
  fix->add_option("--seed", fix_seed, "base seed");
  fix->add_option("--difficulty", fix_difficulty, "occlusion amount in [0,1]");
  fix->add_option("--size", fix_size, "image resolution");

  // train-coordnet
  auto* tc = app.add_subcommand("train-coordnet", "train the coordinate completion model");
  std::string tc_config, tc_data, tc_out = "coordnet.pwsckpt";
  int tc_steps = 0;
  tc->add_option("--config", tc_config, "run config JSON")->required();
  tc->add_option("--data", tc_data, "fixture/data directory")->required();
  tc->add_option("--out", tc_out, "output checkpoint");
  tc->add_option("--steps", tc_steps, "override training step count");

  // train-generator
  auto* tg = app.add_subcommand("train-generator", "train the pose-conditioned generator");
  std::string tg_config, tg_data, tg_coordnet, tg_out;
  tg->add_option("--config", tg_config, "run config JSON")->required();
  tg->add_option("--data", tg_data, "fixture/data directory (overrides config)");
  tg->add_option("--coordnet", tg_coordnet, "frozen coordnet checkpoint (overrides config)");
  tg->add_option("--out", tg_out, "output directory (overrides config)");

  // repose
  auto* rp = app.add_subcommand("repose", "re-render a person in a target pose");
  std::string rp_gen, rp_coordnet, rp_atlas, rp_src, rp_src_iuv, rp_trg_iuv, rp_out;
  std::string rp_noise = "zero";
  std::uint64_t rp_seed = 0;
  rp->add_option("--gen", rp_gen)->required();
  rp->add_option("--coordnet", rp_coordnet)->required();
  rp->add_option("--atlas", rp_atlas)->required();
  rp->add_option("--src", rp_src)->required();
  rp->add_option("--src-iuv", rp_src_iuv)->required();
  rp->add_option("--trg-iuv", rp_trg_iuv)->required();
  rp->add_option("--out", rp_out)->required();
  rp->add_option("--noise", rp_noise, "zero|fixed|random");
  rp->add_option("--seed", rp_seed);

  // tryon
  auto* to = app.add_subcommand("tryon", "garment transfer onto a target pose");
  std::string to_gen, to_coordnet, to_atlas, to_person, to_trg_iuv, to_out;
  std::string to_noise = "zero";
  std::uint64_t to_seed = 0;
  std::vector<std::string> to_garments;
  to->add_option("--gen", to_gen)->required();
  to->add_option("--coordnet", to_coordnet)->required();
  to->add_option("--atlas", to_atlas)->required();
  to->add_option("--person", to_person, "<image>,<iuv>")->required();
  to->add_option("--garment", to_garments, "<top|bottom>=<image>,<iuv>");
  to->add_option("--trg-iuv", to_trg_iuv)->required();
  to->add_option("--out", to_out)->required();
  to->add_option("--noise", to_noise, "zero|fixed|random");
  to->add_option("--seed", to_seed);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate reposing quality");
  std::string ev_gen, ev_coordnet, ev_atlas, ev_manifest, ev_split = "test";
  std::string ev_out, ev_noise = "zero", ev_plugin;
  std::string ev_cmp_a, ev_cmp_b, ev_cmp_mask;
  ev->add_option("--gen", ev_gen);
  ev->add_option("--coordnet", ev_coordnet);
  ev->add_option("--atlas", ev_atlas);
  ev->add_option("--manifest", ev_manifest);
  ev->add_option("--split", ev_split);
  ev->add_option("--out", ev_out, "CSV output path");
  ev->add_option("--noise", ev_noise, "zero|fixed");
  ev->add_option("--plugin", ev_plugin, "embedding plugin for FID/LPIPS");
  ev->add_option("--compare-a", ev_cmp_a, "direct mode: first image");
  ev->add_option("--compare-b", ev_cmp_b, "direct mode: second image");
  ev->add_option("--compare-mask", ev_cmp_mask, "direct mode: foreground mask");

  // inspect-uv
  auto* iu = app.add_subcommand("inspect-uv", "render UV-space coordinate panels");
  std::string iu_atlas, iu_src, iu_iuv, iu_coordnet, iu_out = "inspect";
  iu->add_option("--atlas", iu_atlas)->required();
  iu->add_option("--src", iu_src)->required();
  iu->add_option("--src-iuv", iu_iuv)->required();
  iu->add_option("--coordnet", iu_coordnet, "optional: also render the inpainted field");
  iu->add_option("--out", iu_out, "output path prefix");

  try {
    app.parse(argc, argv);
    if (fix->parsed())
      return run_make_fixtures(fix_out, fix_count, fix_seed, fix_difficulty, fix_size);
    if (tc->parsed()) return run_train_coordnet(tc_config, tc_data, tc_out, tc_steps);
    if (tg->parsed()) return run_train_generator(tg_config, tg_data, tg_coordnet, tg_out);
    if (rp->parsed())
      return run_repose(rp_gen, rp_coordnet, rp_atlas, rp_src, rp_src_iuv, rp_trg_iuv, rp_out,
                        rp_noise, rp_seed);
    if (to->parsed())
      return run_tryon(to_gen, to_coordnet, to_atlas, to_person, to_garments, to_trg_iuv,
                       to_out, to_noise, to_seed);
    if (ev->parsed())
      return run_eval(ev_gen, ev_coordnet, ev_atlas, ev_manifest, ev_split, ev_out, ev_noise,
                      ev_plugin, ev_cmp_a, ev_cmp_b, ev_cmp_mask);
    if (iu->parsed()) return run_inspect_uv(iu_atlas, iu_src, iu_iuv, iu_coordnet, iu_out);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
