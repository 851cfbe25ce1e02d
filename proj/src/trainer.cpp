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

#include "posewarp/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "posewarp/data_io.hpp"

namespace posewarp::trainer {

using json = nlohmann::json;
namespace ad = posewarp::ad;

Phase phase_from_string(const std::string& s) {
  if (s == "foreground") return Phase::kForeground;
  if (s == "global") return Phase::kGlobal;
  throw ValidationError("unknown training phase: " + s);
}

std::string to_string(Phase p) { return p == Phase::kForeground ? "foreground" : "global"; }

void TrainConfig::validate() const {
  check(g_ratio > 0.0 && g_ratio <= 1.0, "TrainConfig: g_ratio outside (0,1]");
  check(d_ratio > 0.0 && d_ratio <= 1.0, "TrainConfig: d_ratio outside (0,1]");
  check(batch_size >= 1, "TrainConfig: batch_size must be positive");
  check(d_reg_interval >= 1 && g_reg_interval >= 1, "TrainConfig: bad reg interval");
}

OptimizerSettings generator_settings(const TrainConfig& cfg) {
  return {cfg.g_ratio * cfg.lr_base, 0.0, std::pow(0.99, cfg.g_ratio)};
}

OptimizerSettings discriminator_settings(const TrainConfig& cfg) {
  return {cfg.d_ratio * cfg.lr_base, 0.0, std::pow(0.99, cfg.d_ratio)};
}

std::pair<nn::Adam, nn::Adam> make_optimizers(const TrainConfig& cfg) {
  cfg.validate();
  const OptimizerSettings gs = generator_settings(cfg);
  const OptimizerSettings ds = discriminator_settings(cfg);
  return {nn::Adam(gs.lr, gs.beta1, gs.beta2), nn::Adam(ds.lr, ds.beta1, ds.beta2)};
}

TrainSample make_train_sample(const posegen::GeneratorConfig& gen_cfg,
                              coordnet::CoordNet* frozen_coordnet,
                              const data_io::PairData& pair,
                              const uvgeom::MappingAtlas& atlas) {
  coordnet::SymmetryInputs fields = coordnet::symmetry_inputs(pair.src_iuv, atlas);

  uvgeom::CoordField field;
  switch (gen_cfg.appearance_source) {
    case posegen::AppearanceSource::kIncompleteUv:
      field = fields.combined;
      break;
    case posegen::AppearanceSource::kCompleteUv: {
      check(frozen_coordnet != nullptr, "make_train_sample: completed UV needs a coordnet");
      field = frozen_coordnet->complete(fields.combined);
      break;
    }
    case posegen::AppearanceSource::kSourceImage: {
      check(frozen_coordnet != nullptr, "make_train_sample: target warp needs a coordnet");
      uvgeom::CoordField dense = frozen_coordnet->complete(fields.combined);
      field = uvgeom::uv_to_image(dense, pair.trg_iuv, atlas);
      break;
    }
  }

  TrainSample s;
  s.inputs = posegen::build_gen_inputs(gen_cfg, pair.src_image, pair.trg_iuv,
                                       pair.trg_fg_mask, field, atlas);
  s.trg_image = pair.trg_image;
  s.trg_mask = pair.trg_fg_mask;
  return s;
}

GanTrainer::GanTrainer(posegen::Generator& gen, posegen::Discriminator& disc,
                       losses::PerceptualConfig perceptual_cfg,
                       losses::FaceLossConfig face_cfg, TrainConfig cfg)
    : gen_(gen),
      disc_(disc),
      perceptual_cfg_(std::move(perceptual_cfg)),
      face_cfg_(std::move(face_cfg)),
      cfg_(cfg),
      adam_g_(generator_settings(cfg).lr, 0.0, generator_settings(cfg).beta2),
      adam_d_(discriminator_settings(cfg).lr, 0.0, discriminator_settings(cfg).beta2),
      noise_rng_(cfg.seed ^ 0xD1B54A32D192ED03ULL) {
  cfg_.validate();
  perceptual_cfg_.validate();
}

Tensor GanTrainer::composite_for_discriminator(const Tensor& image, const GridD& mask) const {
  if (cfg_.phase == Phase::kGlobal) return image;
  // neutral background (0 in [-1,1]) behind the foreground
  Tensor out = image;
  const int h = image.dim(2), w = image.dim(3);
  for (int i = 0; i < image.dim(0); ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          if (mask(y, x) != 1.0) out.at(i, c, y, x) = 0.0;
  return out;
}

ad::Var GanTrainer::composite_for_discriminator(ad::Graph&, ad::Var image,
                                                const GridD& mask) const {
  if (cfg_.phase == Phase::kGlobal) return image;
  Tensor m({image.value().dim(0), 3, static_cast<int>(mask.rows()),
            static_cast<int>(mask.cols())});
  for (int i = 0; i < image.value().dim(0); ++i)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < mask.rows(); ++y)
        for (int x = 0; x < mask.cols(); ++x) m.at(i, c, y, x) = mask(y, x);
  return ad::mul_const(image, m);
}

StepStats GanTrainer::step(const std::vector<TrainSample>& batch) {
  check(!batch.empty(), "GanTrainer::step: empty batch");
  StepStats stats;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  nn::ParamRefs g_params = gen_.parameters();
  nn::ParamRefs d_params = disc_.parameters();

  // ---- discriminator step ----
  if (cfg_.adversarial) {
    // fakes are produced without recording gradients
    std::vector<Tensor> fakes;
    for (const TrainSample& s : batch)
      fakes.push_back(gen_.generate(s.inputs, cfg_.noise_mode, &noise_rng_));

    nn::zero_grad(d_params);
    ad::Graph g;
    ad::Var d_loss;
    std::vector<Tensor> reals_c;
    std::vector<Tensor> conds;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const TrainSample& s = batch[i];
      const Tensor real_c =
          composite_for_discriminator(with_batch_dim(s.trg_image), s.trg_mask);
      const Tensor fake_c = composite_for_discriminator(fakes[i], s.trg_mask);
      reals_c.push_back(real_c);
      conds.push_back(s.inputs.cond_input);
      ad::Var sr = disc_.score(g, g.constant(real_c), s.inputs.cond_input);
      ad::Var sf = disc_.score(g, g.constant(fake_c), s.inputs.cond_input);
      ad::Var term = losses::adversarial_d(sr, sf);
      d_loss = d_loss.defined() ? ad::add(d_loss, term) : term;
    }
    d_loss = ad::mul_scalar(d_loss, inv_b);

    ++d_step_count_;
    if (d_step_count_ % cfg_.d_reg_interval == 0) {
      // lazy R1 on the real inputs, scaled by the interval
      Tensor real_stack = reals_c[0];
      Tensor cond_stack = conds[0];
      if (batch.size() > 1) {
        std::vector<int> shape = reals_c[0].shape();
        shape[0] = static_cast<int>(batch.size());
        real_stack = Tensor(shape);
        std::vector<int> cshape = conds[0].shape();
        cshape[0] = static_cast<int>(batch.size());
        cond_stack = Tensor(cshape);
        for (std::size_t i = 0; i < batch.size(); ++i) {
          std::copy(reals_c[i].data(), reals_c[i].data() + reals_c[i].numel(),
                    real_stack.data() + static_cast<Eigen::Index>(i) * reals_c[i].numel());
          std::copy(conds[i].data(), conds[i].data() + conds[i].numel(),
                    cond_stack.data() + static_cast<Eigen::Index>(i) * conds[i].numel());
        }
      }
      losses::ConditionedScorer scorer(disc_, cond_stack);
      ad::Var r1 = losses::r1_penalty_for_training(g, scorer, real_stack, cfg_.r1_gamma);
      stats.r1 = r1.value()[0];
      d_loss = ad::add(d_loss, ad::mul_scalar(r1, static_cast<double>(cfg_.d_reg_interval)));
      ++r1_count_;
    }

    stats.d_loss = d_loss.value()[0];
    if (!std::isfinite(stats.d_loss))
      throw NumericError("discriminator step: non-finite loss");
    g.backward(d_loss);
    adam_d_.step(d_params);
  }

  // ---- generator step ----
  nn::zero_grad(g_params);
  nn::zero_grad(d_params);  // scoring fakes touches D's gradients too
  ad::Graph g;
  ad::Var g_loss;
  double adv_acc = 0, l1_acc = 0, vgg_acc = 0, face_acc = 0;
  int face_count = 0;
  for (const TrainSample& s : batch) {
    ad::Var img = gen_.forward(g, s.inputs, cfg_.noise_mode, &noise_rng_);
    ad::Var l1 = losses::l1_foreground(img, s.trg_image, s.trg_mask);
    ad::Var vgg = losses::perceptual(img, s.trg_image, s.trg_mask, perceptual_cfg_);
    std::optional<ad::Var> face;
    if (cfg_.use_face && face_cfg_.enabled)
      face = losses::face_identity(img, s.trg_image, face_cfg_);

    ad::Var adv;
    if (cfg_.adversarial) {
      ad::Var fake_c = composite_for_discriminator(g, img, s.trg_mask);
      adv = losses::adversarial_g(disc_.score(g, fake_c, s.inputs.cond_input));
    } else {
      adv = g.constant(Tensor::zeros({1}));
    }

    ad::Var total = losses::total_generator_loss(adv, l1, vgg, face);
    g_loss = g_loss.defined() ? ad::add(g_loss, total) : total;

    adv_acc += adv.value()[0];
    l1_acc += l1.value()[0];
    vgg_acc += vgg.value()[0];
    if (face.has_value()) {
      face_acc += face->value()[0];
      ++face_count;
    }
  }
  g_loss = ad::mul_scalar(g_loss, inv_b);

  ++step_count_;
  if (cfg_.adversarial && step_count_ % cfg_.g_reg_interval == 0)
    ++g_reg_count_;  // regularization hook: this generator has no lazy term

  stats.g_loss = g_loss.value()[0];
  stats.adv = adv_acc * inv_b;
  stats.l1 = l1_acc * inv_b;
  stats.vgg = vgg_acc * inv_b;
  stats.face = face_count > 0 ? face_acc * inv_b : 0.0;
  stats.face_skipped = face_count == 0;
  if (!std::isfinite(stats.g_loss)) throw NumericError("generator step: non-finite loss");
  g.backward(g_loss);
  adam_g_.step(g_params);

  history_.push_back(stats);
  return stats;
}

void GanTrainer::save_state(const std::string& path) const {
  json meta;
  meta["kind"] = "train_state";
  meta["step_count"] = step_count_;
  meta["d_step_count"] = d_step_count_;
  meta["r1_count"] = r1_count_;
  meta["g_reg_count"] = g_reg_count_;
  meta["adam_g_steps"] = adam_g_.steps_taken();
  meta["adam_d_steps"] = adam_d_.steps_taken();
  meta["noise_rng"] = noise_rng_.serialize();

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  auto add_params = [&tensors](const nn::ParamRefs& params) {
    for (nn::Parameter* p : params) {
      p->ensure_state();
      tensors.emplace_back(p->name, &p->value);
      tensors.emplace_back(p->name + ".adam_m", &p->m);
      tensors.emplace_back(p->name + ".adam_v", &p->v);
    }
  };
  auto* self = const_cast<GanTrainer*>(this);
  add_params(self->gen_.parameters());
  add_params(self->disc_.parameters());
  data_io::save_checkpoint(path, meta.dump(), tensors);
}

void GanTrainer::load_state(const std::string& path) {
  data_io::Checkpoint ckpt = data_io::load_checkpoint(path);
  json meta = json::parse(ckpt.meta_json);
  if (meta.value("kind", "") != "train_state")
    throw IoError("not a training-state checkpoint: " + path);
  step_count_ = meta.at("step_count").get<long>();
  d_step_count_ = meta.at("d_step_count").get<long>();
  r1_count_ = meta.at("r1_count").get<long>();
  g_reg_count_ = meta.at("g_reg_count").get<long>();
  adam_g_.set_steps_taken(meta.at("adam_g_steps").get<long>());
  adam_d_.set_steps_taken(meta.at("adam_d_steps").get<long>());
  noise_rng_.deserialize(meta.at("noise_rng").get<std::string>());

  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : ckpt.tensors) by_name.emplace(name, std::move(t));
  auto restore = [&by_name, &path](const nn::ParamRefs& params) {
    for (nn::Parameter* p : params) {
      auto it = by_name.find(p->name);
      if (it == by_name.end()) throw IoError("train state lacks tensor " + p->name + " in " + path);
      p->value = it->second;
      p->m = by_name.at(p->name + ".adam_m");
      p->v = by_name.at(p->name + ".adam_v");
      p->grad = Tensor::zeros(p->value.shape());
    }
  };
  restore(gen_.parameters());
  restore(disc_.parameters());
}

PhaseResult train_phase(GanTrainer& trainer, posegen::Generator& gen,
                        posegen::Discriminator& disc,
                        const std::vector<TrainSample>& samples, const TrainConfig& cfg,
                        const std::string& out_dir) {
  check(!samples.empty(), "train_phase: no samples");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Rng order_rng(cfg.seed);
  PhaseResult result;
  result.best_psnr = -1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(
                    0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t k = 0; k < order.size(); k += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<TrainSample> batch;
      for (std::size_t j = k;
           j < std::min(order.size(), k + static_cast<std::size_t>(cfg.batch_size)); ++j)
        batch.push_back(samples[order[j]]);
      trainer.step(batch);
      ++result.steps;
    }

    // epoch checkpoint plus best-PSNR snapshot over the training pairs
    double psnr_sum = 0.0;
    for (const TrainSample& s : samples) {
      Tensor out = gen.generate(s.inputs, posegen::NoiseMode::kZero);
      psnr_sum += metrics::psnr_foreground(without_batch_dim(out), s.trg_image, s.trg_mask);
    }
    const double mean_psnr = psnr_sum / static_cast<double>(samples.size());
    const std::string epoch_path =
        out_dir + "/state_epoch" + std::to_string(epoch) + ".pwsckpt";
    trainer.save_state(epoch_path);
    gen.save(out_dir + "/generator_epoch" + std::to_string(epoch) + ".pwsckpt");
    disc.save(out_dir + "/discriminator_epoch" + std::to_string(epoch) + ".pwsckpt");
    result.last_checkpoint = epoch_path;
    if (mean_psnr > result.best_psnr) {
      result.best_psnr = mean_psnr;
      gen.save(out_dir + "/generator_best.pwsckpt");
    }
  }
  return result;
}

EvalReport evaluate(posegen::Generator& gen, const std::vector<EvalPair>& pairs,
                    posegen::NoiseMode noise_mode,
                    losses::FeatureExtractor* embedding_plugin) {
  EvalReport report;
  check(!pairs.empty(), "evaluate: no pairs");
  check(noise_mode != posegen::NoiseMode::kRandom,
        "evaluate: use a deterministic noise mode");

  std::vector<Eigen::VectorXd> emb_fake, emb_real;
  for (const EvalPair& p : pairs) {
    Tensor out = without_batch_dim(gen.generate(p.inputs, noise_mode));
    metrics::MetricRow row;
    row.psnr = metrics::psnr_foreground(out, p.trg_image, p.fg_mask);
    row.ssim = metrics::ssim_foreground(out, p.trg_image, p.fg_mask);

    if (embedding_plugin) {
      auto embed = [&](const Tensor& img) {
        ad::Graph g;
        const std::vector<int> deepest = {embedding_plugin->available_layers().back()};
        ad::Var feat =
            embedding_plugin->features(g, g.constant(with_batch_dim(img)), deepest)[0];
        ad::Var pooled = ad::global_avg_pool(feat);
        Eigen::VectorXd v(pooled.value().numel());
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = pooled.value()[i];
        return v;
      };
      emb_fake.push_back(embed(out));
      emb_real.push_back(embed(p.trg_image));
      // feature-space distance on this pair
      ad::Graph g;
      losses::PerceptualConfig pc;
      pc.backend = std::shared_ptr<losses::FeatureExtractor>(embedding_plugin,
                                                             [](losses::FeatureExtractor*) {});
      GridD full = GridD::Ones(p.trg_image.dim(1), p.trg_image.dim(2));
      row.lpips =
          losses::perceptual(g.constant(with_batch_dim(out)), p.trg_image, full, pc).value()[0];
    }
    report.mean_psnr += row.psnr;
    report.mean_ssim += row.ssim;
    report.rows.push_back(row);
  }
  report.mean_psnr /= static_cast<double>(pairs.size());
  report.mean_ssim /= static_cast<double>(pairs.size());

  if (embedding_plugin && emb_fake.size() >= 2) {
    const Eigen::Index d = emb_fake[0].size();
    auto moments = [d](const std::vector<Eigen::VectorXd>& xs) {
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
      for (const auto& x : xs) mu += x;
      mu /= static_cast<double>(xs.size());
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (const auto& x : xs) cov += (x - mu) * (x - mu).transpose();
      cov /= std::max<double>(1.0, static_cast<double>(xs.size()) - 1.0);
      return std::make_pair(mu, cov);
    };
    auto [mf, cf] = moments(emb_fake);
    auto [mr, cr] = moments(emb_real);
    report.fid = metrics::frechet_distance(mf, cf, mr, cr);
    report.fid_available = true;
  }
  return report;
}

}  // namespace posewarp::trainer
