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

#ifndef POSEWARP_TRAINER_HPP
#define POSEWARP_TRAINER_HPP

#include <optional>
#include <string>
#include <vector>

#include "posewarp/coordnet.hpp"
#include "posewarp/losses.hpp"
#include "posewarp/metrics.hpp"
#include "posewarp/posegen.hpp"

namespace posewarp::trainer {

enum class Phase { kForeground, kGlobal };
Phase phase_from_string(const std::string& s);
std::string to_string(Phase p);

struct TrainConfig {
  Phase phase = Phase::kForeground;
  double lr_base = 0.002;
  double g_ratio = 4.0 / 5.0;
  double d_ratio = 16.0 / 17.0;
  int g_reg_interval = 4;
  int d_reg_interval = 16;
  double r1_gamma = 1.0;
  int batch_size = 1;
  int epochs = 1;
  std::uint64_t seed = 1;
  bool adversarial = true;  // reconstruction-only when false
  bool use_face = true;
  posegen::NoiseMode noise_mode = posegen::NoiseMode::kRandom;

  void validate() const;
};

struct OptimizerSettings {
  double lr = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
};

// Lazy-regularization compensated settings: lr = ratio * lr_base and
// betas = (0, 0.99^ratio).
OptimizerSettings generator_settings(const TrainConfig& cfg);
OptimizerSettings discriminator_settings(const TrainConfig& cfg);
std::pair<nn::Adam, nn::Adam> make_optimizers(const TrainConfig& cfg);

struct TrainSample {
  posegen::GenInputs inputs;
  Tensor trg_image;  // [3,R,R]
  GridD trg_mask;    // reconstruction-loss foreground
};

// Prepares one training/eval sample: runs the frozen coordinate model on the
// source pose and assembles generator inputs per the configured appearance
// source.
TrainSample make_train_sample(const posegen::GeneratorConfig& gen_cfg,
                              coordnet::CoordNet* frozen_coordnet,
                              const data_io::PairData& pair,
                              const uvgeom::MappingAtlas& atlas);

struct StepStats {
  double d_loss = 0.0;
  double g_loss = 0.0;
  double adv = 0.0;
  double l1 = 0.0;
  double vgg = 0.0;
  double face = 0.0;  // 0 when skipped
  bool face_skipped = false;
  double r1 = 0.0;  // penalty value when applied this step, else 0
};

class GanTrainer {
 public:
  GanTrainer(posegen::Generator& gen, posegen::Discriminator& disc,
             losses::PerceptualConfig perceptual_cfg, losses::FaceLossConfig face_cfg,
             TrainConfig cfg);

  StepStats step(const std::vector<TrainSample>& batch);

  long steps_taken() const { return step_count_; }
  long d_steps_taken() const { return d_step_count_; }
  long r1_applications() const { return r1_count_; }
  long g_reg_events() const { return g_reg_count_; }
  const std::vector<StepStats>& history() const { return history_; }
  const nn::Adam& g_opt() const { return adam_g_; }
  const nn::Adam& d_opt() const { return adam_d_; }

  void save_state(const std::string& path) const;
  void load_state(const std::string& path);

 private:
  Tensor composite_for_discriminator(const Tensor& image, const GridD& mask) const;
  ad::Var composite_for_discriminator(ad::Graph& g, ad::Var image, const GridD& mask) const;

  posegen::Generator& gen_;
  posegen::Discriminator& disc_;
  losses::PerceptualConfig perceptual_cfg_;
  losses::FaceLossConfig face_cfg_;
  TrainConfig cfg_;
  nn::Adam adam_g_;
  nn::Adam adam_d_;
  Rng noise_rng_;
  long step_count_ = 0;
  long d_step_count_ = 0;
  long r1_count_ = 0;
  long g_reg_count_ = 0;
  std::vector<StepStats> history_;
};

// One phase over the dataset: alternating D/G steps over shuffled pairs,
// checkpointing each epoch and keeping the best-PSNR snapshot.
struct PhaseResult {
  int steps = 0;
  double best_psnr = 0.0;
  std::string last_checkpoint;
};

PhaseResult train_phase(GanTrainer& trainer, posegen::Generator& gen,
                        posegen::Discriminator& disc,
                        const std::vector<TrainSample>& samples, const TrainConfig& cfg,
                        const std::string& out_dir);

// --- evaluation -------------------------------------------------------------------------

struct EvalPair {
  posegen::GenInputs inputs;
  Tensor trg_image;
  GridD fg_mask;
};

struct EvalReport {
  std::vector<metrics::MetricRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::optional<double> fid;
  bool fid_available = false;
};

// Foreground PSNR/SSIM natively; FID only when an embedding plugin backend is
// supplied, otherwise reported unavailable.
EvalReport evaluate(posegen::Generator& gen, const std::vector<EvalPair>& pairs,
                    posegen::NoiseMode noise_mode,
                    losses::FeatureExtractor* embedding_plugin = nullptr);

}  // namespace posewarp::trainer

#endif  // POSEWARP_TRAINER_HPP
