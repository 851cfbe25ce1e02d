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

#ifndef POSEWARP_CONFIG_HPP
#define POSEWARP_CONFIG_HPP

#include <optional>
#include <string>

#include "posewarp/coordnet.hpp"
#include "posewarp/losses.hpp"
#include "posewarp/posegen.hpp"
#include "posewarp/trainer.hpp"

namespace posewarp::config {

struct AtlasConfig {
  std::optional<std::string> file;  // load from archive when set
  int parts = 3;
  std::pair<int, int> uv_resolution = {32, 32};

  uvgeom::MappingAtlas build_or_load() const;
};

struct LossesConfig {
  std::string perceptual_backend = "random64";
  std::vector<int> perceptual_layers = {1, 6, 11, 20, 29};
  std::vector<double> perceptual_weights = {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
  bool face_enabled = true;
  double face_epsilon = 1e-8;
  double r1_gamma = 1.0;

  losses::PerceptualConfig perceptual() const;
  losses::FaceLossConfig face() const;
};

struct DataConfig {
  std::string manifest;
  std::string out_dir = "runs";
  std::string coordnet_checkpoint;
  std::string split = "train";
};

// The whole run file: unknown keys anywhere are rejected.
struct RunConfig {
  AtlasConfig atlas;
  coordnet::CoordNetConfig coordnet;
  int coordnet_steps = 500;
  posegen::GeneratorConfig generator;
  LossesConfig losses;
  trainer::TrainConfig trainer;
  DataConfig data;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace posewarp::config

#endif  // POSEWARP_CONFIG_HPP
