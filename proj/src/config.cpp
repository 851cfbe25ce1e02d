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

#include "posewarp/config.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "posewarp/data_io.hpp"

namespace posewarp::config {

using json = nlohmann::json;

namespace {

// Strict section reader: every present key must be consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    check(j.is_object(), "config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->get<T>();
      } catch (const json::exception&) {
        throw ValidationError("config key '" + name_ + "." + key + "' has the wrong type");
      }
      consumed_.insert(key);
    }
  }

  bool has(const char* key) {
    if (j_.contains(key)) {
      consumed_.insert(key);
      return true;
    }
    return false;
  }

  const json& raw(const char* key) {
    consumed_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!consumed_.count(it.key()))
        throw ValidationError("unknown config key '" + name_ + "." + it.key() + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> consumed_;
};

double parse_epsilon(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    // the quantity is quoted ambiguously in places; both readings selectable
    if (s == "e^-8" || s == "e**-8") return std::exp(-8.0);
    if (s == "1e-8") return 1e-8;
    throw ValidationError("losses.face_epsilon: unknown spelling '" + s + "'");
  }
  throw ValidationError("losses.face_epsilon must be a number or a known string");
}

}  // namespace

uvgeom::MappingAtlas AtlasConfig::build_or_load() const {
  if (file.has_value()) return data_io::load_atlas(*file);
  return uvgeom::build_synthetic_atlas(parts, uv_resolution);
}

losses::PerceptualConfig LossesConfig::perceptual() const {
  losses::PerceptualConfig cfg;
  cfg.layer_ids = perceptual_layers;
  cfg.layer_weights = perceptual_weights;
  cfg.backend = losses::make_feature_backend(perceptual_backend);
  cfg.validate();
  return cfg;
}

losses::FaceLossConfig LossesConfig::face() const {
  losses::FaceLossConfig cfg = losses::FaceLossConfig::desk_default();
  cfg.enabled = face_enabled;
  cfg.epsilon = face_epsilon;
  return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  check(root.is_object(), "config root must be an object");
  RunConfig cfg;
  std::set<std::string> known = {"atlas", "coordnet", "generator", "losses", "trainer", "data"};
  for (auto it = root.begin(); it != root.end(); ++it)
    if (!known.count(it.key()))
      throw ValidationError("unknown config section '" + it.key() + "'");

  if (root.contains("atlas")) {
    Section s(root["atlas"], "atlas");
    std::string file;
    s.get("file", file);
    if (!file.empty()) cfg.atlas.file = file;
    s.get("parts", cfg.atlas.parts);
    if (s.has("uv_resolution")) {
      const json& r = root["atlas"]["uv_resolution"];
      check(r.is_array() && r.size() == 2, "atlas.uv_resolution must be [H, W]");
      cfg.atlas.uv_resolution = {r[0].get<int>(), r[1].get<int>()};
    }
    s.finish();
  }

  if (root.contains("coordnet")) {
    Section s(root["coordnet"], "coordnet");
    s.get("base_channels", cfg.coordnet.base_channels);
    s.get("depth", cfg.coordnet.depth);
    s.get("gated", cfg.coordnet.gated);
    s.get("lambda_mirrored", cfg.coordnet.lambda_mirrored);
    s.get("lr", cfg.coordnet.lr);
    s.get("beta1", cfg.coordnet.beta1);
    s.get("beta2", cfg.coordnet.beta2);
    s.get("seed", cfg.coordnet.seed);
    s.get("steps", cfg.coordnet_steps);
    s.finish();
  }
  // the coordnet runs at atlas resolution
  cfg.coordnet.uv_height = cfg.atlas.uv_resolution.first;
  cfg.coordnet.uv_width = cfg.atlas.uv_resolution.second;

  if (root.contains("generator")) {
    Section s(root["generator"], "generator");
    s.get("output_resolution", cfg.generator.output_resolution);
    s.get("base_resolution", cfg.generator.base_resolution);
    s.get("channel_schedule", cfg.generator.channel_schedule);
    s.get("fpn_channels", cfg.generator.fpn_channels);
    s.get("seed", cfg.generator.seed);
    std::string mode;
    s.get("modulation_mode", mode);
    if (!mode.empty()) cfg.generator.modulation_mode = posegen::modulation_mode_from_string(mode);
    std::string source;
    s.get("appearance_source", source);
    if (!source.empty())
      cfg.generator.appearance_source = posegen::appearance_source_from_string(source);
    s.finish();
  }

  if (root.contains("losses")) {
    Section s(root["losses"], "losses");
    s.get("perceptual_backend", cfg.losses.perceptual_backend);
    s.get("perceptual_layers", cfg.losses.perceptual_layers);
    s.get("perceptual_weights", cfg.losses.perceptual_weights);
    s.get("face_enabled", cfg.losses.face_enabled);
    if (s.has("face_epsilon")) cfg.losses.face_epsilon = parse_epsilon(root["losses"]["face_epsilon"]);
    s.get("r1_gamma", cfg.losses.r1_gamma);
    s.finish();
  }

  if (root.contains("trainer")) {
    Section s(root["trainer"], "trainer");
    std::string phase;
    s.get("phase", phase);
    if (!phase.empty()) cfg.trainer.phase = trainer::phase_from_string(phase);
    s.get("lr_base", cfg.trainer.lr_base);
    s.get("g_ratio", cfg.trainer.g_ratio);
    s.get("d_ratio", cfg.trainer.d_ratio);
    s.get("g_reg_interval", cfg.trainer.g_reg_interval);
    s.get("d_reg_interval", cfg.trainer.d_reg_interval);
    s.get("batch_size", cfg.trainer.batch_size);
    s.get("epochs", cfg.trainer.epochs);
    s.get("seed", cfg.trainer.seed);
    s.get("adversarial", cfg.trainer.adversarial);
    s.get("use_face", cfg.trainer.use_face);
    std::string noise;
    s.get("noise_mode", noise);
    if (!noise.empty()) cfg.trainer.noise_mode = posegen::noise_mode_from_string(noise);
    s.finish();
  }
  cfg.trainer.r1_gamma = cfg.losses.r1_gamma;

  if (root.contains("data")) {
    Section s(root["data"], "data");
    s.get("manifest", cfg.data.manifest);
    s.get("out_dir", cfg.data.out_dir);
    s.get("coordnet_checkpoint", cfg.data.coordnet_checkpoint);
    s.get("split", cfg.data.split);
    s.finish();
  }

  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace posewarp::config
