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

#include "posewarp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "posewarp/data_io.hpp"

namespace posewarp::losses {

namespace ad = posewarp::ad;

// --- feature backends ---------------------------------------------------------------

std::vector<ad::Var> ConvStackExtractor::features(ad::Graph& g, ad::Var image,
                                                  const std::vector<int>& layer_ids) {
  const std::vector<int> taps = available_layers();
  std::vector<ad::Var> out(layer_ids.size());
  ad::Var x = image;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    // halve resolution between stages while it stays divisible
    if (l > 0 && x.value().dim(2) % 2 == 0 && x.value().dim(3) % 2 == 0 &&
        x.value().dim(2) > 1 && x.value().dim(3) > 1)
      x = ad::avg_pool2(x);
    x = ad::leaky_relu(
        ad::conv2d(x, g.constant(weights_[l]), g.constant(biases_[l]), 1, 1), 0.2);
    for (std::size_t i = 0; i < layer_ids.size(); ++i)
      if (layer_ids[i] == taps[l]) out[i] = x;
  }
  for (std::size_t i = 0; i < layer_ids.size(); ++i)
    if (!out[i].defined())
      throw ValidationError("feature backend '" + name() + "' has no layer " +
                            std::to_string(layer_ids[i]));
  return out;
}

RandomFeatureExtractor::RandomFeatureExtractor() {
  Rng rng(64);
  const int chans[6] = {3, 16, 24, 32, 32, 32};
  for (int l = 0; l < 5; ++l) {
    const int fan_in = chans[l] * 9;
    weights_.push_back(nn::kaiming_normal({chans[l + 1], chans[l], 3, 3}, fan_in, rng));
    biases_.push_back(Tensor::zeros({chans[l + 1]}));
  }
}

ExternalFeatureExtractor::ExternalFeatureExtractor(const std::string& path) : path_(path) {
  data_io::Checkpoint ckpt = data_io::load_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : ckpt.tensors) by_name.emplace(name, std::move(t));
  int in_ch = 3;
  for (int l = 0; l < 5; ++l) {
    const std::string stem = "layer" + std::to_string(l);
    auto wi = by_name.find(stem + ".w");
    auto bi = by_name.find(stem + ".b");
    if (wi == by_name.end() || bi == by_name.end())
      throw IoError("feature backend checkpoint lacks " + stem + " in " + path);
    const Tensor& w = wi->second;
    check(w.rank() == 4 && w.dim(1) == in_ch && w.dim(2) == 3 && w.dim(3) == 3,
          "feature backend: unexpected shape for " + stem + ".w");
    check(bi->second.rank() == 1 && bi->second.dim(0) == w.dim(0),
          "feature backend: unexpected shape for " + stem + ".b");
    in_ch = w.dim(0);
    weights_.push_back(w);
    biases_.push_back(bi->second);
  }
}

std::shared_ptr<FeatureExtractor> make_feature_backend(const std::string& spec) {
  if (spec == "random64") return std::make_shared<RandomFeatureExtractor>();
  if (spec.rfind("external:", 0) == 0)
    return std::make_shared<ExternalFeatureExtractor>(spec.substr(9));
  throw ValidationError("unknown perceptual backend: " + spec);
}

void PerceptualConfig::validate() const {
  check(layer_ids.size() == layer_weights.size(),
        "PerceptualConfig: layer_ids and layer_weights must align");
  check(backend != nullptr, "PerceptualConfig: no backend configured");
}

// --- face plumbing ---------------------------------------------------------------------

std::optional<FaceBox> CenterCropDetector::detect(const Tensor& image) const {
  check(image.rank() == 3 && image.dim(0) == 3, "CenterCropDetector: expected [3,H,W]");
  const int h = image.dim(1), w = image.dim(2);
  const int side = std::max(2, static_cast<int>(std::lround(fraction_ * std::min(h, w))));
  FaceBox box;
  box.h = side;
  box.w = side;
  box.y0 = (h - side) / 2;
  box.x0 = (w - side) / 2;
  double activity = 0.0;
  for (int y = box.y0; y < box.y0 + side; ++y)
    for (int x = box.x0; x < box.x0 + side; ++x)
      for (int c = 0; c < 3; ++c) activity += std::abs(image.at(c, y, x));
  activity /= 3.0 * side * side;
  if (activity < min_activity_) return std::nullopt;
  return box;
}

TinyFaceEmbedder::TinyFaceEmbedder() {
  Rng rng(1337);
  weights_.push_back(nn::kaiming_normal({8, 3, 3, 3}, 27, rng));
  biases_.push_back(Tensor::zeros({8}));
  weights_.push_back(nn::kaiming_normal({16, 8, 3, 3}, 72, rng));
  biases_.push_back(Tensor::zeros({16}));
}

ad::Var TinyFaceEmbedder::embed(ad::Graph& g, ad::Var face) {
  check(face.value().dim(2) == input_resolution() && face.value().dim(3) == input_resolution(),
        "TinyFaceEmbedder: face crop not at embedder resolution");
  ad::Var x = ad::leaky_relu(
      ad::conv2d(face, g.constant(weights_[0]), g.constant(biases_[0]), 1, 1), 0.2);
  x = ad::avg_pool2(x);
  x = ad::leaky_relu(
      ad::conv2d(x, g.constant(weights_[1]), g.constant(biases_[1]), 1, 1), 0.2);
  x = ad::avg_pool2(x);
  return ad::global_avg_pool(x);
}

FaceLossConfig FaceLossConfig::desk_default() {
  FaceLossConfig cfg;
  cfg.detector = std::make_shared<CenterCropDetector>();
  cfg.embedder = std::make_shared<TinyFaceEmbedder>();
  return cfg;
}

// --- reconstruction losses -----------------------------------------------------------------

namespace {

Tensor broadcast_mask(const GridD& mask, int n, int c) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  Tensor t({n, c, h, w});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) t.at(i, j, y, x) = mask(y, x);
  return t;
}

Tensor batch_like(const Tensor& chw, int n) {
  Tensor t({n, chw.dim(0), chw.dim(1), chw.dim(2)});
  for (int i = 0; i < n; ++i)
    std::copy(chw.data(), chw.data() + chw.numel(),
              t.data() + static_cast<Eigen::Index>(i) * chw.numel());
  return t;
}

// Bilinear crop+resize of a box to the embedder's input grid, differentiable
// w.r.t. image values.
ad::Var crop_resize(ad::Graph& g, ad::Var image, const FaceBox& box, int out_res) {
  const int h = image.value().dim(2), w = image.value().dim(3);
  Tensor coords({image.value().dim(0), 2, out_res, out_res});
  for (int i = 0; i < image.value().dim(0); ++i)
    for (int y = 0; y < out_res; ++y)
      for (int x = 0; x < out_res; ++x) {
        const double gx = box.x0 + (x + 0.5) * box.w / out_res - 0.5;
        const double gy = box.y0 + (y + 0.5) * box.h / out_res - 0.5;
        coords.at(i, 0, y, x) = (2.0 * gx + 1.0) / w - 1.0;
        coords.at(i, 1, y, x) = (2.0 * gy + 1.0) / h - 1.0;
      }
  return ad::grid_sample(image, g.constant(coords));
}

}  // namespace

ad::Var l1_foreground(ad::Var i_hat, const Tensor& i_trg, const GridD& mask) {
  const int n = i_hat.value().dim(0);
  check(i_hat.value().rank() == 4 && i_hat.value().dim(1) == 3, "l1_foreground: bad image");
  ad::Graph& g = *i_hat.node->owner;
  const Tensor m = broadcast_mask(mask, n, 3);
  Tensor target = batch_like(i_trg, n);
  target.flat() *= m.flat();
  return ad::mean_abs(ad::sub(ad::mul_const(i_hat, m), g.constant(target)));
}

ad::Var perceptual(ad::Var i_hat, const Tensor& i_trg, const GridD& mask,
                   const PerceptualConfig& cfg) {
  cfg.validate();
  const int n = i_hat.value().dim(0);
  ad::Graph& g = *i_hat.node->owner;
  const Tensor m = broadcast_mask(mask, n, 3);
  Tensor target = batch_like(i_trg, n);
  target.flat() *= m.flat();

  // mask in pixel space, then extract
  ad::Var masked_hat = ad::mul_const(i_hat, m);
  ad::Var masked_trg = g.constant(target);
  std::vector<ad::Var> f_hat = cfg.backend->features(g, masked_hat, cfg.layer_ids);
  std::vector<ad::Var> f_trg = cfg.backend->features(g, masked_trg, cfg.layer_ids);

  ad::Var total;
  for (std::size_t i = 0; i < cfg.layer_ids.size(); ++i) {
    ad::Var term = ad::mul_scalar(ad::mean_abs(ad::sub(f_hat[i], f_trg[i])),
                                  cfg.layer_weights[i]);
    total = total.defined() ? ad::add(total, term) : term;
  }
  return total;
}

std::optional<ad::Var> face_identity(ad::Var i_hat, const Tensor& i_trg,
                                     const FaceLossConfig& cfg) {
  check(cfg.enabled, "face_identity: called while disabled");
  check(cfg.detector && cfg.embedder, "face_identity: missing detector or embedder");
  check(i_hat.value().rank() == 4 && i_hat.value().dim(0) == 1,
        "face_identity: expected a single [1,3,H,W] sample");

  const Tensor hat_chw = without_batch_dim(i_hat.value());
  std::optional<FaceBox> box_hat = cfg.detector->detect(hat_chw);
  std::optional<FaceBox> box_trg = cfg.detector->detect(i_trg);
  if (!box_hat || !box_trg) return std::nullopt;

  ad::Graph& g = *i_hat.node->owner;
  const int res = cfg.embedder->input_resolution();
  ad::Var face_hat = crop_resize(g, i_hat, *box_hat, res);
  ad::Var face_trg = crop_resize(g, g.constant(with_batch_dim(i_trg)), *box_trg, res);

  ad::Var a = cfg.embedder->embed(g, face_hat);  // [1,D]
  ad::Var b = cfg.embedder->embed(g, face_trg);
  ad::Var dot = ad::sum(ad::mul(a, b));
  ad::Var denom = ad::clamp_min(
      ad::mul(ad::sqrt_(ad::sum(ad::square(a))), ad::sqrt_(ad::sum(ad::square(b)))),
      cfg.epsilon);
  ad::Var cosine = ad::div(dot, denom);
  return ad::add_scalar(ad::neg(cosine), 1.0);
}

// --- adversarial -----------------------------------------------------------------------------

ad::Var adversarial_g(ad::Var fake_scores) {
  return ad::mean(ad::softplus(ad::neg(fake_scores)));
}

ad::Var adversarial_d(ad::Var real_scores, ad::Var fake_scores) {
  return ad::add(ad::mean(ad::softplus(fake_scores)),
                 ad::mean(ad::softplus(ad::neg(real_scores))));
}

namespace {

// Per-sample input gradients of the summed score, on a throwaway tape with
// frozen weights.
Tensor input_gradients(DualScorer& scorer, const Tensor& real) {
  ad::Graph g;
  ad::Var image = g.leaf(real, /*requires_grad=*/true);
  ad::Var scores = scorer.score(g, image, /*frozen=*/true);
  g.backward(ad::sum(scores));
  check(image.node->grad_touched(), "r1: score does not depend on the image");
  return image.node->grad;
}

double mean_squared_norm(const Tensor& grads) {
  const int n = grads.dim(0);
  const Eigen::Index per = grads.numel() / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    acc += grads.flat().segment(static_cast<Eigen::Index>(i) * per, per).square().sum();
  return acc / n;
}

}  // namespace

double r1_penalty_value(DualScorer& scorer, const Tensor& real, double gamma) {
  return 0.5 * gamma * mean_squared_norm(input_gradients(scorer, real));
}

ad::Var r1_penalty_for_training(ad::Graph& g, DualScorer& scorer, const Tensor& real,
                                double gamma) {
  const Tensor grads = input_gradients(scorer, real);
  const double value = 0.5 * gamma * mean_squared_norm(grads);

  // Tangent pass: the tangent output per sample is <d score / d image, v>
  // with v = the input gradient, i.e. its squared norm. Scaling by gamma and
  // shifting by a constant makes both the node's value and its parameter
  // gradient equal those of the penalty.
  auto [score, tangent_score] =
      scorer.score_dual(g, g.constant(real), g.constant(grads), /*frozen=*/false);
  (void)score;
  ad::Var penalty = ad::add_scalar(ad::mul_scalar(ad::mean(tangent_score), gamma),
                                   value - gamma * mean_squared_norm(grads));
  return penalty;
}

ad::Var total_generator_loss(ad::Var adv, ad::Var l1, ad::Var vgg,
                             const std::optional<ad::Var>& face) {
  ad::Var total = ad::add(ad::add(adv, l1), vgg);
  if (face.has_value()) total = ad::add(total, *face);
  return total;
}

}  // namespace posewarp::losses
