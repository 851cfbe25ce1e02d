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

#ifndef POSEWARP_LOSSES_HPP
#define POSEWARP_LOSSES_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "posewarp/autodiff.hpp"
#include "posewarp/posegen.hpp"
#include "posewarp/tensor.hpp"

namespace posewarp::losses {

// --- pluggable pretrained-feature backends -------------------------------------

// Deterministic multi-layer feature evaluator, differentiable w.r.t. the
// input image.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<int> available_layers() const = 0;
  virtual std::vector<ad::Var> features(ad::Graph& g, ad::Var image,
                                        const std::vector<int>& layer_ids) = 0;
  virtual std::string name() const = 0;
};

// Five-layer convolutional stack with fixed tensors; taps named by the
// conventional relu layer indices 1, 6, 11, 20, 29.
class ConvStackExtractor : public FeatureExtractor {
 public:
  std::vector<int> available_layers() const override { return {1, 6, 11, 20, 29}; }
  std::vector<ad::Var> features(ad::Graph& g, ad::Var image,
                                const std::vector<int>& layer_ids) override;

 protected:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Fixed-seed random weights standing in for a pretrained feature network at
// desk scale.
class RandomFeatureExtractor : public ConvStackExtractor {
 public:
  RandomFeatureExtractor();
  std::string name() const override { return "random64"; }
};

// Weights loaded from a checkpoint archive (tensors layer<k>.w / layer<k>.b).
class ExternalFeatureExtractor : public ConvStackExtractor {
 public:
  explicit ExternalFeatureExtractor(const std::string& path);
  std::string name() const override { return "external:" + path_; }

 private:
  std::string path_;
};

// Resolves "random64" or "external:<checkpoint path>".
std::shared_ptr<FeatureExtractor> make_feature_backend(const std::string& spec);

struct PerceptualConfig {
  std::vector<int> layer_ids = {1, 6, 11, 20, 29};
  std::vector<double> layer_weights = {1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0};
  std::shared_ptr<FeatureExtractor> backend;

  void validate() const;
};

// --- face plumbing ------------------------------------------------------------------

struct FaceBox {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  // Detects, in effect crop+align: a box or nothing.
  virtual std::optional<FaceBox> detect(const Tensor& image) const = 0;
};

// Fixed center crop; "detects" only when the crop carries any signal, so
// blank regions count as no face.
class CenterCropDetector : public FaceDetector {
 public:
  explicit CenterCropDetector(double fraction = 0.5, double min_activity = 0.02)
      : fraction_(fraction), min_activity_(min_activity) {}
  std::optional<FaceBox> detect(const Tensor& image) const override;

 private:
  double fraction_;
  double min_activity_;
};

class FaceEmbedder {
 public:
  virtual ~FaceEmbedder() = default;
  virtual int input_resolution() const = 0;
  // face [N,3,r,r] -> embedding [N,D]
  virtual ad::Var embed(ad::Graph& g, ad::Var face) = 0;
};

// Small fixed-seed convolutional embedder.
class TinyFaceEmbedder : public FaceEmbedder {
 public:
  TinyFaceEmbedder();
  int input_resolution() const override { return 16; }
  ad::Var embed(ad::Graph& g, ad::Var face) override;

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

struct FaceLossConfig {
  std::shared_ptr<FaceDetector> detector;
  std::shared_ptr<FaceEmbedder> embedder;
  double epsilon = 1e-8;
  bool enabled = true;

  static FaceLossConfig desk_default();
};

// --- reconstruction losses -----------------------------------------------------------

// Mean-normalized masked L1 between generated and target images.
ad::Var l1_foreground(ad::Var i_hat, const Tensor& i_trg, const GridD& mask);

// Weighted multi-layer feature L1; the mask is applied in pixel space before
// extraction.
ad::Var perceptual(ad::Var i_hat, const Tensor& i_trg, const GridD& mask,
                   const PerceptualConfig& cfg);

// 1 - cosine similarity of face embeddings with an epsilon-guarded
// denominator; nullopt when no face is detected in either image. Single
// sample ([1,3,H,W]).
std::optional<ad::Var> face_identity(ad::Var i_hat, const Tensor& i_trg,
                                     const FaceLossConfig& cfg);

// --- adversarial objective --------------------------------------------------------------

// Non-saturating logistic losses over [N,1] logits.
ad::Var adversarial_g(ad::Var fake_scores);
ad::Var adversarial_d(ad::Var real_scores, ad::Var fake_scores);

// Anything that can score images and propagate an input tangent; lets the R1
// machinery run against both the real discriminator and analytic test stubs.
class DualScorer {
 public:
  virtual ~DualScorer() = default;
  virtual ad::Var score(ad::Graph& g, ad::Var image, bool frozen) = 0;
  virtual std::pair<ad::Var, ad::Var> score_dual(ad::Graph& g, ad::Var image, ad::Var tangent,
                                                 bool frozen) = 0;
};

// Binds a discriminator to a fixed condition tensor.
class ConditionedScorer : public DualScorer {
 public:
  ConditionedScorer(posegen::Discriminator& d, Tensor cond) : d_(d), cond_(std::move(cond)) {}
  ad::Var score(ad::Graph& g, ad::Var image, bool frozen) override {
    return d_.score(g, image, cond_, frozen);
  }
  std::pair<ad::Var, ad::Var> score_dual(ad::Graph& g, ad::Var image, ad::Var tangent,
                                         bool frozen) override {
    return d_.score_dual(g, image, tangent, cond_, frozen);
  }

 private:
  posegen::Discriminator& d_;
  Tensor cond_;
};

// (gamma/2) * E_n ||d score_n / d image_n||^2, evaluated on real images.
double r1_penalty_value(DualScorer& scorer, const Tensor& real, double gamma);

// Tape node whose value is the penalty and whose parameter gradient is the
// penalty's exact gradient (via a tangent-propagation pass through the
// scorer).
ad::Var r1_penalty_for_training(ad::Graph& g, DualScorer& scorer, const Tensor& real,
                                double gamma);

// Unweighted sum; absent face contributes nothing.
ad::Var total_generator_loss(ad::Var adv, ad::Var l1, ad::Var vgg,
                             const std::optional<ad::Var>& face);

}  // namespace posewarp::losses

#endif  // POSEWARP_LOSSES_HPP
