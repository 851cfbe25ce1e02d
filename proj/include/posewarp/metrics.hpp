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

#ifndef POSEWARP_METRICS_HPP
#define POSEWARP_METRICS_HPP

#include <optional>

#include "posewarp/tensor.hpp"

namespace posewarp::metrics {

// Upper bound reported instead of infinity for identical images.
inline constexpr double kPsnrCap = 99.0;

// Foreground PSNR between [-1,1] images, computed on the [0,1] scale over
// masked pixels (all three channels).
double psnr_foreground(const Tensor& a, const Tensor& b, const GridD& mask);

// Mean SSIM over the mask with an 11x11 sigma-1.5 Gaussian window evaluated
// where the window fits entirely inside the image; averaged over channels on
// the [0,1] scale.
double ssim_foreground(const Tensor& a, const Tensor& b, const GridD& mask);

// Frechet distance between Gaussians (m1,c1) and (m2,c2); c* symmetric PSD.
double frechet_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& c1,
                        const Eigen::VectorXd& m2, const Eigen::MatrixXd& c2);

struct MetricRow {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> fid;    // only with an embedding plugin
  std::optional<double> lpips;  // only with a feature plugin
};

}  // namespace posewarp::metrics

#endif  // POSEWARP_METRICS_HPP
