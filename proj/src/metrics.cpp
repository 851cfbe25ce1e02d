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

#include "posewarp/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace posewarp::metrics {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double to_unit(double v) { return (v + 1.0) * 0.5; }

Eigen::VectorXd gaussian_kernel() {
  Eigen::VectorXd k(kWindow);
  const int half = kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - half;
    k[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  return k / sum;
}

}  // namespace

double psnr_foreground(const Tensor& a, const Tensor& b, const GridD& mask) {
  check(a.rank() == 3 && a.shape() == b.shape(), "psnr: image shape mismatch");
  const int h = a.dim(1), w = a.dim(2);
  check(mask.rows() == h && mask.cols() == w, "psnr: mask shape mismatch");
  double se = 0.0;
  long count = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (mask(y, x) != 1.0) continue;
      for (int c = 0; c < 3; ++c) {
        const double d = to_unit(a.at(c, y, x)) - to_unit(b.at(c, y, x));
        se += d * d;
      }
      count += 3;
    }
  check(count > 0, "psnr: empty mask");
  const double mse = se / count;
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim_foreground(const Tensor& a, const Tensor& b, const GridD& mask) {
  check(a.rank() == 3 && a.shape() == b.shape(), "ssim: image shape mismatch");
  const int h = a.dim(1), w = a.dim(2);
  check(h >= kWindow && w >= kWindow, "ssim: image smaller than the window");
  const Eigen::VectorXd k = gaussian_kernel();
  const int half = kWindow / 2;

  double total = 0.0;
  long count = 0;
  for (int c = 0; c < 3; ++c) {
    // separable filtering of x, y, x^2, y^2, xy over the valid region
    GridD px(h, w), py(h, w);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        px(yy, xx) = to_unit(a.at(c, yy, xx));
        py(yy, xx) = to_unit(b.at(c, yy, xx));
      }
    auto filt = [&](const GridD& src) {
      GridD tmp = GridD::Zero(h, w);
      for (int yy = 0; yy < h; ++yy)
        for (int xx = half; xx < w - half; ++xx) {
          double acc = 0;
          for (int i = 0; i < kWindow; ++i) acc += k[i] * src(yy, xx - half + i);
          tmp(yy, xx) = acc;
        }
      GridD out = GridD::Zero(h, w);
      for (int yy = half; yy < h - half; ++yy)
        for (int xx = half; xx < w - half; ++xx) {
          double acc = 0;
          for (int i = 0; i < kWindow; ++i) acc += k[i] * tmp(yy - half + i, xx);
          out(yy, xx) = acc;
        }
      return out;
    };
    const GridD mu_x = filt(px);
    const GridD mu_y = filt(py);
    const GridD xx2 = filt(px * px);
    const GridD yy2 = filt(py * py);
    const GridD xy = filt(px * py);

    for (int yy = half; yy < h - half; ++yy)
      for (int xx = half; xx < w - half; ++xx) {
        if (mask(yy, xx) != 1.0) continue;
        const double mx = mu_x(yy, xx), my = mu_y(yy, xx);
        const double vx = xx2(yy, xx) - mx * mx;
        const double vy = yy2(yy, xx) - my * my;
        const double cxy = xy(yy, xx) - mx * my;
        const double val = ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
                           ((mx * mx + my * my + kC1) * (vx + vy + kC2));
        total += val;
        ++count;
      }
  }
  check(count > 0, "ssim: empty mask after window cropping");
  return total / count;
}

double frechet_distance(const Eigen::VectorXd& m1, const Eigen::MatrixXd& c1,
                        const Eigen::VectorXd& m2, const Eigen::MatrixXd& c2) {
  auto sqrtm = [](const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(es.eigenvectors() * ev.asDiagonal() *
                           es.eigenvectors().transpose());
  };
  const Eigen::MatrixXd s1 = sqrtm(c1);
  const Eigen::MatrixXd inner = sqrtm(s1 * c2 * s1);
  const double mean_term = (m1 - m2).squaredNorm();
  const double trace_term = (c1 + c2 - 2.0 * inner).trace();
  return std::max(0.0, mean_term + trace_term);
}

}  // namespace posewarp::metrics
