// Copyright 2026 The dhog Authors
//
// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.


#include "dhog/metrics.hpp"

#include "dhog/error.hpp"
#include "dhog/hog.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dhog {

namespace {

constexpr double kDegenerateStd = 1e-12;
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::pair<Plane, Plane> gray_pair(const Image& a, const Image& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw ShapeError(std::string(what) + ": images differ in size");
  }
  auto gray = [](const Image& img) { return (img.channels == 3 ? to_gray(img) : img).plane(0); };
  return {gray(a), gray(b)};
}

double degenerate(bool a_flat, bool b_flat) { return a_flat && b_flat ? 1.0 : 0.0; }

int bin_of(double v, int bins) {
  const int k = static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * bins));
  return std::min(k, bins - 1);
}

// Correlates every row, then every column, keeping only fully covered
// positions.
Plane gaussian_valid(const Plane& p, const std::vector<double>& w) {
  const Index k = static_cast<Index>(w.size());
  const Index rows = p.rows() - k + 1, cols = p.cols() - k + 1;
  Plane horiz = Plane::Zero(p.rows(), cols);
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < cols; ++j)
      for (Index t = 0; t < k; ++t) horiz(i, j) += w[static_cast<std::size_t>(t)] * p(i, j + t);
  Plane out = Plane::Zero(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index t = 0; t < k; ++t) out.row(i) += w[static_cast<std::size_t>(t)] * horiz.row(i + t);
  return out;
}

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  const int half = kSsimWindow / 2;
  double total = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - half;
    w[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    total += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace

double cross_correlation(const Image& a, const Image& b) {
  const auto [pa, pb] = gray_pair(a, b, "cross_correlation");
  const Plane da = pa - pa.mean(), db = pb - pb.mean();
  const double n = static_cast<double>(pa.size());
  const double sa = std::sqrt(da.square().sum() / n), sb = std::sqrt(db.square().sum() / n);
  if (sa < kDegenerateStd || sb < kDegenerateStd) return degenerate(sa < kDegenerateStd, sb < kDegenerateStd);
  return std::clamp((da * db).sum() / n / (sa * sb), -1.0, 1.0);
}

double raw_cross_correlation(const Image& a, const Image& b) {
  const auto [pa, pb] = gray_pair(a, b, "raw_cross_correlation");
  const double na = std::sqrt(pa.square().sum()), nb = std::sqrt(pb.square().sum());
  if (na < kDegenerateStd || nb < kDegenerateStd) return degenerate(na < kDegenerateStd, nb < kDegenerateStd);
  return std::clamp((pa * pb).sum() / (na * nb), -1.0, 1.0);
}

double mutual_information(const Image& a, const Image& b, int bins) {
  if (bins < 2) throw ConfigError("mutual information needs at least 2 bins");
  const auto [pa, pb] = gray_pair(a, b, "mutual_information");
  Eigen::ArrayXXd joint = Eigen::ArrayXXd::Zero(bins, bins);
  for (Index i = 0; i < pa.size(); ++i) joint(bin_of(pa.data()[i], bins), bin_of(pb.data()[i], bins)) += 1.0;
  joint /= static_cast<double>(pa.size());
  const Eigen::ArrayXd ma = joint.rowwise().sum(), mb = joint.colwise().sum().transpose();
  double mi = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      const double p = joint(i, j);
      if (p > 0.0) mi += p * std::log2(p / (ma[i] * mb[j]));
    }
  return std::max(mi, 0.0);
}

double ssim(const Image& a, const Image& b) {
  const auto [x, y] = gray_pair(a, b, "ssim");
  if (x.rows() < kSsimWindow || x.cols() < kSsimWindow) {
    throw ShapeError("ssim needs images of at least 11x11");
  }
  const std::vector<double> w = gaussian_window();
  const Plane mx = gaussian_valid(x, w), my = gaussian_valid(y, w);
  const Plane sxx = gaussian_valid(x * x, w) - mx * mx;
  const Plane syy = gaussian_valid(y * y, w) - my * my;
  const Plane sxy = gaussian_valid(x * y, w) - mx * my;
  const Plane map = ((2.0 * mx * my + kSsimC1) * (2.0 * sxy + kSsimC2)) /
                    ((mx * mx + my * my + kSsimC1) * (sxx + syy + kSsimC2));
  return map.mean();
}

MetricReport compare_images(const Image& a, const Image& b, int bins) {
  return {cross_correlation(a, b), raw_cross_correlation(a, b), mutual_information(a, b, bins), ssim(a, b)};
}

}  // namespace dhog
