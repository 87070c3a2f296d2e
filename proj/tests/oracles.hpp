#pragma once

#include <bgerase/objectives.hpp>
#include <bgerase/random.hpp>
#include <bgerase/video.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

// Direct re-implementations used as references for the library code.
namespace bgerase::testing {

inline std::vector<double> unit(std::vector<double> v) {
  const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  for (double& x : v) x /= n;
  return v;
}

inline std::vector<double> random_unit(std::size_t d, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(d);
  for (double& x : v) x = g(rng);
  return unit(v);
}

inline TaggedEmbedding tagged(std::vector<double> z, std::uint64_t uid, std::string video,
                              int start = 0) {
  TaggedEmbedding e;
  e.z = std::move(z);
  e.uid = uid;
  e.video_id = std::move(video);
  e.clip_start = start;
  return e;
}

/// Softmax cross-entropy with the positive at index 0.
inline double infonce_oracle(const std::vector<double>& a, const std::vector<double>& p,
                             const std::vector<std::vector<double>>& negs, double tau) {
  auto dot = [](const auto& x, const auto& y) {
    return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  };
  double denom = std::exp(dot(a, p) / tau);
  const double num = denom;
  for (const auto& n : negs) denom += std::exp(dot(a, n) / tau);
  return -std::log(num / denom);
}

/// Largest |TD(out) - (1 - lambda) TD(in)| evaluated in double.
inline double scaling_error(const VideoClip& in, const VideoClip& out, double lambda) {
  const std::size_t fs = in.shape().frame_size();
  double worst = 0.0;
  for (int t = 0; t + 1 < in.frames(); ++t) {
    for (std::size_t i = 0; i < fs; ++i) {
      const double din = double(in.frame(t + 1)[i]) - double(in.frame(t)[i]);
      const double dout = double(out.frame(t + 1)[i]) - double(out.frame(t)[i]);
      worst = std::max(worst, std::abs(dout - (1.0 - lambda) * din));
    }
  }
  return worst;
}

/// Recall@K by exhaustive pairwise ranking; ties go to the lower gallery index.
inline std::vector<double> recall_oracle(const std::vector<std::vector<double>>& g,
                                         const std::vector<int>& gl,
                                         const std::vector<std::vector<double>>& q,
                                         const std::vector<int>& ql, const std::vector<int>& ks) {
  auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
  };
  std::vector<double> recall(ks.size(), 0.0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::size_t best = g.size() + 1;
    for (std::size_t j = 0; j < g.size(); ++j) {
      if (gl[j] != ql[i]) continue;
      const double sj = cosine(q[i], g[j]);
      std::size_t rank = 1;
      for (std::size_t m = 0; m < g.size(); ++m) {
        const double sm = cosine(q[i], g[m]);
        if (sm > sj || (sm == sj && m < j)) ++rank;
      }
      best = std::min(best, rank);
    }
    for (std::size_t k = 0; k < ks.size(); ++k) {
      if (best <= std::min<std::size_t>(static_cast<std::size_t>(ks[k]), g.size())) recall[k] += 1;
    }
  }
  for (double& r : recall) r /= static_cast<double>(q.size());
  return recall;
}

/// Two-tailed Student-t p-value for 6 degrees of freedom, in closed form.
inline double t6_two_tailed(double t) {
  const double theta = std::atan(std::abs(t) / std::sqrt(6.0));
  const double c2 = std::cos(theta) * std::cos(theta);
  const double cdf = 0.5 + 0.5 * std::sin(theta) * (1.0 + 0.5 * c2 + 0.375 * c2 * c2);
  return 2.0 * (1.0 - cdf);
}

struct PearsonOracle {
  double rho;
  double t;
  double p;
};

/// Textbook sums formula, independent of the centred computation in the library.
inline PearsonOracle pearson_oracle_8(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = 8;
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < 8; ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  const double rho = (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  const double t = rho * std::sqrt((n - 2) / (1 - rho * rho));
  return {rho, t, t6_two_tailed(t)};
}

inline const std::vector<double>& pearson_hand_x() {
  static const std::vector<double> x{0.62, 0.48, 0.91, 0.33, 0.75, 0.20, 0.57, 0.84};
  return x;
}
inline const std::vector<double>& pearson_hand_y() {
  static const std::vector<double> y{0.05, 0.12, -0.08, 0.15, 0.02, 0.21, 0.09, -0.03};
  return y;
}

}  // namespace bgerase::testing
