#pragma once

// Straight-line reference computations used by the tests. They deliberately
// avoid the library's Eigen code paths.

#include "hiro/nn.hpp"
#include "hiro/replay.hpp"

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline Vec vec(const hiro::Vector& v) { return Vec(v.data(), v.data() + v.size()); }

inline Vec forward(const hiro::nn::Mlp& net, Vec x) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& W = net.weights[l];
    Vec y(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double s = net.biases[l][r];
      for (Eigen::Index c = 0; c < W.cols(); ++c) s += W(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = s;
    }
    if (l + 1 < net.weights.size()) {
      for (auto& v : y) v = std::tanh(v);
    } else if (net.output_transform == hiro::nn::OutputTransform::tanh_scaled) {
      for (std::size_t i = 0; i < y.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double lo = net.output_low[k], hi = net.output_high[k];
        y[i] = 0.5 * (hi + lo) + 0.5 * (hi - lo) * std::tanh(y[i]);
      }
    }
    x = std::move(y);
  }
  return x;
}

// -1/(2 sigma^2) * sum_i ||a_i - mu(s_i, g_i)||^2 with g_{i+1} = s_i + g_i - s_{i+1} on the goal dims.
inline double log_likelihood(const hiro::nn::Mlp& actor, const hiro::HighSegment& seg, const hiro::Vector& candidate,
                             const std::vector<std::size_t>& dims, double sigma) {
  Vec g = vec(candidate);
  double sq = 0.0;
  for (std::size_t i = 0; i < seg.states.size(); ++i) {
    Vec in = vec(seg.states[i]);
    in.insert(in.end(), g.begin(), g.end());
    const Vec mu = forward(actor, in);
    for (std::size_t k = 0; k < mu.size(); ++k) {
      const double d = seg.actions[i][static_cast<Eigen::Index>(k)] - mu[k];
      sq += d * d;
    }
    if (i + 1 < seg.states.size()) {
      for (std::size_t k = 0; k < dims.size(); ++k) {
        const auto d = static_cast<Eigen::Index>(dims[k]);
        g[k] = seg.states[i][d] + g[k] - seg.states[i + 1][d];
      }
    }
  }
  const double scale = sigma > 0.0 ? 1.0 / (2.0 * sigma * sigma) : 0.5;
  return -scale * sq;
}

// Index of the first maximum.
inline std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline std::size_t argmin(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

// Ratio of products of isotropic Gaussian densities N(a_i; mu, sigma^2 I), current over behavior.
inline double density_ratio(const std::vector<Vec>& actions, const std::vector<Vec>& mu_current,
                            const std::vector<Vec>& mu_behavior, double sigma) {
  const double pi = 3.14159265358979323846;
  double ratio = 1.0;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    for (std::size_t k = 0; k < actions[i].size(); ++k) {
      auto pdf = [&](double mean) {
        const double z = (actions[i][k] - mean) / sigma;
        return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * pi));
      };
      ratio *= pdf(mu_current[i][k]) / pdf(mu_behavior[i][k]);
    }
  }
  return ratio;
}

}  // namespace oracle
