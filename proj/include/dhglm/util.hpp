#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dhglm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double log_sum_exp(const VectorXd& x) {
  if (x.size() == 0) return -std::numeric_limits<double>::infinity();
  double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

// Trapezoid rule on an irregular grid.
inline double trapezoid(const VectorXd& x, const VectorXd& y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i)
    s += 0.5 * (x[i + 1] - x[i]) * (y[i] + y[i + 1]);
  return s;
}

// Trapezoid quadrature weights: w_i such that sum_i w_i f(x_i) = trapezoid integral.
inline VectorXd trapezoid_weights(const VectorXd& x) {
  VectorXd w = VectorXd::Zero(x.size());
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    double h = 0.5 * (x[i + 1] - x[i]);
    w[i] += h;
    w[i + 1] += h;
  }
  return w;
}

// Piecewise-linear interpolation, zero outside the abscissa range.
inline double interp_linear(const VectorXd& x, const VectorXd& y, double at) {
  if (at < x[0] || at > x[x.size() - 1]) return 0.0;
  auto it = std::upper_bound(x.data(), x.data() + x.size(), at);
  Eigen::Index i = std::max<Eigen::Index>(1, it - x.data()) - 1;
  if (i + 1 >= x.size()) i = x.size() - 2;
  double t = (at - x[i]) / (x[i + 1] - x[i]);
  return y[i] + t * (y[i + 1] - y[i]);
}

// Weighted empirical quantile (weights need not be normalized).
inline double weighted_quantile(const VectorXd& values, const VectorXd& weights, double p) {
  std::vector<Eigen::Index> idx(values.size());
  for (Eigen::Index i = 0; i < values.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](Eigen::Index a, Eigen::Index b) { return values[a] < values[b]; });
  double total = weights.sum();
  double target = p * total;
  double cum = 0.0;
  for (Eigen::Index k = 0; k < (Eigen::Index)idx.size(); ++k) {
    cum += weights[idx[k]];
    if (cum >= target) return values[idx[k]];
  }
  return values[idx.back()];
}

// Run fn(i) for i in [0, n). Results must not depend on the partitioning.
inline void parallel_for(Eigen::Index n, int workers, const std::function<void(Eigen::Index)>& fn) {
  if (workers <= 1 || n < 2) {
    for (Eigen::Index i = 0; i < n; ++i) fn(i);
    return;
  }
  int k = std::min<int>(workers, (int)n);
  std::vector<std::thread> pool;
  pool.reserve(k);
  std::atomic<Eigen::Index> next{0};
  for (int t = 0; t < k; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        Eigen::Index i = next.fetch_add(1);
        if (i >= n) break;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

struct dhglm_error : std::runtime_error {
  explicit dhglm_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dhglm
