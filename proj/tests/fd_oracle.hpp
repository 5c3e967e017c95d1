#pragma once

// Central-difference reference gradients used by the tests. Kept separate
// from the library's check_gradients so the two do not share a code path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace fd {

/// d f / d x_i for every coordinate of x, by (f(x + h e_i) - f(x - h e_i)) / 2h.
inline Eigen::VectorXd gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                                double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline double max_rel_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace fd
