#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

namespace volport {

struct NelderMeadOptions {
  double initial_step = 0.5;
  double diameter_tol = 1e-8;
  std::size_t max_iterations = 5000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimizer (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). Converged once every vertex lies within diameter_tol of the best.
/// Deterministic; the returned point is the best vertex ever evaluated.
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, const NelderMeadOptions& opt = {}) {
  const std::size_t d = x0.size();
  std::vector<std::vector<double>> simplex(d + 1, x0);
  for (std::size_t k = 0; k < d; ++k) simplex[k + 1][k] += opt.initial_step;
  std::vector<double> values(d + 1);
  for (std::size_t k = 0; k <= d; ++k) values[k] = f(simplex[k]);

  // Non-finite objective values are treated as +inf so they are never accepted.
  auto eval = [&](const std::vector<double>& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : HUGE_VAL;
  };
  for (auto& v : values)
    if (!std::isfinite(v)) v = HUGE_VAL;

  std::vector<std::size_t> order(d + 1);
  NelderMeadResult res;
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  };
  auto diameter = [&] {
    double worst = 0.0;
    const auto& best = simplex[order[0]];
    for (std::size_t k = 1; k <= d; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = simplex[order[k]][j] - best[j];
        s += diff * diff;
      }
      worst = std::max(worst, std::sqrt(s));
    }
    return worst;
  };

  std::vector<double> centroid(d), trial(d), trial2(d);
  auto along = [&](double coef, const std::vector<double>& from, std::vector<double>& out) {
    for (std::size_t j = 0; j < d; ++j) out[j] = centroid[j] + coef * (from[j] - centroid[j]);
  };

  sort_simplex();
  while (res.iterations < opt.max_iterations) {
    if (diameter() < opt.diameter_tol) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    const std::size_t best = order[0], worst = order[d], second = order[d - 1];
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[order[k]][j] / static_cast<double>(d);

    along(-1.0, simplex[worst], trial);
    const double fr = eval(trial);
    if (fr < values[best]) {
      along(-2.0, simplex[worst], trial2);
      const double fe = eval(trial2);
      if (fe < fr) {
        simplex[worst] = trial2;
        values[worst] = fe;
      } else {
        simplex[worst] = trial;
        values[worst] = fr;
      }
    } else if (fr < values[second]) {
      simplex[worst] = trial;
      values[worst] = fr;
    } else {
      const bool outside = fr < values[worst];
      along(outside ? -0.5 : 0.5, simplex[worst], trial2);
      const double fc = eval(trial2);
      if (fc < (outside ? fr : values[worst])) {
        simplex[worst] = trial2;
        values[worst] = fc;
      } else {
        for (std::size_t k = 1; k <= d; ++k) {
          auto& v = simplex[order[k]];
          for (std::size_t j = 0; j < d; ++j) v[j] = simplex[best][j] + 0.5 * (v[j] - simplex[best][j]);
          values[order[k]] = eval(v);
        }
      }
    }
    sort_simplex();
  }
  if (!res.converged && diameter() < opt.diameter_tol) res.converged = true;
  res.x = simplex[order[0]];
  res.value = values[order[0]];
  return res;
}

} // namespace volport
