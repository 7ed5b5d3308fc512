#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fedsumm/model.hpp"
#include "fedsumm/rng.hpp"

namespace fedsumm::test {

inline ModelSpec random_spec(int kind_index, Rng& rng) {
  ModelSpec spec;
  spec.input_dim = 1 + static_cast<int>(rng.next_below(4));
  switch (kind_index % 3) {
    case 0:
      spec.kind = ModelKind::kLinear;
      spec.output_dim = 1 + static_cast<int>(rng.next_below(3));
      spec.loss = LossKind::kSquaredError;
      break;
    case 1:
      spec.kind = ModelKind::kLogistic;
      spec.output_dim = 2 + static_cast<int>(rng.next_below(3));
      spec.loss = LossKind::kCrossEntropy;
      break;
    default:
      spec.kind = ModelKind::kMlp;
      spec.output_dim = 2 + static_cast<int>(rng.next_below(3));
      spec.hidden_dim = 1 + static_cast<int>(rng.next_below(4));
      spec.loss = rng.next_below(2) == 0 ? LossKind::kSquaredError : LossKind::kCrossEntropy;
      break;
  }
  return spec;
}

inline ParamVector random_params(const ModelSpec& spec, Rng& rng) {
  ParamVector w(static_cast<std::size_t>(param_dim(spec)));
  for (double& x : w) x = 2.0 * rng.next_unit() - 1.0;
  return w;
}

inline std::vector<Example> random_batch(const ModelSpec& spec, int n, Rng& rng) {
  std::vector<Example> batch(static_cast<std::size_t>(n));
  for (Example& e : batch) {
    e.features.resize(static_cast<std::size_t>(spec.input_dim));
    for (double& x : e.features) x = rng.next_gaussian();
    if (spec.loss == LossKind::kCrossEntropy) {
      e.label = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.output_dim)));
    } else {
      e.target.resize(static_cast<std::size_t>(spec.output_dim));
      for (double& y : e.target) y = rng.next_gaussian();
    }
  }
  return batch;
}

// Max over coordinates of |central difference - analytic| / max(1, |analytic|).
inline double max_fd_error(const ModelSpec& spec, const ParamVector& w,
                           std::span<const Example> batch, double step = 1e-5) {
  ParamVector g = gradient(spec, w, batch);
  double worst = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    ParamVector lo = w, hi = w;
    hi[i] += step;
    lo[i] -= step;
    double fd = (loss(spec, hi, batch) - loss(spec, lo, batch)) / (2.0 * step);
    double err = std::fabs(fd - g[i]) / std::max(1.0, std::fabs(g[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

// Least-squares solve (X^T X) w = X^T y by Gaussian elimination with partial
// pivoting; independent of the library's gradient path.
inline std::vector<double> solve_normal_equations(const std::vector<std::vector<double>>& rows,
                                                  const std::vector<double>& targets) {
  const std::size_t d = rows.front().size();
  std::vector<std::vector<double>> a(d, std::vector<double>(d + 1, 0.0));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) a[i][j] += rows[r][i] * rows[r][j];
      a[i][d] += rows[r][i] * targets[r];
    }
  }
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    std::swap(a[col], a[pivot]);
    for (std::size_t r = 0; r < d; ++r) {
      if (r == col || a[col][col] == 0.0) continue;
      double f = a[r][col] / a[col][col];
      for (std::size_t j = col; j <= d; ++j) a[r][j] -= f * a[col][j];
    }
  }
  std::vector<double> w(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) w[i] = a[i][d] / a[i][i];
  return w;
}

}  // namespace fedsumm::test
