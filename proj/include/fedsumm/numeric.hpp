#pragma once

#include <cmath>
#include <cstddef>
#include <span>

namespace fedsumm {

// Kahan-Babuska-Neumaier compensated accumulator. Batch means are reduced
// through this so the result is stable to ~2^-105, which makes means agree
// bitwise under batch reordering and example duplication at the sizes this
// library works with.
struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }

  double value() const { return sum + comp; }
};

inline double l2_norm(std::span<const double> v) {
  NeumaierSum acc;
  for (double x : v) acc.add(x * x);
  return std::sqrt(acc.value());
}

}  // namespace fedsumm
