#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "fedsumm/numeric.hpp"
#include "fedsumm/rng.hpp"

using namespace fedsumm;

TEST_CASE("derived seeds are order sensitive and stable") {
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {tag64("a")}) != derive_seed(1, {tag64("b")}));
}

TEST_CASE("streams with the same seed are identical") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("next_unit stays in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("next_below is bounded and roughly uniform") {
  Rng rng(11);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) {
    auto v = rng.next_below(10);
    REQUIRE(v < 10);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
}

TEST_CASE("gaussian moments") {
  Rng rng(13);
  NeumaierSum sum, sumsq;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    sum.add(g);
    sumsq.add(g * g);
  }
  double mean = sum.value() / n;
  double var = sumsq.value() / n - mean * mean;
  CHECK(std::fabs(mean) < 0.01);
  CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("dirichlet draws are simplex points") {
  Rng rng(17);
  for (double alpha : {0.05, 1.0, 10.0}) {
    auto p = rng.next_dirichlet(5, alpha);
    double total = std::accumulate(p.begin(), p.end(), 0.0);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    for (double x : p) CHECK(x >= 0.0);
  }
}

TEST_CASE("shuffle produces a permutation, deterministically") {
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  Rng a(3);
  a.shuffle(v);
  std::vector<int> w(50);
  std::iota(w.begin(), w.end(), 0);
  Rng b(3);
  b.shuffle(w);
  CHECK(v == w);
  std::sort(v.begin(), v.end());
  std::vector<int> id(50);
  std::iota(id.begin(), id.end(), 0);
  CHECK(v == id);
}

TEST_CASE("compensated sums are order insensitive") {
  Rng rng(23);
  std::vector<double> values(300);
  for (double& x : values) x = (2.0 * rng.next_unit() - 1.0) * 1e6;
  NeumaierSum forward;
  for (double x : values) forward.add(x);
  NeumaierSum backward;
  for (auto it = values.rbegin(); it != values.rend(); ++it) backward.add(*it);
  CHECK(forward.value() == backward.value());
}
