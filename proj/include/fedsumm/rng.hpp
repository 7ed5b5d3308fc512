#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace fedsumm {

// SplitMix64 finalizer. Used to derive independent stream seeds from
// (seed, tag, round, client, ...) tuples so that adding or reordering
// computations elsewhere never perturbs an existing stream.
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over the bytes of a tag string, for labeling derived streams.
std::uint64_t tag64(std::string_view name);

// Absorbs `parts` into `root` one by one, order-sensitively.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> parts);

// Deterministic random stream. The engine is std::mt19937_64 (its raw output
// sequence is pinned by the standard); every transform on top of it is
// implemented here so the produced doubles and permutations are reproducible
// across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53 random bits.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double next_gaussian();

  // Uniform integer in [0, bound), bound >= 1, rejection sampled (no modulo
  // bias).
  std::uint64_t next_below(std::uint64_t bound);

  // Gamma(alpha, 1) via Marsaglia-Tsang, with the usual boost for alpha < 1.
  double next_gamma(double alpha);

  // Symmetric Dirichlet(alpha) over k categories.
  std::vector<double> next_dirichlet(int k, double alpha);

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fedsumm
