#include "fedsumm/dp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fedsumm/errors.hpp"
#include "fedsumm/numeric.hpp"

namespace fedsumm {

void validate(const DpConfig& config) {
  if (config.noise_multiplier < 0.0) throw ConfigError("dp: noise_multiplier must be >= 0");
  if (config.delta <= 0.0 || config.delta >= 1.0) throw ConfigError("dp: delta must lie in (0, 1)");
}

double median_norm(std::span<const double> norms) {
  if (norms.empty()) throw ProtocolError("median_norm: empty collection");
  std::vector<double> sorted(norms.begin(), norms.end());
  for (double x : sorted) {
    if (!std::isfinite(x)) throw NumericalError("median_norm: non-finite norm");
  }
  std::sort(sorted.begin(), sorted.end());
  std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

ClippedUpdate clip(int client_id, const ParamVector& delta_w, double bound) {
  if (bound <= 0.0) throw ProtocolError("clip: bound must be positive");
  ClippedUpdate result;
  result.client_id = client_id;
  result.pre_clip_norm = l2_norm(delta_w);
  // The guard band keeps clipping idempotent: a just-clipped vector whose
  // recomputed norm lands an ulp above the bound must not be rescaled again.
  result.clipped =
      result.pre_clip_norm > bound * (1.0 + 4.0 * std::numeric_limits<double>::epsilon());
  result.delta_w = delta_w;
  if (result.clipped) {
    double scale = bound / result.pre_clip_norm;
    for (double& x : result.delta_w) x *= scale;
  }
  return result;
}

ParamVector dp_aggregate(std::span<const ClippedUpdate> updates, const ParamVector& w_prev,
                         double bound, double noise_multiplier, Rng& rng) {
  if (updates.empty()) throw ProtocolError("dp_aggregate: no updates");
  const std::size_t dim = w_prev.size();
  for (const ClippedUpdate& u : updates) {
    if (u.delta_w.size() != dim) {
      throw ProtocolError("dp_aggregate: client " + std::to_string(u.client_id) +
                          " update has dim " + std::to_string(u.delta_w.size()) + ", expected " +
                          std::to_string(dim));
    }
  }

  std::vector<double> sum(dim, 0.0);
  for (const ClippedUpdate& u : updates) {
    for (std::size_t i = 0; i < dim; ++i) sum[i] += u.delta_w[i];
  }
  if (noise_multiplier > 0.0) {
    const double stddev = bound * noise_multiplier;
    for (std::size_t i = 0; i < dim; ++i) sum[i] += stddev * rng.next_gaussian();
  }

  const double inv_m = 1.0 / static_cast<double>(updates.size());
  ParamVector next = w_prev;
  for (std::size_t i = 0; i < dim; ++i) next[i] += inv_m * sum[i];
  return next;
}

}  // namespace fedsumm
