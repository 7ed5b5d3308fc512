#pragma once

#include <cstdint>
#include <span>

#include "fedsumm/model.hpp"
#include "fedsumm/rng.hpp"

namespace fedsumm {

struct DpConfig {
  double noise_multiplier = 0.0;  // sigma; per-coordinate noise stddev is M * sigma
  double delta = 1e-5;            // reported alongside sigma for external accounting
  bool enabled = false;
  std::uint64_t seed = 0;
};

void validate(const DpConfig& config);

struct ClippedUpdate {
  int client_id = 0;
  ParamVector delta_w;
  double pre_clip_norm = 0.0;
  bool clipped = false;
};

// Median of the collection; even counts average the two middle values.
double median_norm(std::span<const double> norms);

// Scales delta_w by 1 / max(1, ||delta_w|| / bound), so the post-clip L2 norm
// is min(||delta_w||, bound).
ClippedUpdate clip(int client_id, const ParamVector& delta_w, double bound);

// w_prev + (1/m) * (sum of clipped deltas + spherical Gaussian noise with
// per-coordinate stddev bound * noise_multiplier). Deltas are summed in the
// order given (callers keep client ids ascending); noise is drawn coordinate
// ascending from `rng`. noise_multiplier == 0 skips the draw entirely, so the
// result is the exact clipped mean.
ParamVector dp_aggregate(std::span<const ClippedUpdate> updates, const ParamVector& w_prev,
                         double bound, double noise_multiplier, Rng& rng);

}  // namespace fedsumm
