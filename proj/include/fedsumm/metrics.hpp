#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsumm/model.hpp"

namespace fedsumm {

// Pre-tokenized text; tokens compare by exact equality.
using TokenSeq = std::vector<std::string>;

struct RougeScore {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
};

// N-gram overlap with clipped counts: for every distinct n-gram the match
// credit is min(candidate count, reference count). Empty inputs or n longer
// than a sequence give zero components.
RougeScore rouge_n(const TokenSeq& candidate, const TokenSeq& reference, int n);

// Longest-common-subsequence recall/precision with plain harmonic-mean F1.
RougeScore rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

// exp(mean cross-entropy in nats) over the dataset. Squared-error models
// throw UnsupportedMetricError.
double perplexity(const ModelSpec& spec, const ParamVector& w, std::span<const Example> dataset);

struct DpTelemetry {
  double median_norm = 0.0;
  double clipped_fraction = 0.0;
  double noise_multiplier = 0.0;
};

// One row of the experiment output stream. rho/modulation maps hold only the
// round's participants.
struct RoundMetrics {
  int round = 0;
  double global_loss = 0.0;
  std::map<int, double> per_client_loss;
  std::map<int, double> rho_per_client;
  std::map<int, double> modulation_per_client;
  std::vector<int> store_order;  // memory store client ids, loss-ascending
  std::optional<double> perplexity;
  std::optional<RougeScore> rouge;
  std::optional<DpTelemetry> dp;

  double rho_mean() const;
  double rho_max_abs_dev() const;  // max |rho - 1| over participants
};

}  // namespace fedsumm
