#pragma once

#include <map>
#include <span>
#include <utility>
#include <vector>

#include "fedsumm/model.hpp"
#include "fedsumm/protocol.hpp"

namespace fedsumm {

// Server-side memory of each client's latest reported gradient and loss.
struct MemoryEntry {
  int client_id = 0;
  ParamVector gradient;
  double loss = 0.0;
  int round = 0;
};

struct MemoryGradientStore {
  std::vector<MemoryEntry> entries;

  // Latest round wins; at most one entry per client.
  void upsert(MemoryEntry entry);
  const MemoryEntry* find(int client_id) const;
  int rank_of(int client_id) const;  // position in the current entry order, -1 if absent
};

// Running sums of the local and global softmax summaries; their ratio is the
// discrepancy ratio rho. rho near 1 means the local trajectory tracks the
// global one.
struct DiscrepancyState {
  double sum_local = 0.0;
  double sum_global = 0.0;
  int rounds_seen = 0;

  double ratio() const;  // 1.0 before any observation
};

struct AdapterConfig {
  double epsilon = 0.1;          // modulation strength; 0 disables adaptation
  double norm_tolerance = 1e-9;  // tolerance for the ||g|| != 1 guard
  double correction_rate = 1.0;  // step size applied to delivered corrections
};

void validate(const AdapterConfig& config);

// Peak of softmax(w) over the flattened parameter vector, computed with max
// subtraction: 1 / sum_i exp(w_i - max). Lies in [1/dim, 1]; equals 1/dim for
// constant vectors; invariant to adding a constant to every entry.
double softmax_summary(const ParamVector& w);

// Adds one (local, global) observation pair; returns the advanced state.
DiscrepancyState update_discrepancy(DiscrepancyState state, const ParamVector& w_local,
                                    const ParamVector& w_global);

// Reorders entries by ascending loss (ties by ascending client_id) after
// checking that every client mentioned in `losses` is present.
MemoryGradientStore sort_store(MemoryGradientStore store,
                               std::span<const std::pair<int, double>> losses);

// The stored gradient at `rank`, scaled by epsilon * rho — unless the
// client's own gradient norm is within norm_tolerance of 1, in which case no
// adaptation happens and the zero vector comes back. A zero scale also
// returns exact zeros.
ParamVector adapt(const MemoryGradientStore& sorted_store, int rank, double epsilon, double rho,
                  const ParamVector& g_client, double norm_tolerance);

// Diagnostic: epsilon * rho * (loss_now - loss_prev) * max(grad_norm, 1).
// The per-round loss difference stands in for the continuous update change
// rate; the delivered correction of adapt() is what realizes the modulation.
double modulation_term(double rho, double epsilon, double loss_now, double loss_prev,
                       double grad_norm);

// Everything the server keeps between rounds for the adapter.
struct AdapterState {
  MemoryGradientStore store;
  std::map<int, DiscrepancyState> discrepancy;
  std::map<int, double> previous_loss;
};

struct PersonalizeResult {
  std::map<int, ParamVector> corrections;  // per participant, unscaled by correction_rate
  std::map<int, double> modulation;        // diagnostic per participant
  std::vector<int> store_order;            // client ids in loss-ascending order
};

// One round of the server-side adapter: upserts every report into the store,
// re-sorts by loss, then hands each participant the adapted gradient at its
// own loss rank using its per-client discrepancy ratio. The caller applies
// corrections at the next round as w_start = w_broadcast - correction_rate *
// correction.
PersonalizeResult personalize(std::span<const ClientReport> reports, AdapterState& state,
                              const AdapterConfig& config);

}  // namespace fedsumm
