#include "fedsumm/gradient_adapter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsumm/errors.hpp"
#include "fedsumm/numeric.hpp"

namespace fedsumm {

void MemoryGradientStore::upsert(MemoryEntry entry) {
  for (MemoryEntry& existing : entries) {
    if (existing.client_id == entry.client_id) {
      existing = std::move(entry);
      return;
    }
  }
  entries.push_back(std::move(entry));
}

const MemoryEntry* MemoryGradientStore::find(int client_id) const {
  for (const MemoryEntry& e : entries) {
    if (e.client_id == client_id) return &e;
  }
  return nullptr;
}

int MemoryGradientStore::rank_of(int client_id) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].client_id == client_id) return static_cast<int>(i);
  }
  return -1;
}

double DiscrepancyState::ratio() const {
  if (rounds_seen == 0) return 1.0;
  return sum_local / sum_global;
}

void validate(const AdapterConfig& config) {
  if (config.epsilon < 0.0) throw ConfigError("adapter: epsilon must be >= 0");
  if (config.norm_tolerance <= 0.0) throw ConfigError("adapter: norm_tolerance must be > 0");
  if (config.correction_rate <= 0.0) throw ConfigError("adapter: correction_rate must be > 0");
}

double softmax_summary(const ParamVector& w) {
  if (w.empty()) throw ConfigError("softmax_summary: empty parameter vector");
  double wmax = w[0];
  for (double x : w) {
    if (!std::isfinite(x)) throw NumericalError("softmax_summary: non-finite parameter");
    wmax = std::max(wmax, x);
  }
  double denom = 0.0;
  for (double x : w) denom += std::exp(x - wmax);
  return 1.0 / denom;
}

DiscrepancyState update_discrepancy(DiscrepancyState state, const ParamVector& w_local,
                                    const ParamVector& w_global) {
  if (w_local.size() != w_global.size()) {
    throw ProtocolError("update_discrepancy: dim mismatch between local and global params");
  }
  state.sum_local += softmax_summary(w_local);
  state.sum_global += softmax_summary(w_global);
  state.rounds_seen += 1;
  return state;
}

MemoryGradientStore sort_store(MemoryGradientStore store,
                               std::span<const std::pair<int, double>> losses) {
  for (const auto& [client_id, client_loss] : losses) {
    if (store.find(client_id) == nullptr) {
      throw ProtocolError("sort_store: no memory entry for client " + std::to_string(client_id));
    }
  }
  std::sort(store.entries.begin(), store.entries.end(),
            [](const MemoryEntry& a, const MemoryEntry& b) {
              if (a.loss != b.loss) return a.loss < b.loss;
              return a.client_id < b.client_id;
            });
  return store;
}

ParamVector adapt(const MemoryGradientStore& sorted_store, int rank, double epsilon, double rho,
                  const ParamVector& g_client, double norm_tolerance) {
  if (rank < 0 || rank >= static_cast<int>(sorted_store.entries.size())) {
    throw ProtocolError("adapt: rank " + std::to_string(rank) + " out of range for store of size " +
                        std::to_string(sorted_store.entries.size()));
  }
  const ParamVector& stored = sorted_store.entries[static_cast<std::size_t>(rank)].gradient;
  if (stored.size() != g_client.size()) {
    throw ProtocolError("adapt: stored gradient dim " + std::to_string(stored.size()) +
                        " != client gradient dim " + std::to_string(g_client.size()));
  }
  const double scale = epsilon * rho;
  const bool norm_is_one = std::fabs(l2_norm(g_client) - 1.0) <= norm_tolerance;
  if (norm_is_one || scale == 0.0) {
    return ParamVector(g_client.size(), 0.0);
  }
  ParamVector correction = stored;
  for (double& x : correction) x *= scale;
  return correction;
}

double modulation_term(double rho, double epsilon, double loss_now, double loss_prev,
                       double grad_norm) {
  return epsilon * rho * (loss_now - loss_prev) * std::max(grad_norm, 1.0);
}

PersonalizeResult personalize(std::span<const ClientReport> reports, AdapterState& state,
                              const AdapterConfig& config) {
  validate(config);
  std::vector<std::pair<int, double>> losses;
  losses.reserve(reports.size());
  for (const ClientReport& report : reports) {
    state.store.upsert(MemoryEntry{report.client_id, report.gradient, report.loss, report.round});
    losses.emplace_back(report.client_id, report.loss);
  }
  state.store = sort_store(std::move(state.store), losses);

  PersonalizeResult result;
  result.store_order.reserve(state.store.entries.size());
  for (const MemoryEntry& e : state.store.entries) result.store_order.push_back(e.client_id);

  for (const ClientReport& report : reports) {
    const int rank = state.store.rank_of(report.client_id);
    const double rho = state.discrepancy[report.client_id].ratio();
    result.corrections[report.client_id] =
        adapt(state.store, rank, config.epsilon, rho, report.gradient, config.norm_tolerance);

    auto prev = state.previous_loss.find(report.client_id);
    const double loss_prev = prev == state.previous_loss.end() ? report.loss : prev->second;
    result.modulation[report.client_id] = modulation_term(
        rho, config.epsilon, report.loss, loss_prev, l2_norm(report.gradient));
    state.previous_loss[report.client_id] = report.loss;
  }
  return result;
}

}  // namespace fedsumm
