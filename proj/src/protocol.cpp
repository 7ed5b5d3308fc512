#include "fedsumm/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

#include "fedsumm/dp.hpp"
#include "fedsumm/errors.hpp"
#include "fedsumm/gradient_adapter.hpp"
#include "fedsumm/numeric.hpp"
#include "fedsumm/rng.hpp"

namespace fedsumm {

namespace {

const std::uint64_t kSampleTag = tag64("client-sample");
const std::uint64_t kClientTag = tag64("client-update");
const std::uint64_t kInitTag = tag64("param-init");
const std::uint64_t kNoiseTag = tag64("dp-noise");

}  // namespace

void validate(const RoundConfig& config) {
  if (config.total_rounds < 1) throw ConfigError("rounds: total_rounds must be >= 1");
  if (config.clients < 2) throw ConfigError("rounds: clients must be >= 2");
  if (!(config.sample_fraction > 0.0) || config.sample_fraction > 1.0) {
    throw ConfigError("rounds: sample_fraction must lie in (0, 1]");
  }
  if (config.local_steps < 1) throw ConfigError("rounds: local_steps must be >= 1");
  if (config.batch_size < 1) throw ConfigError("rounds: batch_size must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("rounds: learning_rate must be > 0");
}

std::string to_string(Algo algo) { return algo == Algo::kFedAvg ? "fedavg" : "fedsumm"; }

Algo algo_from_string(const std::string& s) {
  if (s == "fedavg") return Algo::kFedAvg;
  if (s == "fedsumm") return Algo::kFedSumm;
  throw ConfigError("unknown algo '" + s + "' (expected fedavg|fedsumm)");
}

std::vector<int> sample_clients(const ServerState& state, int clients, double q) {
  if (!(q > 0.0) || q > 1.0) throw ConfigError("sample_clients: q must lie in (0, 1]");
  if (clients < 1) throw ConfigError("sample_clients: need at least one client");
  const int take = static_cast<int>(std::ceil(q * clients));

  std::vector<int> ids(static_cast<std::size_t>(clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (take < clients) {
    Rng rng(derive_seed(state.seed, {kSampleTag, static_cast<std::uint64_t>(state.round)}));
    // Partial Fisher-Yates: the first `take` slots end up uniform without
    // replacement.
    for (int i = 0; i < take; ++i) {
      std::size_t j = static_cast<std::size_t>(i) +
                      static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(clients - i)));
      std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(take));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

ClientReport client_update(int client_id, const ParamVector& w_in,
                           const ParamVector* personalization, const Partition& partition,
                           const ModelSpec& spec, int local_steps, int batch_size,
                           double learning_rate, std::uint64_t round_seed) {
  if (partition.examples.empty()) {
    throw ProtocolError("client_update: client " + std::to_string(client_id) +
                        " has an empty partition");
  }
  if (personalization != nullptr && personalization->size() != w_in.size()) {
    throw ProtocolError("client_update: personalization dim " +
                        std::to_string(personalization->size()) + " != param dim " +
                        std::to_string(w_in.size()));
  }
  const int n = static_cast<int>(partition.examples.size());
  int b = batch_size;
  if (b > n) {
    std::cerr << "warning: client " << client_id << ": batch_size " << b << " clamped to "
              << n << " (partition size)\n";
    b = n;
  }

  ParamVector w = w_in;
  if (personalization != nullptr) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= (*personalization)[i];
  }

  std::vector<int> order(static_cast<std::size_t>(n));
  std::vector<Example> batch;
  double final_epoch_loss = 0.0;

  for (int epoch = 1; epoch <= local_steps; ++epoch) {
    Rng shuffle_rng(derive_seed(round_seed, {tag64("epoch-shuffle"), static_cast<std::uint64_t>(epoch)}));
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    NeumaierSum epoch_loss;
    for (int start = 0; start < n; start += b) {
      const int end = std::min(start + b, n);
      std::vector<int> members(order.begin() + start, order.begin() + end);
      std::sort(members.begin(), members.end());
      batch.clear();
      for (int idx : members) batch.push_back(partition.examples[static_cast<std::size_t>(idx)]);

      epoch_loss.add(loss(spec, w, batch) * static_cast<double>(batch.size()));
      w = sgd_step(spec, w, batch, learning_rate);
    }
    if (epoch == local_steps) {
      final_epoch_loss = epoch_loss.value() / static_cast<double>(n);
    }
  }

  ClientReport report;
  report.client_id = client_id;
  report.params = std::move(w);
  report.loss = final_epoch_loss;
  report.gradient = gradient(spec, report.params, partition.examples);
  report.example_count = n;
  return report;
}

ParamVector fedavg_aggregate(std::span<const ClientReport> reports, bool size_weighted) {
  if (reports.empty()) throw ProtocolError("fedavg_aggregate: no reports");
  std::vector<const ClientReport*> ordered;
  ordered.reserve(reports.size());
  for (const ClientReport& r : reports) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const ClientReport* a, const ClientReport* b) { return a->client_id < b->client_id; });

  const std::size_t dim = ordered.front()->params.size();
  for (const ClientReport* r : ordered) {
    if (r->params.size() != dim) {
      throw ProtocolError("fedavg_aggregate: client " + std::to_string(r->client_id) +
                          " params have dim " + std::to_string(r->params.size()) + ", expected " +
                          std::to_string(dim));
    }
    if (size_weighted && r->example_count <= 0) {
      throw ProtocolError("fedavg_aggregate: client " + std::to_string(r->client_id) +
                          " has no example count for size weighting");
    }
  }
  ParamVector mean(dim, 0.0);
  double total_weight = 0.0;
  for (const ClientReport* r : ordered) {
    const double weight = size_weighted ? static_cast<double>(r->example_count) : 1.0;
    total_weight += weight;
    for (std::size_t i = 0; i < dim; ++i) mean[i] += weight * r->params[i];
  }
  const double inv = 1.0 / total_weight;
  for (double& x : mean) x *= inv;
  return mean;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng(derive_seed(seed, {kInitTag}));
  const double r = 1.0 / std::sqrt(static_cast<double>(spec.input_dim) + 1.0);
  ParamVector w(static_cast<std::size_t>(param_dim(spec)));
  for (double& x : w) x = (2.0 * rng.next_unit() - 1.0) * r;
  return w;
}

ExperimentResult run_experiment(const RoundConfig& config, Algo algo, const AdapterConfig* adapter,
                                const DpConfig* dp, std::span<const Partition> partitions,
                                const ModelSpec& spec) {
  validate(config);
  validate(spec);
  if ((algo == Algo::kFedSumm) != (adapter != nullptr)) {
    throw ConfigError("run_experiment: adapter config must be present iff algo is fedsumm");
  }
  if (adapter != nullptr) validate(*adapter);
  if (dp != nullptr) validate(*dp);
  if (static_cast<int>(partitions.size()) != config.clients) {
    throw ConfigError("run_experiment: " + std::to_string(partitions.size()) +
                      " partitions for " + std::to_string(config.clients) + " clients");
  }
  const int dim = param_dim(spec);
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    if (partitions[i].client_id != static_cast<int>(i)) {
      throw ConfigError("run_experiment: partitions must be indexed 0..clients-1; slot " +
                        std::to_string(i) + " holds client " +
                        std::to_string(partitions[i].client_id));
    }
    if (partitions[i].examples.empty()) {
      throw ConfigError("run_experiment: client " + std::to_string(i) + " has no examples");
    }
  }

  std::vector<Example> pooled;
  for (const Partition& p : partitions) {
    pooled.insert(pooled.end(), p.examples.begin(), p.examples.end());
  }

  ServerState state;
  state.seed = config.seed;
  state.round = 0;
  state.global_params = init_params(spec, config.seed);

  const bool dp_enabled = dp != nullptr && dp->enabled;
  AdapterState adapter_state;
  std::map<int, ParamVector> pending_corrections;

  ExperimentResult result;
  result.rounds.reserve(static_cast<std::size_t>(config.total_rounds));
  result.trajectory.reserve(static_cast<std::size_t>(config.total_rounds));

  for (int round = 1; round <= config.total_rounds; ++round) {
    state.round = round;
    try {
      std::vector<int> participants = sample_clients(state, config.clients, config.sample_fraction);

      std::vector<ClientReport> reports;
      reports.reserve(participants.size());
      for (int client_id : participants) {
        const ParamVector* correction = nullptr;
        ParamVector scaled;
        auto pending = pending_corrections.find(client_id);
        if (pending != pending_corrections.end()) {
          scaled = pending->second;
          for (double& x : scaled) x *= adapter->correction_rate;
          correction = &scaled;
        }
        const std::uint64_t round_seed = derive_seed(
            config.seed, {kClientTag, static_cast<std::uint64_t>(round),
                          static_cast<std::uint64_t>(client_id)});
        reports.push_back(client_update(client_id, state.global_params, correction,
                                        partitions[static_cast<std::size_t>(client_id)], spec,
                                        config.local_steps, config.batch_size,
                                        config.learning_rate, round_seed));
        reports.back().round = round;
        if (static_cast<int>(reports.back().params.size()) != dim) {
          throw ProtocolError("client " + std::to_string(client_id) + " returned bad param dim");
        }
      }

      RoundMetrics row;
      row.round = round;

      if (dp_enabled) {
        std::vector<ClippedUpdate> updates;
        std::vector<double> norms;
        updates.reserve(reports.size());
        for (const ClientReport& r : reports) {
          ParamVector delta(r.params.size());
          for (std::size_t i = 0; i < delta.size(); ++i) {
            delta[i] = r.params[i] - state.global_params[i];
          }
          norms.push_back(l2_norm(delta));
          updates.push_back(ClippedUpdate{r.client_id, std::move(delta), 0.0, false});
        }
        const double bound = median_norm(norms);
        int clipped_count = 0;
        for (std::size_t i = 0; i < updates.size(); ++i) {
          updates[i] = clip(updates[i].client_id, updates[i].delta_w, bound);
          clipped_count += updates[i].clipped ? 1 : 0;
        }
        Rng noise_rng(derive_seed(dp->seed, {kNoiseTag, static_cast<std::uint64_t>(round)}));
        state.global_params =
            dp_aggregate(updates, state.global_params, bound, dp->noise_multiplier, noise_rng);
        row.dp = DpTelemetry{bound,
                             static_cast<double>(clipped_count) / static_cast<double>(updates.size()),
                             dp->noise_multiplier};
      } else {
        state.global_params = fedavg_aggregate(reports, config.size_weighted);
      }

      // Discrepancy bookkeeping runs for every algorithm so fedavg runs log
      // rho too; local params are compared against the round's new global.
      for (const ClientReport& r : reports) {
        DiscrepancyState& disc = adapter_state.discrepancy[r.client_id];
        disc = update_discrepancy(disc, r.params, state.global_params);
        row.rho_per_client[r.client_id] = disc.ratio();
      }

      if (algo == Algo::kFedSumm) {
        PersonalizeResult personalized = personalize(reports, adapter_state, *adapter);
        for (auto& [client_id, correction] : personalized.corrections) {
          pending_corrections[client_id] = std::move(correction);
        }
        row.modulation_per_client = std::move(personalized.modulation);
        row.store_order = std::move(personalized.store_order);
      }

      row.global_loss = loss(spec, state.global_params, pooled);
      for (const ClientReport& r : reports) row.per_client_loss[r.client_id] = r.loss;
      if (spec.loss == LossKind::kCrossEntropy) {
        row.perplexity = std::exp(row.global_loss);
      }

      result.trajectory.push_back(state.global_params);
      result.rounds.push_back(std::move(row));
    } catch (const std::runtime_error& e) {
      throw ProtocolError("round " + std::to_string(round) + ": " + e.what());
    }
  }
  result.final_params = state.global_params;
  return result;
}

}  // namespace fedsumm
