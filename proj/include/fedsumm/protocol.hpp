#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsumm/data.hpp"
#include "fedsumm/metrics.hpp"
#include "fedsumm/model.hpp"

namespace fedsumm {

struct AdapterConfig;
struct DpConfig;

struct RoundConfig {
  int total_rounds = 1;
  int clients = 2;
  double sample_fraction = 1.0;  // q in (0, 1]
  int local_steps = 1;           // epochs of local SGD per round
  int batch_size = 1;
  double learning_rate = 0.01;
  bool size_weighted = false;  // weight the aggregate by client dataset size
  std::uint64_t seed = 0;
};

void validate(const RoundConfig& config);

struct ClientReport {
  int client_id = 0;
  ParamVector gradient;  // full-data gradient at the final local params
  double loss = 0.0;     // mean training loss over the final local epoch
  ParamVector params;    // local params after local_steps epochs
  int round = 0;
  int example_count = 0;  // partition size, for size-weighted aggregation
};

struct ServerState {
  ParamVector global_params;
  int round = 0;
  std::uint64_t seed = 0;
};

enum class Algo { kFedAvg, kFedSumm };

std::string to_string(Algo algo);
Algo algo_from_string(const std::string& s);

// ceil(q * clients) distinct ids, uniform without replacement from the
// round-scoped stream, returned ascending.
std::vector<int> sample_clients(const ServerState& state, int clients, double q);

// One client's local work for a round: start from
//   w_in - personalization            (when personalization != nullptr)
// then run `local_steps` epochs of mini-batch SGD with batches of size
// `batch_size` drawn by seeded shuffle (batch members kept in ascending
// example order). Batch sizes larger than the partition are clamped with a
// warning on stderr. The report carries the final params, the mean training
// loss seen over the final epoch, and the full-partition gradient at the
// final params.
ClientReport client_update(int client_id, const ParamVector& w_in,
                           const ParamVector* personalization, const Partition& partition,
                           const ModelSpec& spec, int local_steps, int batch_size,
                           double learning_rate, std::uint64_t round_seed);

// Mean of participant params, summed in ascending client_id order. Uniform
// weights by default; size_weighted uses each report's example_count instead.
ParamVector fedavg_aggregate(std::span<const ClientReport> reports, bool size_weighted = false);

// Seeded uniform init in (-r, r), r = 1 / sqrt(input_dim + 1). Zeros would
// leave the tanh MLP with an identically zero gradient.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  std::vector<ParamVector> trajectory;  // global params after each round
  ParamVector final_params;
};

// Runs the full loop: sample -> broadcast -> local updates -> aggregate
// (plain mean, or clipped-noisy mean when dp is enabled) -> discrepancy
// bookkeeping -> gradient adapter (fedsumm only). Deterministic in the
// configured seeds. `adapter` must be non-null iff algo == kFedSumm. Errors
// from any stage are rethrown with the round number attached.
ExperimentResult run_experiment(const RoundConfig& config, Algo algo, const AdapterConfig* adapter,
                                const DpConfig* dp, std::span<const Partition> partitions,
                                const ModelSpec& spec);

}  // namespace fedsumm
