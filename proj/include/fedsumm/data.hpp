#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsumm/model.hpp"

namespace fedsumm {

struct Partition {
  int client_id = 0;
  std::vector<Example> examples;

  bool operator==(const Partition&) const = default;
};

enum class Scheme { kIid, kLabelSkew, kConceptShift, kFile };

std::string to_string(Scheme scheme);
Scheme scheme_from_string(const std::string& s);

struct HeterogeneityConfig {
  Scheme scheme = Scheme::kIid;
  double skew = 0.0;  // in [0, 1]
  int clients = 2;
  int examples_per_client = 1;
  std::uint64_t seed = 0;
};

// Synthesizes `clients` equally sized partitions, deterministic in seed.
//
//   iid           features drawn per class around fixed class means; class
//                 counts per client are exactly balanced (stratified).
//   label-skew    per-client class proportions ~ Dirichlet(alpha) with
//                 alpha = (1 - skew) * 10 + 0.05; features as in iid.
//   concept-shift per-client ground-truth weights w*_c = w*_base + skew * d_c
//                 (d_c a fixed per-client direction), so pairwise distances
//                 between client optima scale with skew. Targets come from
//                 w*_c: real targets plus small noise for squared error,
//                 argmax class for cross entropy.
//
// iid and label-skew require a cross-entropy model (they shape the class
// distribution); concept-shift works with either loss.
std::vector<Partition> generate(const HeterogeneityConfig& config, const ModelSpec& spec);

// One record per line: {"client_id": int, "features": [...], "target": int or [...]}.
// Partitions come back grouped by client_id (ascending), examples in file
// order. Malformed lines raise ParseError with the 1-based line number.
std::vector<Partition> load_jsonl(const std::string& path);

// Inverse of load_jsonl for generated data; clients ascending, examples in
// partition order. Doubles serialize shortest-round-trip so load(save(x)) == x.
void save_jsonl(const std::vector<Partition>& partitions, const std::string& path);

}  // namespace fedsumm
