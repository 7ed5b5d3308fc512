#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsumm/data.hpp"
#include "fedsumm/dp.hpp"
#include "fedsumm/gradient_adapter.hpp"
#include "fedsumm/protocol.hpp"

namespace fedsumm {

struct ExperimentConfig {
  std::string run_label = "run";
  Algo algo = Algo::kFedAvg;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::optional<double> target_loss;
  RoundConfig rounds;
  ModelSpec model;
  HeterogeneityConfig data;
  std::string data_path;  // scheme == kFile only
  std::optional<AdapterConfig> adapter;
  std::optional<DpConfig> dp;
};

// Strict parse: unknown keys anywhere are ConfigErrors naming the key and the
// section; missing required keys likewise. Defaults are materialized so the
// echoed document stands alone.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::string& path);
void validate(const ExperimentConfig& config);

// Fully resolved document; parse_experiment_config(echo_config(c)) == c.
nlohmann::json echo_config(const ExperimentConfig& config);

// Stable 64-bit hash of the resolved config, ignoring output_dir (the same
// experiment written elsewhere hashes the same).
std::string config_hash(const ExperimentConfig& config);

// Generates or loads the dataset per config. File-backed partitions are
// re-indexed to 0..clients-1 (order preserved).
std::vector<Partition> materialize_data(const ExperimentConfig& config);

ExperimentResult run_configured(const ExperimentConfig& config);

// Writes metrics.csv, config_echo.json and summary.json under out_dir
// (created if missing).
void write_artifacts(const ExperimentConfig& config, const ExperimentResult& result,
                     const std::string& out_dir);

// Locale-independent shortest representation (round-trips exactly).
std::string format_double(double value);
// Locale-independent, 17 significant digits; used for metrics.csv cells.
std::string format_metric(double value);

std::string metrics_csv_header();
std::string metrics_csv_row(const RoundMetrics& row);

struct SweepSpec {
  std::string variable;  // rounds | clients | epsilon | skew
  std::vector<double> values;
  ExperimentConfig base;
};

SweepSpec parse_sweep_spec(const nlohmann::json& doc);
SweepSpec load_sweep_spec(const std::string& path);

// The config for one sweep cell: the variable applied, the cell sub-seed
// derived (rounds cells keep the base seed so trajectories stay
// prefix-consistent), output_dir pointed at a per-cell subdirectory.
ExperimentConfig sweep_cell_config(const SweepSpec& spec, double value);

// Runs every cell, writes per-cell artifacts plus combined.csv under out_dir.
void run_sweep(const SweepSpec& spec, const std::string& out_dir);

enum class Tokenizer { kWhitespace, kChar };

TokenSeq tokenize(const std::string& text, Tokenizer tokenizer);

struct ScoredPair {
  RougeScore rouge1;
  RougeScore rouge2;
  RougeScore rougeL;
};

// Reads {"candidate": ..., "reference": ...} JSONL and scores every pair.
// Throws ParseError on malformed lines or when the file holds no pairs.
std::vector<ScoredPair> score_pairs_file(const std::string& path, Tokenizer tokenizer);

// CSV with one row per pair and a trailing mean row.
std::string score_report_csv(const std::vector<ScoredPair>& pairs);

}  // namespace fedsumm
