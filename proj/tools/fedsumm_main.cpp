#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedsumm/errors.hpp"
#include "fedsumm/experiment.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int do_run(const std::string& config_path, const std::string& out_override,
           std::optional<std::uint64_t> seed_override) {
  fedsumm::ExperimentConfig config = fedsumm::load_experiment_config(config_path);
  if (seed_override) {
    config.seed = *seed_override;
    config.rounds.seed = *seed_override;
    config.data.seed = fedsumm::derive_seed(*seed_override, {fedsumm::tag64("data")});
    if (config.dp) config.dp->seed = fedsumm::derive_seed(*seed_override, {fedsumm::tag64("dp")});
  }
  if (!out_override.empty()) config.output_dir = out_override;
  if (config.output_dir.empty()) {
    throw fedsumm::ConfigError("no output directory (set output_dir in the config or pass --out)");
  }
  fedsumm::ExperimentResult result = fedsumm::run_configured(config);
  fedsumm::write_artifacts(config, result, config.output_dir);
  std::cout << "wrote " << result.rounds.size() << " rounds to " << config.output_dir << "\n";
  return 0;
}

int do_sweep(const std::string& config_path, const std::string& out_override,
             std::optional<std::uint64_t> seed_override) {
  fedsumm::SweepSpec spec = fedsumm::load_sweep_spec(config_path);
  if (seed_override) {
    spec.base.seed = *seed_override;
    spec.base.rounds.seed = *seed_override;
    spec.base.data.seed = fedsumm::derive_seed(*seed_override, {fedsumm::tag64("data")});
    if (spec.base.dp) {
      spec.base.dp->seed = fedsumm::derive_seed(*seed_override, {fedsumm::tag64("dp")});
    }
  }
  std::string out_dir = out_override.empty() ? spec.base.output_dir : out_override;
  if (out_dir.empty()) {
    throw fedsumm::ConfigError("no output directory (set base.output_dir or pass --out)");
  }
  fedsumm::run_sweep(spec, out_dir);
  std::cout << "wrote " << spec.values.size() << " cells to " << out_dir << "\n";
  return 0;
}

int do_score(const std::string& pairs_path, const std::string& tokenizer_name) {
  fedsumm::Tokenizer tokenizer = tokenizer_name == "char" ? fedsumm::Tokenizer::kChar
                                                          : fedsumm::Tokenizer::kWhitespace;
  auto pairs = fedsumm::score_pairs_file(pairs_path, tokenizer);
  std::cout << fedsumm::score_report_csv(pairs);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator: FedAvg / FedSUMM with optional DP aggregation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed_override;
  std::string pairs_path;
  std::string tokenizer = "whitespace";

  CLI::App* run = app.add_subcommand("run", "run one experiment from a config file");
  run->add_option("--config", config_path, "experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "output directory (overrides config output_dir)");
  run->add_option("--seed", seed_override, "seed override");

  CLI::App* sweep = app.add_subcommand("sweep", "run a sweep spec (rounds|clients|epsilon|skew)");
  sweep->add_option("--config", config_path, "sweep spec (JSON)")->required();
  sweep->add_option("--out", out_dir, "output directory (overrides base output_dir)");
  sweep->add_option("--seed", seed_override, "base seed override");

  CLI::App* score = app.add_subcommand("score", "ROUGE-score candidate/reference pairs (JSONL)");
  score->add_option("file", pairs_path, "JSONL with candidate/reference fields")->required();
  score->add_option("--tokenizer", tokenizer, "whitespace|char")
      ->check(CLI::IsMember({"whitespace", "char"}));

  try {
    app.parse(argc, argv);
    if (run->parsed()) return do_run(config_path, out_dir, seed_override);
    if (sweep->parsed()) return do_sweep(config_path, out_dir, seed_override);
    return do_score(pairs_path, tokenizer);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const fedsumm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
