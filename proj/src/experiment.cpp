#include "fedsumm/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "fedsumm/errors.hpp"
#include "fedsumm/rng.hpp"

namespace fedsumm {

namespace {

// Strict accessor over one JSON object: every key must be consumed, anything
// left over is a hard error naming the section.
class Section {
 public:
  Section(const nlohmann::json& obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (!obj_.is_object()) throw ConfigError("'" + name_ + "' must be an object");
  }

  template <typename T>
  T require(const std::string& key) {
    if (!obj_.contains(key)) {
      throw ConfigError("missing required key '" + key + "' in '" + name_ + "'");
    }
    return fetch<T>(key);
  }

  template <typename T>
  T value_or(const std::string& key, T fallback) {
    if (!obj_.contains(key)) return fallback;
    return fetch<T>(key);
  }

  bool has(const std::string& key) {
    return obj_.contains(key);
  }

  const nlohmann::json& child(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  void finish() {
    for (const auto& [key, unused] : obj_.items()) {
      if (!seen_.contains(key)) {
        throw ConfigError("unknown key '" + key + "' in '" + name_ + "'");
      }
    }
  }

 private:
  template <typename T>
  T fetch(const std::string& key) {
    seen_.insert(key);
    try {
      return obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + key + "' in '" + name_ + "': " + e.what());
    }
  }

  const nlohmann::json& obj_;
  std::string name_;
  std::set<std::string> seen_;
};

std::uint64_t double_bits(double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  return bits;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config file '" + path + "': " + e.what());
  }
}

LossKind default_loss(ModelKind kind) {
  return kind == ModelKind::kLinear ? LossKind::kSquaredError : LossKind::kCrossEntropy;
}

void append_csv_cell(std::string& out, double v) {
  out += format_metric(v);
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_metric(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

ExperimentConfig parse_experiment_config(const nlohmann::json& doc) {
  ExperimentConfig config;
  Section top(doc, "config");
  config.run_label = top.value_or<std::string>("run_label", "run");
  config.algo = algo_from_string(top.require<std::string>("algo"));
  config.seed = top.require<std::uint64_t>("seed");
  config.output_dir = top.value_or<std::string>("output_dir", "");
  if (top.has("target_loss")) config.target_loss = top.require<double>("target_loss");

  {
    Section rounds(top.child("rounds"), "rounds");
    config.rounds.total_rounds = rounds.require<int>("total_rounds");
    config.rounds.clients = rounds.require<int>("clients");
    config.rounds.sample_fraction = rounds.value_or<double>("sample_fraction", 1.0);
    config.rounds.local_steps = rounds.value_or<int>("local_steps", 1);
    config.rounds.batch_size = rounds.require<int>("batch_size");
    config.rounds.learning_rate = rounds.require<double>("learning_rate");
    config.rounds.size_weighted = rounds.value_or<bool>("size_weighted", false);
    config.rounds.seed = config.seed;
    rounds.finish();
  }
  {
    Section model(top.child("model"), "model");
    config.model.kind = model_kind_from_string(model.require<std::string>("kind"));
    config.model.input_dim = model.require<int>("input_dim");
    config.model.output_dim = model.require<int>("output_dim");
    config.model.hidden_dim = model.value_or<int>("hidden_dim", 0);
    config.model.loss = model.has("loss")
                            ? loss_kind_from_string(model.require<std::string>("loss"))
                            : default_loss(config.model.kind);
    model.finish();
  }
  {
    Section data(top.child("data"), "data");
    config.data.scheme = scheme_from_string(data.require<std::string>("scheme"));
    config.data.clients = config.rounds.clients;
    if (config.data.scheme == Scheme::kFile) {
      config.data_path = data.require<std::string>("path");
      config.data.skew = 0.0;
      config.data.examples_per_client = 1;
      config.data.seed = 0;
    } else {
      config.data.skew = data.value_or<double>("skew", 0.0);
      config.data.examples_per_client = data.require<int>("examples_per_client");
      config.data.seed = data.value_or<std::uint64_t>(
          "seed", derive_seed(config.seed, {tag64("data")}));
    }
    data.finish();
  }
  if (top.has("adapter")) {
    Section adapter(top.child("adapter"), "adapter");
    AdapterConfig a;
    a.epsilon = adapter.value_or<double>("epsilon", 0.1);
    a.norm_tolerance = adapter.value_or<double>("norm_tolerance", 1e-9);
    a.correction_rate = adapter.value_or<double>("correction_rate", 1.0);
    adapter.finish();
    config.adapter = a;
  }
  if (top.has("dp")) {
    Section dp(top.child("dp"), "dp");
    DpConfig d;
    d.noise_multiplier = dp.require<double>("noise_multiplier");
    d.delta = dp.value_or<double>("delta", 1e-5);
    d.enabled = dp.value_or<bool>("enabled", true);
    d.seed = dp.value_or<std::uint64_t>("seed", derive_seed(config.seed, {tag64("dp")}));
    dp.finish();
    config.dp = d;
  }
  top.finish();
  validate(config);
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_json_file(path));
}

void validate(const ExperimentConfig& config) {
  validate(config.rounds);
  validate(config.model);
  if ((config.algo == Algo::kFedSumm) != config.adapter.has_value()) {
    throw ConfigError("adapter section must be present exactly when algo is fedsumm");
  }
  if (config.adapter) validate(*config.adapter);
  if (config.dp) validate(*config.dp);
  if (config.data.scheme == Scheme::kFile) {
    if (config.data_path.empty()) throw ConfigError("data: scheme 'file' requires path");
  } else {
    if (config.data.skew < 0.0 || config.data.skew > 1.0) {
      throw ConfigError("data: skew must lie in [0, 1]");
    }
    if (config.data.examples_per_client < 1) {
      throw ConfigError("data: examples_per_client must be >= 1");
    }
  }
}

nlohmann::json echo_config(const ExperimentConfig& config) {
  nlohmann::json doc;
  doc["run_label"] = config.run_label;
  doc["algo"] = to_string(config.algo);
  doc["seed"] = config.seed;
  doc["output_dir"] = config.output_dir;
  if (config.target_loss) doc["target_loss"] = *config.target_loss;
  doc["rounds"] = {{"total_rounds", config.rounds.total_rounds},
                   {"clients", config.rounds.clients},
                   {"sample_fraction", config.rounds.sample_fraction},
                   {"local_steps", config.rounds.local_steps},
                   {"batch_size", config.rounds.batch_size},
                   {"learning_rate", config.rounds.learning_rate},
                   {"size_weighted", config.rounds.size_weighted}};
  doc["model"] = {{"kind", to_string(config.model.kind)},
                  {"input_dim", config.model.input_dim},
                  {"output_dim", config.model.output_dim},
                  {"hidden_dim", config.model.hidden_dim},
                  {"loss", to_string(config.model.loss)}};
  if (config.data.scheme == Scheme::kFile) {
    doc["data"] = {{"scheme", "file"}, {"path", config.data_path}};
  } else {
    doc["data"] = {{"scheme", to_string(config.data.scheme)},
                   {"skew", config.data.skew},
                   {"examples_per_client", config.data.examples_per_client},
                   {"seed", config.data.seed}};
  }
  if (config.adapter) {
    doc["adapter"] = {{"epsilon", config.adapter->epsilon},
                      {"norm_tolerance", config.adapter->norm_tolerance},
                      {"correction_rate", config.adapter->correction_rate}};
  }
  if (config.dp) {
    doc["dp"] = {{"noise_multiplier", config.dp->noise_multiplier},
                 {"delta", config.dp->delta},
                 {"enabled", config.dp->enabled},
                 {"seed", config.dp->seed}};
  }
  return doc;
}

std::string config_hash(const ExperimentConfig& config) {
  nlohmann::json doc = echo_config(config);
  doc.erase("output_dir");
  std::uint64_t h = tag64(doc.dump());
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), h, 16);
  std::string hex(buf, res.ptr);
  return std::string(16 - hex.size(), '0') + hex;
}

std::vector<Partition> materialize_data(const ExperimentConfig& config) {
  std::vector<Partition> partitions;
  if (config.data.scheme == Scheme::kFile) {
    partitions = load_jsonl(config.data_path);
    if (static_cast<int>(partitions.size()) != config.rounds.clients) {
      throw ConfigError("dataset '" + config.data_path + "' holds " +
                        std::to_string(partitions.size()) + " clients, config expects " +
                        std::to_string(config.rounds.clients));
    }
    for (std::size_t i = 0; i < partitions.size(); ++i) {
      partitions[i].client_id = static_cast<int>(i);
    }
  } else {
    partitions = generate(config.data, config.model);
  }
  // Surface model/data mismatches as configuration problems before any round
  // starts.
  for (const Partition& p : partitions) {
    for (std::size_t i = 0; i < p.examples.size(); ++i) {
      const Example& e = p.examples[i];
      if (static_cast<int>(e.features.size()) != config.model.input_dim) {
        throw SchemaError("client " + std::to_string(p.client_id) + " example " +
                          std::to_string(i) + ": feature length " +
                          std::to_string(e.features.size()) + " != model input_dim " +
                          std::to_string(config.model.input_dim));
      }
      if (config.model.loss == LossKind::kCrossEntropy) {
        if (e.label < 0 || e.label >= config.model.output_dim) {
          throw SchemaError("client " + std::to_string(p.client_id) + " example " +
                            std::to_string(i) + ": class index " + std::to_string(e.label) +
                            " out of range");
        }
      } else if (static_cast<int>(e.target.size()) != config.model.output_dim) {
        throw SchemaError("client " + std::to_string(p.client_id) + " example " +
                          std::to_string(i) + ": target length " + std::to_string(e.target.size()) +
                          " != model output_dim " + std::to_string(config.model.output_dim));
      }
    }
  }
  return partitions;
}

ExperimentResult run_configured(const ExperimentConfig& config) {
  std::vector<Partition> partitions = materialize_data(config);
  const AdapterConfig* adapter = config.adapter ? &*config.adapter : nullptr;
  const DpConfig* dp = config.dp ? &*config.dp : nullptr;
  return run_experiment(config.rounds, config.algo, adapter, dp, partitions, config.model);
}

std::string metrics_csv_header() {
  return "round,global_loss,perplexity,rho_mean,rho_max_abs_dev,clipped_fraction,M,notes";
}

std::string metrics_csv_row(const RoundMetrics& row) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::string out = std::to_string(row.round);
  out += ',';
  append_csv_cell(out, row.global_loss);
  out += ',';
  append_csv_cell(out, row.perplexity.value_or(nan));
  out += ',';
  append_csv_cell(out, row.rho_mean());
  out += ',';
  append_csv_cell(out, row.rho_max_abs_dev());
  out += ',';
  append_csv_cell(out, row.dp ? row.dp->clipped_fraction : nan);
  out += ',';
  append_csv_cell(out, row.dp ? row.dp->median_norm : nan);
  out += ',';  // notes column, reserved
  return out;
}

void write_artifacts(const ExperimentConfig& config, const ExperimentResult& result,
                     const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream csv(fs::path(out_dir) / "metrics.csv");
    if (!csv) throw ConfigError("cannot write metrics.csv under '" + out_dir + "'");
    csv << metrics_csv_header() << '\n';
    for (const RoundMetrics& row : result.rounds) csv << metrics_csv_row(row) << '\n';
  }
  {
    ExperimentConfig echoed = config;
    echoed.output_dir = out_dir;
    std::ofstream echo(fs::path(out_dir) / "config_echo.json");
    echo << echo_config(echoed).dump(2) << '\n';
  }
  {
    nlohmann::json summary;
    const RoundMetrics& last = result.rounds.back();
    summary["final_loss"] = last.global_loss;
    summary["rounds_to_target"] = nullptr;
    if (config.target_loss) {
      for (const RoundMetrics& row : result.rounds) {
        if (row.global_loss <= *config.target_loss) {
          summary["rounds_to_target"] = row.round;
          break;
        }
      }
    }
    double rho_final = last.rho_mean();
    if (std::isnan(rho_final)) {
      summary["rho_final_mean"] = nullptr;
    } else {
      summary["rho_final_mean"] = rho_final;
    }
    summary["config_hash"] = config_hash(config);
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << summary.dump(2) << '\n';
  }
}

SweepSpec parse_sweep_spec(const nlohmann::json& doc) {
  Section top(doc, "sweep");
  SweepSpec spec;
  spec.variable = top.require<std::string>("variable");
  if (spec.variable != "rounds" && spec.variable != "clients" && spec.variable != "epsilon" &&
      spec.variable != "skew") {
    throw ConfigError("sweep: variable must be rounds|clients|epsilon|skew, got '" +
                      spec.variable + "'");
  }
  spec.values = top.require<std::vector<double>>("values");
  if (spec.values.empty()) throw ConfigError("sweep: values must be non-empty");
  for (std::size_t i = 1; i < spec.values.size(); ++i) {
    if (!(spec.values[i] > spec.values[i - 1])) {
      throw ConfigError("sweep: values must be strictly increasing");
    }
  }
  if (spec.variable == "rounds" || spec.variable == "clients") {
    for (double v : spec.values) {
      if (v != std::floor(v) || v < 1.0) {
        throw ConfigError("sweep: '" + spec.variable + "' values must be positive integers");
      }
    }
  }
  spec.base = parse_experiment_config(top.child("base"));
  top.finish();
  if (spec.variable == "epsilon" && spec.base.algo != Algo::kFedSumm) {
    throw ConfigError("sweep: epsilon sweep requires a fedsumm base config");
  }
  if (spec.variable == "skew" && spec.base.data.scheme == Scheme::kFile) {
    throw ConfigError("sweep: skew sweep cannot use a file-backed dataset");
  }
  return spec;
}

SweepSpec load_sweep_spec(const std::string& path) {
  return parse_sweep_spec(read_json_file(path));
}

ExperimentConfig sweep_cell_config(const SweepSpec& spec, double value) {
  ExperimentConfig cell = spec.base;
  if (spec.variable == "rounds") {
    cell.rounds.total_rounds = static_cast<int>(value);
    // Same process truncated at a different horizon: the seed must not move
    // or prefix consistency across cells is lost.
  } else {
    cell.seed = derive_seed(spec.base.seed, {tag64("sweep"), tag64(spec.variable), double_bits(value)});
    cell.rounds.seed = cell.seed;
    if (spec.base.data.scheme != Scheme::kFile) {
      cell.data.seed = derive_seed(cell.seed, {tag64("data")});
    }
    if (cell.dp) cell.dp->seed = derive_seed(cell.seed, {tag64("dp")});
    if (spec.variable == "clients") {
      cell.rounds.clients = static_cast<int>(value);
      cell.data.clients = static_cast<int>(value);
    } else if (spec.variable == "epsilon") {
      cell.adapter->epsilon = value;
    } else {
      cell.data.skew = value;
    }
  }
  std::string tagstr = spec.variable + "_" + format_double(value);
  cell.run_label = spec.base.run_label + "_" + tagstr;
  cell.output_dir = tagstr;  // relative to the sweep output dir
  validate(cell);
  return cell;
}

void run_sweep(const SweepSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::string combined = "variable,value,algo,final_loss,rounds_to_target,rho_final_mean,output_dir\n";

  for (double value : spec.values) {
    try {
      ExperimentConfig cell = sweep_cell_config(spec, value);
      std::string cell_dir = (fs::path(out_dir) / cell.output_dir).string();
      ExperimentResult result = run_configured(cell);
      write_artifacts(cell, result, cell_dir);
      const RoundMetrics& last = result.rounds.back();
      combined += spec.variable + "," + format_double(value) + "," + to_string(cell.algo) + ",";
      combined += format_metric(last.global_loss);
      combined += ",";
      if (cell.target_loss) {
        for (const RoundMetrics& row : result.rounds) {
          if (row.global_loss <= *cell.target_loss) {
            combined += std::to_string(row.round);
            break;
          }
        }
      }
      combined += ",";
      double rho_final = last.rho_mean();
      combined += std::isnan(rho_final) ? "" : format_metric(rho_final);
      combined += "," + cell.output_dir + "\n";
    } catch (const ConfigError& e) {
      throw ConfigError("sweep cell " + spec.variable + "=" + format_double(value) + ": " +
                        e.what());
    } catch (const std::runtime_error& e) {
      throw ProtocolError("sweep cell " + spec.variable + "=" + format_double(value) + ": " +
                          e.what());
    }
  }
  std::ofstream out(fs::path(out_dir) / "combined.csv");
  out << combined;
}

TokenSeq tokenize(const std::string& text, Tokenizer tokenizer) {
  TokenSeq tokens;
  if (tokenizer == Tokenizer::kWhitespace) {
    std::istringstream in(text);
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
  }
  // UTF-8 codepoint split; whitespace codepoints are dropped.
  std::size_t i = 0;
  while (i < text.size()) {
    unsigned char lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    len = std::min(len, text.size() - i);
    std::string token = text.substr(i, len);
    i += len;
    if (token.size() == 1 && std::isspace(static_cast<unsigned char>(token[0]))) continue;
    tokens.push_back(std::move(token));
  }
  return tokens;
}

std::vector<ScoredPair> score_pairs_file(const std::string& path, Tokenizer tokenizer) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open pairs file '" + path + "'");
  std::vector<ScoredPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!record.is_object() || !record.contains("candidate") || !record.contains("reference")) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": record needs candidate and reference");
    }
    if (!record["candidate"].is_string() || !record["reference"].is_string()) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": candidate and reference must be strings");
    }
    TokenSeq cand = tokenize(record["candidate"].get<std::string>(), tokenizer);
    TokenSeq ref = tokenize(record["reference"].get<std::string>(), tokenizer);
    pairs.push_back(ScoredPair{rouge_n(cand, ref, 1), rouge_n(cand, ref, 2), rouge_l(cand, ref)});
  }
  if (pairs.empty()) throw ParseError("pairs file '" + path + "': no pairs");
  return pairs;
}

std::string score_report_csv(const std::vector<ScoredPair>& pairs) {
  std::string out = "pair,rouge1_f1,rouge2_f1,rougeL_f1\n";
  double sum1 = 0.0, sum2 = 0.0, suml = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    out += std::to_string(i + 1) + "," + format_metric(pairs[i].rouge1.f1) + "," +
           format_metric(pairs[i].rouge2.f1) + "," + format_metric(pairs[i].rougeL.f1) + "\n";
    sum1 += pairs[i].rouge1.f1;
    sum2 += pairs[i].rouge2.f1;
    suml += pairs[i].rougeL.f1;
  }
  const double n = static_cast<double>(pairs.size());
  out += "mean," + format_metric(sum1 / n) + "," + format_metric(sum2 / n) + "," +
         format_metric(suml / n) + "\n";
  return out;
}

}  // namespace fedsumm
