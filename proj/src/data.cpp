#include "fedsumm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "fedsumm/errors.hpp"
#include "fedsumm/rng.hpp"

namespace fedsumm {

namespace {

constexpr double kClassMeanScale = 2.0;
constexpr double kTargetNoise = 0.05;

void check_config(const HeterogeneityConfig& config, const ModelSpec& spec) {
  validate(spec);
  if (config.clients < 2) throw ConfigError("data: clients must be >= 2");
  if (config.examples_per_client < 1) {
    throw ConfigError("data: examples_per_client must be >= 1");
  }
  if (config.skew < 0.0 || config.skew > 1.0) {
    throw ConfigError("data: skew must lie in [0, 1]");
  }
  if (config.scheme == Scheme::kFile) {
    throw ConfigError("data: scheme 'file' is loaded, not generated");
  }
  if (spec.loss != LossKind::kCrossEntropy && config.scheme == Scheme::kLabelSkew) {
    throw ConfigError("data: label-skew requires a cross-entropy model (class labels)");
  }
}

std::vector<std::vector<double>> class_means(const ModelSpec& spec, std::uint64_t seed) {
  Rng rng(derive_seed(seed, {tag64("class-means")}));
  std::vector<std::vector<double>> means(static_cast<std::size_t>(spec.output_dim));
  for (auto& mu : means) {
    mu.resize(static_cast<std::size_t>(spec.input_dim));
    for (double& x : mu) x = kClassMeanScale * rng.next_gaussian();
  }
  return means;
}

// Exactly balanced class counts, remainder spread over the lowest classes.
std::vector<int> stratified_labels(int n, int num_classes, Rng& rng) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % num_classes;
  rng.shuffle(labels);
  return labels;
}

std::vector<int> skewed_labels(int n, int num_classes, double skew, Rng& rng) {
  double alpha = (1.0 - skew) * 10.0 + 0.05;
  std::vector<double> proportions = rng.next_dirichlet(num_classes, alpha);
  std::vector<double> cumulative(proportions.size());
  double running = 0.0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    running += proportions[k];
    cumulative[k] = running;
  }
  cumulative.back() = 1.0;
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double u = rng.next_unit();
    int k = static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                             cumulative.begin());
    labels[static_cast<std::size_t>(i)] = std::min(k, num_classes - 1);
  }
  return labels;
}

std::vector<double> gaussian_vector(int dim, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (double& x : v) x = rng.next_gaussian();
  return v;
}

}  // namespace

std::string to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kIid: return "iid";
    case Scheme::kLabelSkew: return "label-skew";
    case Scheme::kConceptShift: return "concept-shift";
    case Scheme::kFile: return "file";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "iid") return Scheme::kIid;
  if (s == "label-skew") return Scheme::kLabelSkew;
  if (s == "concept-shift") return Scheme::kConceptShift;
  if (s == "file") return Scheme::kFile;
  throw ConfigError("unknown scheme '" + s + "' (expected iid|label-skew|concept-shift|file)");
}

std::vector<Partition> generate(const HeterogeneityConfig& config, const ModelSpec& spec) {
  check_config(config, spec);
  const bool classification = spec.loss == LossKind::kCrossEntropy;
  const int n = config.examples_per_client;

  // Regression data: every scheme but label-skew is concept-shift-shaped;
  // iid is the zero-shift case (all clients share the ground truth).
  const bool linear_truth = !classification || config.scheme == Scheme::kConceptShift;
  const double shift = config.scheme == Scheme::kConceptShift ? config.skew : 0.0;

  std::vector<std::vector<double>> means;
  ParamVector base_weights;
  if (linear_truth) {
    Rng rng(derive_seed(config.seed, {tag64("concept-base")}));
    base_weights.resize(static_cast<std::size_t>(spec.output_dim) * spec.input_dim);
    for (double& x : base_weights) x = rng.next_gaussian();
  } else {
    means = class_means(spec, config.seed);
  }

  std::vector<Partition> partitions(static_cast<std::size_t>(config.clients));
  for (int c = 0; c < config.clients; ++c) {
    Rng rng(derive_seed(config.seed, {tag64("client"), static_cast<std::uint64_t>(c)}));
    Partition& part = partitions[static_cast<std::size_t>(c)];
    part.client_id = c;
    part.examples.reserve(static_cast<std::size_t>(n));

    if (linear_truth) {
      // w*_c = base + skew * direction_c, applied as a linear map on features.
      ParamVector truth = base_weights;
      for (double& x : truth) x += shift * rng.next_gaussian();
      for (int i = 0; i < n; ++i) {
        Example e;
        e.features = gaussian_vector(spec.input_dim, rng);
        std::vector<double> z(static_cast<std::size_t>(spec.output_dim), 0.0);
        for (int o = 0; o < spec.output_dim; ++o) {
          double acc = 0.0;
          for (int j = 0; j < spec.input_dim; ++j) {
            acc += truth[static_cast<std::size_t>(o) * spec.input_dim + j] *
                   e.features[static_cast<std::size_t>(j)];
          }
          z[static_cast<std::size_t>(o)] = acc;
        }
        if (classification) {
          e.label = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
        } else {
          for (double& v : z) v += kTargetNoise * rng.next_gaussian();
          e.target = std::move(z);
        }
        part.examples.push_back(std::move(e));
      }
    } else {
      std::vector<int> labels = config.scheme == Scheme::kIid
                                    ? stratified_labels(n, spec.output_dim, rng)
                                    : skewed_labels(n, spec.output_dim, config.skew, rng);
      for (int i = 0; i < n; ++i) {
        Example e;
        e.label = labels[static_cast<std::size_t>(i)];
        const auto& mu = means[static_cast<std::size_t>(e.label)];
        e.features.resize(static_cast<std::size_t>(spec.input_dim));
        for (int j = 0; j < spec.input_dim; ++j) {
          e.features[static_cast<std::size_t>(j)] = mu[static_cast<std::size_t>(j)] + rng.next_gaussian();
        }
        part.examples.push_back(std::move(e));
      }
    }
  }
  return partitions;
}

std::vector<Partition> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");

  std::map<int, std::vector<Example>> by_client;
  std::string line;
  std::size_t line_no = 0;
  std::size_t feature_len = 0;
  bool saw_example = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
    }
    if (!record.is_object() || !record.contains("client_id") || !record.contains("features") ||
        !record.contains("target")) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": record needs client_id, features, target");
    }
    if (!record["client_id"].is_number_integer()) {
      throw ParseError("line " + std::to_string(line_no) + ": client_id must be an integer");
    }
    Example e;
    try {
      e.features = record["features"].get<std::vector<double>>();
      const auto& target = record["target"];
      if (target.is_number_integer()) {
        e.label = target.get<int>();
      } else if (target.is_array()) {
        e.target = target.get<std::vector<double>>();
      } else {
        throw ParseError("line " + std::to_string(line_no) +
                         ": target must be an integer class or an array");
      }
    } catch (const ParseError&) {
      throw;
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (!saw_example) {
      feature_len = e.features.size();
      saw_example = true;
    } else if (e.features.size() != feature_len) {
      throw SchemaError("line " + std::to_string(line_no) + ": feature length " +
                        std::to_string(e.features.size()) + " differs from first record's " +
                        std::to_string(feature_len));
    }
    by_client[record["client_id"].get<int>()].push_back(std::move(e));
  }
  if (!saw_example) throw ParseError("dataset file '" + path + "': no examples");

  std::vector<Partition> partitions;
  partitions.reserve(by_client.size());
  for (auto& [client_id, examples] : by_client) {
    partitions.push_back(Partition{client_id, std::move(examples)});
  }
  return partitions;
}

void save_jsonl(const std::vector<Partition>& partitions, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const Partition& part : partitions) {
    for (const Example& e : part.examples) {
      nlohmann::json record;
      record["client_id"] = part.client_id;
      record["features"] = e.features;
      if (!e.target.empty()) {
        record["target"] = e.target;
      } else {
        record["target"] = e.label;
      }
      out << record.dump() << '\n';
    }
  }
}

}  // namespace fedsumm
