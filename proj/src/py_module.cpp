#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "fedsumm/data.hpp"
#include "fedsumm/dp.hpp"
#include "fedsumm/experiment.hpp"
#include "fedsumm/gradient_adapter.hpp"
#include "fedsumm/metrics.hpp"
#include "fedsumm/model.hpp"
#include "fedsumm/protocol.hpp"

namespace py = pybind11;

namespace {

fedsumm::ModelSpec make_spec(const std::string& kind, int input_dim, int output_dim,
                             int hidden_dim, const std::string& loss) {
  fedsumm::ModelSpec spec;
  spec.kind = fedsumm::model_kind_from_string(kind);
  spec.input_dim = input_dim;
  spec.output_dim = output_dim;
  spec.hidden_dim = hidden_dim;
  spec.loss = loss.empty() ? (spec.kind == fedsumm::ModelKind::kLinear
                                  ? fedsumm::LossKind::kSquaredError
                                  : fedsumm::LossKind::kCrossEntropy)
                           : fedsumm::loss_kind_from_string(loss);
  fedsumm::validate(spec);
  return spec;
}

py::dict round_to_dict(const fedsumm::RoundMetrics& row) {
  py::dict d;
  d["round"] = row.round;
  d["global_loss"] = row.global_loss;
  d["per_client_loss"] = row.per_client_loss;
  d["rho_per_client"] = row.rho_per_client;
  d["modulation_per_client"] = row.modulation_per_client;
  d["store_order"] = row.store_order;
  if (row.perplexity) d["perplexity"] = *row.perplexity;
  if (row.dp) {
    py::dict dp;
    dp["median_norm"] = row.dp->median_norm;
    dp["clipped_fraction"] = row.dp->clipped_fraction;
    dp["noise_multiplier"] = row.dp->noise_multiplier;
    d["dp"] = dp;
  }
  return d;
}

py::dict run_experiment_json(const std::string& config_json) {
  nlohmann::json doc = nlohmann::json::parse(config_json);
  fedsumm::ExperimentConfig config = fedsumm::parse_experiment_config(doc);
  fedsumm::ExperimentResult result = fedsumm::run_configured(config);
  py::list rounds;
  for (const auto& row : result.rounds) rounds.append(round_to_dict(row));
  py::dict out;
  out["rounds"] = rounds;
  out["final_params"] = result.final_params;
  out["config_hash"] = fedsumm::config_hash(config);
  return out;
}

}  // namespace

PYBIND11_MODULE(fedsumm, m) {
  m.doc() = "Seedable federated learning simulator (FedAvg/FedSUMM, DP aggregation, ROUGE)";

  py::register_exception<fedsumm::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<fedsumm::ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);

  py::class_<fedsumm::ModelSpec>(m, "ModelSpec")
      .def(py::init(&make_spec), py::arg("kind"), py::arg("input_dim"), py::arg("output_dim"),
           py::arg("hidden_dim") = 0, py::arg("loss") = "")
      .def_property_readonly("kind",
                             [](const fedsumm::ModelSpec& s) { return fedsumm::to_string(s.kind); })
      .def_readonly("input_dim", &fedsumm::ModelSpec::input_dim)
      .def_readonly("output_dim", &fedsumm::ModelSpec::output_dim)
      .def_readonly("hidden_dim", &fedsumm::ModelSpec::hidden_dim)
      .def_property_readonly("loss",
                             [](const fedsumm::ModelSpec& s) { return fedsumm::to_string(s.loss); })
      .def_property_readonly("param_dim", &fedsumm::param_dim);

  py::class_<fedsumm::Example>(m, "Example")
      .def(py::init([](std::vector<double> features, py::object target) {
             fedsumm::Example e;
             e.features = std::move(features);
             if (py::isinstance<py::int_>(target)) {
               e.label = target.cast<int>();
             } else {
               e.target = target.cast<std::vector<double>>();
             }
             return e;
           }),
           py::arg("features"), py::arg("target"))
      .def_readonly("features", &fedsumm::Example::features)
      .def_readonly("label", &fedsumm::Example::label)
      .def_readonly("target", &fedsumm::Example::target);

  py::class_<fedsumm::Partition>(m, "Partition")
      .def_readonly("client_id", &fedsumm::Partition::client_id)
      .def_readonly("examples", &fedsumm::Partition::examples)
      .def("__len__", [](const fedsumm::Partition& p) { return p.examples.size(); });

  py::class_<fedsumm::RougeScore>(m, "RougeScore")
      .def_readonly("recall", &fedsumm::RougeScore::recall)
      .def_readonly("precision", &fedsumm::RougeScore::precision)
      .def_readonly("f1", &fedsumm::RougeScore::f1)
      .def("__repr__", [](const fedsumm::RougeScore& s) {
        return "RougeScore(recall=" + fedsumm::format_double(s.recall) +
               ", precision=" + fedsumm::format_double(s.precision) +
               ", f1=" + fedsumm::format_double(s.f1) + ")";
      });

  m.def(
      "loss",
      [](const fedsumm::ModelSpec& spec, const fedsumm::ParamVector& w,
         const std::vector<fedsumm::Example>& batch) { return fedsumm::loss(spec, w, batch); },
      py::arg("spec"), py::arg("w"), py::arg("batch"));
  m.def(
      "gradient",
      [](const fedsumm::ModelSpec& spec, const fedsumm::ParamVector& w,
         const std::vector<fedsumm::Example>& batch) { return fedsumm::gradient(spec, w, batch); },
      py::arg("spec"), py::arg("w"), py::arg("batch"));
  m.def(
      "sgd_step",
      [](const fedsumm::ModelSpec& spec, const fedsumm::ParamVector& w,
         const std::vector<fedsumm::Example>& batch, double eta) {
        return fedsumm::sgd_step(spec, w, batch, eta);
      },
      py::arg("spec"), py::arg("w"), py::arg("batch"), py::arg("eta"));
  m.def("init_params", &fedsumm::init_params, py::arg("spec"), py::arg("seed"));

  m.def(
      "generate",
      [](const std::string& scheme, double skew, int clients, int examples_per_client,
         std::uint64_t seed, const fedsumm::ModelSpec& spec) {
        fedsumm::HeterogeneityConfig config;
        config.scheme = fedsumm::scheme_from_string(scheme);
        config.skew = skew;
        config.clients = clients;
        config.examples_per_client = examples_per_client;
        config.seed = seed;
        return fedsumm::generate(config, spec);
      },
      py::arg("scheme"), py::arg("skew"), py::arg("clients"), py::arg("examples_per_client"),
      py::arg("seed"), py::arg("spec"));
  m.def("load_jsonl", &fedsumm::load_jsonl, py::arg("path"));
  m.def("save_jsonl", &fedsumm::save_jsonl, py::arg("partitions"), py::arg("path"));

  m.def("softmax_summary", &fedsumm::softmax_summary, py::arg("w"));
  m.def("modulation_term", &fedsumm::modulation_term, py::arg("rho"), py::arg("epsilon"),
        py::arg("loss_now"), py::arg("loss_prev"), py::arg("grad_norm"));
  m.def(
      "median_norm",
      [](const std::vector<double>& norms) { return fedsumm::median_norm(norms); },
      py::arg("norms"));
  m.def(
      "clip",
      [](const fedsumm::ParamVector& delta, double bound) {
        fedsumm::ClippedUpdate u = fedsumm::clip(0, delta, bound);
        return py::make_tuple(u.delta_w, u.pre_clip_norm, u.clipped);
      },
      py::arg("delta_w"), py::arg("bound"), "returns (clipped_delta, pre_clip_norm, was_clipped)");

  m.def("rouge_n", &fedsumm::rouge_n, py::arg("candidate"), py::arg("reference"), py::arg("n"));
  m.def("rouge_l", &fedsumm::rouge_l, py::arg("candidate"), py::arg("reference"));
  m.def(
      "perplexity",
      [](const fedsumm::ModelSpec& spec, const fedsumm::ParamVector& w,
         const std::vector<fedsumm::Example>& dataset) {
        return fedsumm::perplexity(spec, w, dataset);
      },
      py::arg("spec"), py::arg("w"), py::arg("dataset"));
  m.def(
      "tokenize",
      [](const std::string& text, const std::string& tokenizer) {
        return fedsumm::tokenize(text, tokenizer == "char" ? fedsumm::Tokenizer::kChar
                                                           : fedsumm::Tokenizer::kWhitespace);
      },
      py::arg("text"), py::arg("tokenizer") = "whitespace");

  m.def("run_experiment", &run_experiment_json, py::arg("config_json"),
        "run a full experiment from a JSON config string; returns rounds + final params");
}
