#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fedsumm/data.hpp"
#include "fedsumm/dp.hpp"
#include "fedsumm/gradient_adapter.hpp"
#include "fedsumm/numeric.hpp"
#include "fedsumm/protocol.hpp"
#include "helpers.hpp"

using namespace fedsumm;

namespace {

std::vector<Partition> regression_partitions(int clients, int per_client, std::uint64_t seed,
                                             double skew = 0.0) {
  HeterogeneityConfig config{skew > 0.0 ? Scheme::kConceptShift : Scheme::kIid, skew, clients,
                             per_client, seed};
  return generate(config, ModelSpec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError});
}

}  // namespace

TEST_CASE("sample_clients with q=1 returns everyone, sorted") {
  ServerState state{.global_params = {}, .round = 4, .seed = 12};
  auto ids = sample_clients(state, 7, 1.0);
  CHECK(ids == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("sample_clients returns ceil(q*C) distinct ids in range") {
  ServerState state{.global_params = {}, .round = 1, .seed = 5};
  auto ids = sample_clients(state, 10, 0.3);
  CHECK(ids.size() == 3);
  std::set<int> unique(ids.begin(), ids.end());
  CHECK(unique.size() == 3);
  for (int id : ids) {
    CHECK(id >= 0);
    CHECK(id < 10);
  }
  CHECK(std::is_sorted(ids.begin(), ids.end()));
}

TEST_CASE("selection frequency stays within 3 standard errors of q") {
  const int draws = 10000;
  const int clients = 10;
  const double q = 0.3;
  std::vector<int> counts(clients, 0);
  for (int round = 1; round <= draws; ++round) {
    ServerState state{.global_params = {}, .round = round, .seed = 777};
    for (int id : sample_clients(state, clients, q)) ++counts[static_cast<std::size_t>(id)];
  }
  const double expected = q * draws;
  const double se = std::sqrt(draws * q * (1.0 - q));
  for (int c : counts) {
    CHECK(std::fabs(c - expected) < 3.0 * se);
  }
}

TEST_CASE("a single full batch step reduces to sgd_step") {
  auto parts = regression_partitions(2, 8, 3);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  ParamVector w = init_params(spec, 42);
  ClientReport report = client_update(0, w, nullptr, parts[0], spec, 1, 100, 0.05, 9);
  CHECK(report.params == sgd_step(spec, w, parts[0].examples, 0.05));
  CHECK(report.gradient == gradient(spec, report.params, parts[0].examples));
}

TEST_CASE("zero learning rate keeps params and reports the input loss") {
  auto parts = regression_partitions(2, 10, 4);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  ParamVector w = init_params(spec, 1);
  ClientReport report = client_update(0, w, nullptr, parts[0], spec, 3, 4, 0.0, 11);
  CHECK(report.params == w);
  CHECK(report.loss == doctest::Approx(loss(spec, w, parts[0].examples)).epsilon(1e-12));
}

TEST_CASE("client updates are bit-deterministic in the round seed") {
  auto parts = regression_partitions(2, 12, 5);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  ParamVector w = init_params(spec, 2);
  auto a = client_update(0, w, nullptr, parts[0], spec, 2, 5, 0.03, 77);
  auto b = client_update(0, w, nullptr, parts[0], spec, 2, 5, 0.03, 77);
  CHECK(a.params == b.params);
  CHECK(a.gradient == b.gradient);
  CHECK(a.loss == b.loss);
  auto c = client_update(0, w, nullptr, parts[0], spec, 2, 5, 0.03, 78);
  CHECK(a.params != c.params);
}

TEST_CASE("oversized batches clamp to the partition") {
  auto parts = regression_partitions(2, 6, 6);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  ParamVector w = init_params(spec, 3);
  auto clamped = client_update(0, w, nullptr, parts[0], spec, 1, 999, 0.05, 5);
  auto exact = client_update(0, w, nullptr, parts[0], spec, 1, 6, 0.05, 5);
  CHECK(clamped.params == exact.params);
}

TEST_CASE("personalization shifts the starting point") {
  auto parts = regression_partitions(2, 8, 7);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  ParamVector w = init_params(spec, 4);
  ParamVector correction{0.01, -0.02, 0.005};
  ParamVector shifted = w;
  for (std::size_t i = 0; i < w.size(); ++i) shifted[i] -= correction[i];
  auto with = client_update(0, w, &correction, parts[0], spec, 1, 4, 0.05, 13);
  auto manual = client_update(0, shifted, nullptr, parts[0], spec, 1, 4, 0.05, 13);
  CHECK(with.params == manual.params);

  ParamVector bad{0.01};
  CHECK_THROWS_AS(client_update(0, w, &bad, parts[0], spec, 1, 4, 0.05, 13), ProtocolError);
}

TEST_CASE("fedavg of identical params is that param vector") {
  std::vector<ClientReport> reports(4);
  for (int c = 0; c < 4; ++c) {
    reports[static_cast<std::size_t>(c)].client_id = c;
    reports[static_cast<std::size_t>(c)].params = {0.5, -2.0, 8.0};
  }
  CHECK(fedavg_aggregate(reports) == ParamVector{0.5, -2.0, 8.0});
}

TEST_CASE("fedavg two-point mean") {
  std::vector<ClientReport> reports(2);
  reports[0].client_id = 0;
  reports[0].params = {2.0, 4.0};
  reports[1].client_id = 1;
  reports[1].params = {4.0, 8.0};
  CHECK(fedavg_aggregate(reports) == ParamVector{3.0, 6.0});
}

TEST_CASE("fedavg matches an independent mean recomputation") {
  Rng rng(31);
  std::vector<ClientReport> reports(5);
  for (int c = 0; c < 5; ++c) {
    reports[static_cast<std::size_t>(c)].client_id = c;
    reports[static_cast<std::size_t>(c)].params.resize(6);
    for (double& x : reports[static_cast<std::size_t>(c)].params) x = rng.next_gaussian();
  }
  // Recompute in the documented order: ascending client id, then scale.
  ParamVector expected(6, 0.0);
  for (const ClientReport& r : reports) {
    for (std::size_t i = 0; i < 6; ++i) expected[i] += r.params[i];
  }
  for (double& x : expected) x *= 1.0 / 5.0;
  CHECK(fedavg_aggregate(reports) == expected);
}

TEST_CASE("fedavg is invariant to report order") {
  Rng rng(33);
  std::vector<ClientReport> reports(6);
  for (int c = 0; c < 6; ++c) {
    reports[static_cast<std::size_t>(c)].client_id = c;
    reports[static_cast<std::size_t>(c)].params.resize(4);
    for (double& x : reports[static_cast<std::size_t>(c)].params) x = rng.next_gaussian();
  }
  ParamVector reference = fedavg_aggregate(reports);
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(reports);
    CHECK(fedavg_aggregate(reports) == reference);
  }
}

TEST_CASE("fedavg scales linearly (exact for power-of-two factors)") {
  Rng rng(34);
  std::vector<ClientReport> reports(3);
  for (int c = 0; c < 3; ++c) {
    reports[static_cast<std::size_t>(c)].client_id = c;
    reports[static_cast<std::size_t>(c)].params.resize(5);
    for (double& x : reports[static_cast<std::size_t>(c)].params) x = rng.next_gaussian();
  }
  ParamVector base = fedavg_aggregate(reports);
  auto scaled_reports = reports;
  for (auto& r : scaled_reports) {
    for (double& x : r.params) x *= 2.0;
  }
  ParamVector scaled = fedavg_aggregate(scaled_reports);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(scaled[i] == 2.0 * base[i]);
}

TEST_CASE("fedavg rejects empty input and names dim offenders") {
  CHECK_THROWS_AS(fedavg_aggregate(std::vector<ClientReport>{}), ProtocolError);
  std::vector<ClientReport> reports(2);
  reports[0].client_id = 0;
  reports[0].params = {1.0, 2.0};
  reports[1].client_id = 5;
  reports[1].params = {1.0};
  try {
    fedavg_aggregate(reports);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }
}

TEST_CASE("round config validation") {
  RoundConfig good{50, 10, 1.0, 1, 8, 0.05, 0};
  CHECK_NOTHROW(validate(good));
  RoundConfig bad = good;
  bad.total_rounds = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = good;
  bad.clients = 1;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = good;
  bad.sample_fraction = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = good;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("full-participation single-step runs equal centralized gradient descent") {
  const int clients = 4;
  const int per_client = 10;
  auto parts = regression_partitions(clients, per_client, 11, 0.4);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  RoundConfig config{40, clients, 1.0, 1, per_client, 0.05, 99};

  ExperimentResult fed = run_experiment(config, Algo::kFedAvg, nullptr, nullptr, parts, spec);

  std::vector<Example> pooled;
  for (const auto& p : parts) pooled.insert(pooled.end(), p.examples.begin(), p.examples.end());
  ParamVector w = init_params(spec, config.seed);
  for (int round = 0; round < config.total_rounds; ++round) {
    // Centralized step: average of per-client full-batch gradients equals the
    // pooled gradient when client sizes match.
    w = sgd_step(spec, w, pooled, config.learning_rate);
    for (std::size_t i = 0; i < w.size(); ++i) {
      double ref = std::max({1.0, std::fabs(w[i])});
      CHECK(std::fabs(fed.trajectory[static_cast<std::size_t>(round)][i] - w[i]) / ref < 1e-12);
    }
  }
}

TEST_CASE("fedavg on iid linear clients reaches the least-squares optimum") {
  const int clients = 10;
  auto parts = regression_partitions(clients, 30, 21);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  RoundConfig config{300, clients, 1.0, 1, 30, 0.1, 5};
  ExperimentResult fed = run_experiment(config, Algo::kFedAvg, nullptr, nullptr, parts, spec);

  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (const auto& p : parts) {
    for (const Example& e : p.examples) {
      rows.push_back(e.features);
      ys.push_back(e.target[0]);
    }
  }
  ParamVector w_star = test::solve_normal_equations(rows, ys);
  std::vector<Example> pooled;
  for (const auto& p : parts) pooled.insert(pooled.end(), p.examples.begin(), p.examples.end());
  double optimum = loss(spec, w_star, pooled);
  CHECK(fed.rounds.back().global_loss - optimum < 1e-6);
  CHECK(fed.rounds.back().global_loss >= optimum - 1e-12);
}

TEST_CASE("fedsumm with epsilon 0 walks the fedavg trajectory bit for bit") {
  const int clients = 5;
  HeterogeneityConfig data{Scheme::kLabelSkew, 0.5, clients, 24, 77};
  ModelSpec spec{ModelKind::kLogistic, 4, 3, 0, LossKind::kCrossEntropy};
  auto parts = generate(data, spec);
  RoundConfig config{25, clients, 1.0, 2, 8, 0.05, 3};

  AdapterConfig adapter{0.0, 1e-9, 1.0};
  auto plain = run_experiment(config, Algo::kFedAvg, nullptr, nullptr, parts, spec);
  auto adapted = run_experiment(config, Algo::kFedSumm, &adapter, nullptr, parts, spec);
  REQUIRE(plain.trajectory.size() == adapted.trajectory.size());
  for (std::size_t r = 0; r < plain.trajectory.size(); ++r) {
    CHECK(plain.trajectory[r] == adapted.trajectory[r]);
  }
  CHECK(plain.final_params == adapted.final_params);
}

TEST_CASE("runs are deterministic and rounds are strictly increasing") {
  const int clients = 4;
  HeterogeneityConfig data{Scheme::kLabelSkew, 0.7, clients, 16, 5};
  ModelSpec spec{ModelKind::kLogistic, 3, 3, 0, LossKind::kCrossEntropy};
  auto parts = generate(data, spec);
  RoundConfig config{12, clients, 0.5, 1, 8, 0.05, 10};
  AdapterConfig adapter{0.1, 1e-9, 1.0};

  auto a = run_experiment(config, Algo::kFedSumm, &adapter, nullptr, parts, spec);
  auto b = run_experiment(config, Algo::kFedSumm, &adapter, nullptr, parts, spec);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].round == static_cast<int>(i) + 1);
    CHECK(a.rounds[i].global_loss == b.rounds[i].global_loss);
    CHECK(a.rounds[i].per_client_loss == b.rounds[i].per_client_loss);
    CHECK(a.rounds[i].rho_per_client == b.rounds[i].rho_per_client);
  }
}

TEST_CASE("dp-enabled runs produce telemetry and stay deterministic") {
  const int clients = 4;
  auto parts = regression_partitions(clients, 12, 9, 0.2);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  RoundConfig config{8, clients, 1.0, 1, 12, 0.05, 2};
  DpConfig dp{0.1, 1e-5, true, 555};

  auto a = run_experiment(config, Algo::kFedAvg, nullptr, &dp, parts, spec);
  auto b = run_experiment(config, Algo::kFedAvg, nullptr, &dp, parts, spec);
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    REQUIRE(a.rounds[i].dp.has_value());
    CHECK(a.rounds[i].dp->median_norm > 0.0);
    CHECK(a.rounds[i].dp->clipped_fraction >= 0.0);
    CHECK(a.rounds[i].dp->clipped_fraction <= 0.5 + 1e-12);  // median clipping
    CHECK(a.trajectory[i] == b.trajectory[i]);
  }

  DpConfig noiseless{0.0, 1e-5, true, 555};
  auto c = run_experiment(config, Algo::kFedAvg, nullptr, &noiseless, parts, spec);
  CHECK(c.rounds.back().global_loss == doctest::Approx(a.rounds.back().global_loss).epsilon(0.5));
}

TEST_CASE("run_experiment validates its inputs") {
  auto parts = regression_partitions(3, 5, 1);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  RoundConfig config{3, 3, 1.0, 1, 5, 0.05, 0};
  AdapterConfig adapter;
  CHECK_THROWS_AS(run_experiment(config, Algo::kFedSumm, nullptr, nullptr, parts, spec),
                  ConfigError);
  CHECK_THROWS_AS(run_experiment(config, Algo::kFedAvg, &adapter, nullptr, parts, spec),
                  ConfigError);
  RoundConfig wrong = config;
  wrong.clients = 4;
  CHECK_THROWS_AS(run_experiment(wrong, Algo::kFedAvg, nullptr, nullptr, parts, spec), ConfigError);
}

TEST_CASE("runtime failures carry the round number") {
  auto parts = regression_partitions(2, 6, 2);
  ModelSpec spec{ModelKind::kLinear, 3, 1, 0, LossKind::kSquaredError};
  RoundConfig config{5, 2, 1.0, 1, 6, 1e200, 0};  // overflows within a round
  try {
    run_experiment(config, Algo::kFedAvg, nullptr, nullptr, parts, spec);
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("round") != std::string::npos);
  }
}
