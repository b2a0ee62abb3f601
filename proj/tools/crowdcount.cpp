//
// Copyright 2026 The crowdcount Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Command-line entry point: table reproduction, cost curves, end-to-end
// simulation, and the aggregator service / data-owner client pair.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "crowdcount/client.hpp"
#include "crowdcount/cost_model.hpp"
#include "crowdcount/csv.hpp"
#include "crowdcount/estimation.hpp"
#include "crowdcount/mechanisms.hpp"
#include "crowdcount/protocol.hpp"
#include "crowdcount/service.hpp"
#include "crowdcount/simulator.hpp"
#include "crowdcount/wire_json.hpp"

namespace {

namespace fs = std::filesystem;
using crowdcount::Json;

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// The nine benchmark coin pairs swept by `tables`.
constexpr double kCoinGrid[] = {0.3, 0.6, 0.9};

// Privacy levels priced by the `tables` cost sheet: the paper-direction
// epsilons of representative coin pairs from the sweep.
constexpr double kCostSweepEpsilons[] = {2.3979, 1.2528, 0.8873, 0.539, 0.3895};

// Campus-study cost defaults: 60-minute worst-case wait, even odds the
// study's estimate still fails you, 80% deanonymization among
// non-participants, cohorts of 2000 / 5000.
crowdcount::CostParams DefaultCostParams() {
  return crowdcount::CostParams(60.0, 0.5, 0.8, 2000, 5000);
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json LoadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot open config file '" + path + "'");
  }
  Json j = Json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) {
    throw UsageError("config file '" + path + "' is not valid JSON");
  }
  return j;
}

void WriteFileOrThrow(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  }
  out << contents;
  if (!out) {
    throw std::runtime_error("write to '" + path.string() + "' failed");
  }
}

fs::path EnsureOutDir(const std::string& out_dir) {
  fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw std::runtime_error("cannot create output directory '" + out_dir + "'");
  }
  return dir;
}

std::pair<std::string, int> SplitHostPort(const std::string& address) {
  std::size_t colon = address.rfind(':');
  if (colon == std::string::npos || colon + 1 == address.size()) {
    throw UsageError("address must be host:port, got '" + address + "'");
  }
  int port = static_cast<int>(crowdcount::ParseInt64(address.substr(colon + 1)));
  return {address.substr(0, colon), port};
}

// ---------------------------------------------------------------------------
// tables

struct TableRow {
  double p, q, eta_mc, eta_analytic, epsilon_paper, epsilon_strict;
};

int CmdTables(const std::string& out_dir, std::uint64_t seed, std::int64_t runs) {
  constexpr std::int64_t kBenchmarkN = 1000;
  constexpr std::int64_t kBenchmarkTrueYes = 800;

  std::vector<TableRow> rows;
  std::uint64_t pair_index = 0;
  for (double p : kCoinGrid) {
    for (double q : kCoinGrid) {
      crowdcount::CoinPair coins(p, q);
      crowdcount::ErrorTrialConfig trial(kBenchmarkN, kBenchmarkTrueYes, coins,
                                         runs, seed + pair_index);
      crowdcount::AnalyticError oracle = crowdcount::AnalyticErrorOracle(trial);
      crowdcount::PrivacyLevel level = crowdcount::RrPrivacyLevel(coins);
      rows.push_back(TableRow{p, q, crowdcount::RelativeErrorMc(trial),
                              oracle.expected_abs_rel_error,
                              level.epsilon_paper, level.epsilon_strict});
      ++pair_index;
    }
  }

  std::ostringstream table1;
  table1 << "p,q,eta_mc,eta_analytic,epsilon_paper,epsilon_strict\n";
  for (const TableRow& row : rows) {
    table1 << crowdcount::FormatDouble(row.p) << ','
           << crowdcount::FormatDouble(row.q) << ','
           << crowdcount::FormatDouble(row.eta_mc) << ','
           << crowdcount::FormatDouble(row.eta_analytic) << ','
           << crowdcount::FormatDouble(row.epsilon_paper) << ','
           << crowdcount::FormatDouble(row.epsilon_strict) << '\n';
  }

  crowdcount::CostParams params = DefaultCostParams();
  std::ostringstream table2;
  table2 << "epsilon,cost\n";
  for (double epsilon : kCostSweepEpsilons) {
    table2 << crowdcount::FormatDouble(epsilon) << ','
           << crowdcount::FormatDouble(crowdcount::PrivateCost(epsilon, params))
           << '\n';
  }

  fs::path dir = EnsureOutDir(out_dir);
  WriteFileOrThrow(dir / "table1.csv", table1.str());
  WriteFileOrThrow(dir / "table2.csv", table2.str());

  std::cout << "Utility / privacy sweep (n=" << kBenchmarkN << ", "
            << kBenchmarkTrueYes << " yes, " << runs << " runs)\n";
  std::cout << std::setw(6) << "p" << std::setw(6) << "q" << std::setw(12)
            << "eta_mc" << std::setw(14) << "eta_analytic" << std::setw(12)
            << "eps_paper" << std::setw(12) << "eps_strict" << '\n';
  std::cout << std::fixed << std::setprecision(4);
  for (const TableRow& row : rows) {
    std::cout << std::setw(6) << row.p << std::setw(6) << row.q
              << std::setw(12) << row.eta_mc << std::setw(14)
              << row.eta_analytic << std::setw(12) << row.epsilon_paper
              << std::setw(12) << row.epsilon_strict << '\n';
  }
  std::cout << "\nParticipation cost per privacy level (base cost "
            << crowdcount::BaseCost(params) << " min, cohort "
            << params.n_private << ")\n";
  std::cout << std::setw(10) << "epsilon" << std::setw(16) << "cost" << '\n';
  for (double epsilon : kCostSweepEpsilons) {
    std::cout << std::setw(10) << epsilon << std::setw(16) << std::setprecision(0)
              << crowdcount::PrivateCost(epsilon, params) << std::setprecision(4)
              << '\n';
  }
  std::cout.unsetf(std::ios::fixed);
  std::cout << "wrote " << (dir / "table1.csv").string() << " and "
            << (dir / "table2.csv").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cost-curve

int CmdCostCurve(const std::optional<std::string>& config_path,
                 const std::string& out_dir) {
  std::optional<crowdcount::CostParams> params;
  std::vector<double> grid;
  if (config_path) {
    Json j = LoadJsonFile(*config_path);
    const Json& cost = j.at("cost_params");
    params.emplace(cost.at("worst_case_wait_w").get<double>(),
                   cost.at("congestion_error_prob").get<double>(),
                   cost.at("deanon_fraction_phi").get<double>(),
                   cost.at("n_nonprivate").get<std::int64_t>(),
                   cost.at("n_private").get<std::int64_t>());
    grid = j.at("epsilon_grid").get<std::vector<double>>();
  } else {
    params.emplace(DefaultCostParams());
    for (int i = 1; i <= 120; ++i) {
      grid.push_back(0.02 * i);
    }
  }
  if (grid.empty()) {
    throw UsageError("epsilon_grid must be non-empty");
  }

  std::vector<crowdcount::CostCurvePoint> curve;
  try {
    curve = crowdcount::CostCurve(grid, *params);
  } catch (const std::invalid_argument& error) {
    throw UsageError(error.what());
  }
  double breakeven = crowdcount::BreakevenEpsilon(*params);

  std::ostringstream csv;
  csv << "# breakeven_epsilon = " << crowdcount::FormatDouble(breakeven) << '\n';
  csv << "epsilon,private_cost,nonprivate_cost,favored\n";
  for (const crowdcount::CostCurvePoint& point : curve) {
    csv << crowdcount::FormatDouble(point.epsilon) << ','
        << crowdcount::FormatDouble(point.private_cost) << ','
        << crowdcount::FormatDouble(point.nonprivate_cost) << ','
        << (point.participation_favored ? 1 : 0) << '\n';
  }

  fs::path dir = EnsureOutDir(out_dir);
  WriteFileOrThrow(dir / "cost_curve.csv", csv.str());
  std::cout << "breakeven epsilon: " << breakeven << '\n';
  std::cout << "wrote " << (dir / "cost_curve.csv").string() << " ("
            << curve.size() << " points)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

int CmdSimulate(const std::string& config_path, const std::string& out_dir,
                std::optional<std::uint64_t> seed_override) {
  crowdcount::ScenarioConfig config =
      crowdcount::ScenarioFromJson(LoadJsonFile(config_path));
  if (seed_override) {
    config.seed = *seed_override;
  }
  crowdcount::SimulationReport report = crowdcount::RunSimulation(config);

  fs::path dir = EnsureOutDir(out_dir);
  WriteFileOrThrow(dir / "simulation.csv", crowdcount::ReportCsv(report));
  WriteFileOrThrow(dir / "summary.json",
                   crowdcount::ReportSummaryJson(report, config).dump(2) + "\n");

  std::cout << "epochs: " << config.horizon << ", pois: " << config.pois.size()
            << ", participants: " << config.n_private_participants << '\n';
  std::cout << "coverage_fraction: " << report.coverage_fraction << '\n';
  const crowdcount::CostComparison& cmp = report.cost_comparison;
  std::cout << "cost: private " << cmp.private_cost << " vs non-private "
            << cmp.nonprivate_cost << " (breakeven epsilon "
            << cmp.breakeven_epsilon << ") -> "
            << (cmp.participation_favored ? "participation favored"
                                          : "participation not favored")
            << '\n';
  std::cout << "wrote " << (dir / "simulation.csv").string() << " and "
            << (dir / "summary.json").string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// serve

crowdcount::AggregatorService* g_service = nullptr;

void HandleStopSignal(int) {
  if (g_service != nullptr) {
    g_service->Stop();
  }
}

int CmdServe(const std::string& config_path, const std::string& listen_address) {
  Json j = LoadJsonFile(config_path);
  crowdcount::ServiceConfig config;
  if (j.is_array()) {
    config.keyring = crowdcount::KeyringFromJson(j);
  } else {
    config.keyring = crowdcount::KeyringFromJson(j.at("keyring"));
    config.aggregator_options.grace_epochs =
        j.value("grace_epochs", std::int64_t{1});
    config.aggregator_options.noise_seed = j.value("noise_seed", std::uint64_t{0});
    if (j.contains("snapshot_path")) {
      config.snapshot_path = j.at("snapshot_path").get<std::string>();
    }
  }

  auto [host, port] = SplitHostPort(listen_address);
  crowdcount::AggregatorService service(std::move(config));
  g_service = &service;
  std::signal(SIGINT, HandleStopSignal);
  std::signal(SIGTERM, HandleStopSignal);

  std::cout << "aggregator listening on " << host << ':' << port << '\n';
  bool clean = service.Listen(host, port);  // true after a stop(), false on bind failure
  service.WriteSnapshot();
  g_service = nullptr;
  if (!clean) {
    std::cerr << "failed to listen on " << host << ':' << port << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// respond

struct RespondConfig {
  std::int64_t n_owners = 1;
  std::int64_t true_yes = 0;
  std::uint64_t seed = 0;
  std::optional<std::int64_t> virtual_now;
  bool follow = true;
  bool inject_duplicate_nonce = false;
};

RespondConfig RespondConfigFromJson(const Json& j) {
  RespondConfig config;
  config.n_owners = j.at("n_owners").get<std::int64_t>();
  config.true_yes = j.value("true_yes", std::int64_t{0});
  config.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("now")) {
    config.virtual_now = j.at("now").get<std::int64_t>();
  }
  config.follow = j.value("follow", true);
  config.inject_duplicate_nonce = j.value("inject_duplicate_nonce", false);
  if (config.n_owners < 1 || config.true_yes < 0 ||
      config.true_yes > config.n_owners) {
    throw UsageError("respond requires 0 <= true_yes <= n_owners, n_owners >= 1");
  }
  return config;
}

// Submits one privatized response per owner for one epoch of one query.
// Returns the first response sent, for duplicate-injection checks.
std::optional<crowdcount::Response> SubmitEpoch(
    crowdcount::HttpAggregatorClient& client, const crowdcount::Query& query,
    std::int64_t epoch_index, const RespondConfig& config,
    std::vector<crowdcount::RandomSource>& owner_rngs) {
  const auto* rr =
      std::get_if<crowdcount::RandomizedResponseSpec>(&query.mechanism);
  std::optional<crowdcount::Response> first;
  for (std::int64_t i = 0; i < config.n_owners; ++i) {
    int truth = i < config.true_yes ? 1 : 0;
    crowdcount::Response response;
    response.query_id = query.query_id;
    response.epoch_index = epoch_index;
    if (rr != nullptr) {
      response.payload = crowdcount::BitPayload{static_cast<std::uint8_t>(
          crowdcount::RrRandomize(truth, rr->coins, owner_rngs[i]))};
    } else {
      response.payload = crowdcount::RealPayload{static_cast<double>(truth)};
    }
    response.nonce = crowdcount::RandomNonce(owner_rngs[i]);
    client.SubmitResponse(response);
    if (!first) {
      first = response;
    }
  }
  return first;
}

int CmdRespond(const std::string& server_address, const std::string& config_path,
               std::optional<std::uint64_t> seed_override) {
  RespondConfig config = RespondConfigFromJson(LoadJsonFile(config_path));
  if (seed_override) {
    config.seed = *seed_override;
  }

  auto [host, port] = SplitHostPort(server_address);
  crowdcount::HttpAggregatorClient client(host, port);
  std::int64_t now = config.virtual_now.value_or(
      static_cast<std::int64_t>(std::time(nullptr)));

  // Standing queries are fetched exactly once and reused for every epoch.
  std::vector<crowdcount::SignedQuery> queries = client.FetchQueries(now);
  std::cout << "fetched " << queries.size() << " active queries\n";
  if (queries.empty()) {
    return kExitOk;
  }

  crowdcount::RandomSource master(config.seed);
  std::vector<crowdcount::RandomSource> owner_rngs;
  owner_rngs.reserve(config.n_owners);
  for (std::int64_t i = 0; i < config.n_owners; ++i) {
    owner_rngs.push_back(master.Fork(static_cast<std::uint64_t>(i)));
  }

  std::int64_t submitted_epochs = 0;
  std::optional<crowdcount::Response> first_response;
  for (const crowdcount::SignedQuery& signed_query : queries) {
    const crowdcount::Query& query = signed_query.query;
    std::int64_t num_epochs = query.NumEpochs();
    std::int64_t epoch =
        std::clamp<std::int64_t>(query.EpochIndexAt(now), 0, num_epochs - 1);
    if (config.virtual_now) {
      // Virtual time: answer the epoch containing `now`; advancing time is
      // the caller's job.
      auto first = SubmitEpoch(client, query, epoch, config, owner_rngs);
      if (!first_response) {
        first_response = first;
      }
      ++submitted_epochs;
    } else {
      while (true) {
        std::int64_t wall = static_cast<std::int64_t>(std::time(nullptr));
        if (wall >= query.end_time) {
          break;
        }
        std::int64_t e =
            std::clamp<std::int64_t>(query.EpochIndexAt(wall), 0, num_epochs - 1);
        auto first = SubmitEpoch(client, query, e, config, owner_rngs);
        if (!first_response) {
          first_response = first;
        }
        ++submitted_epochs;
        if (!config.follow) {
          break;
        }
        std::this_thread::sleep_until(
            std::chrono::system_clock::from_time_t(query.EpochEnd(e)));
      }
    }
  }
  std::cout << "submitted " << config.n_owners << " responses for "
            << submitted_epochs << " epoch(s)\n";

  if (config.inject_duplicate_nonce && first_response) {
    try {
      client.SubmitResponse(*first_response);
      std::cerr << "duplicate nonce was accepted; aggregator misbehaved\n";
      return kExitRuntime;
    } catch (const crowdcount::ProtocolError& error) {
      if (error.status() != crowdcount::ProtocolStatus::kDuplicateNonce) {
        throw;
      }
      std::cout << "duplicate nonce correctly rejected\n";
    }
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Privacy-preserving crowd-level estimation toolkit"};
  app.require_subcommand(1);

  std::string out_dir = ".";
  std::string config_path;
  std::string listen_address = "127.0.0.1:8080";
  std::string server_address;
  std::uint64_t seed = 42;
  std::int64_t runs = 1000;

  CLI::App* tables = app.add_subcommand(
      "tables", "Reproduce the utility/privacy sweep and the cost table");
  tables->add_option("--out", out_dir, "Output directory");
  tables->add_option("--seed", seed, "Random seed");
  tables->add_option("--runs", runs, "Monte Carlo runs per coin pair")
      ->check(CLI::PositiveNumber);

  CLI::App* cost_curve = app.add_subcommand(
      "cost-curve", "Tabulate private vs non-private cost along an epsilon grid");
  cost_curve->add_option("--config", config_path,
                         "JSON with cost_params and epsilon_grid");
  cost_curve->add_option("--out", out_dir, "Output directory");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "Run the campus simulation from a scenario JSON");
  simulate->add_option("--config", config_path, "Scenario JSON")->required();
  simulate->add_option("--out", out_dir, "Output directory");
  simulate->add_option("--seed", seed, "Override the scenario seed");

  CLI::App* serve =
      app.add_subcommand("serve", "Run the aggregator HTTP service");
  serve->add_option("--config", config_path, "Keyring or service JSON")
      ->required();
  serve->add_option("--listen", listen_address, "host:port to bind");

  CLI::App* respond = app.add_subcommand(
      "respond", "Simulate data owners answering a remote aggregator");
  respond->add_option("--server", server_address, "host:port of the aggregator")
      ->required();
  respond->add_option("--config", config_path, "Respond config JSON")
      ->required();
  respond->add_option("--seed", seed, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& error) {
    if (error.get_exit_code() == 0) {
      return app.exit(error);  // --help
    }
    std::cerr << error.what() << '\n';
    return kExitUsage;
  }

  try {
    if (tables->parsed()) {
      return CmdTables(out_dir, seed, runs);
    }
    if (cost_curve->parsed()) {
      std::optional<std::string> config;
      if (!config_path.empty()) {
        config = config_path;
      }
      return CmdCostCurve(config, out_dir);
    }
    if (simulate->parsed()) {
      return CmdSimulate(config_path, out_dir,
                         simulate->count("--seed") > 0
                             ? std::optional<std::uint64_t>(seed)
                             : std::nullopt);
    }
    if (serve->parsed()) {
      return CmdServe(config_path, listen_address);
    }
    if (respond->parsed()) {
      return CmdRespond(server_address, config_path,
                        respond->count("--seed") > 0
                            ? std::optional<std::uint64_t>(seed)
                            : std::nullopt);
    }
  } catch (const UsageError& error) {
    std::cerr << "error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const crowdcount::InfeasibleScenarioError& error) {
    std::cerr << "invalid scenario: " << error.what() << '\n';
    return kExitUsage;
  } catch (const Json::exception& error) {
    std::cerr << "config error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& error) {
    std::cerr << "config error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const std::domain_error& error) {
    std::cerr << "config error: " << error.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& error) {
    std::cerr << "error: " << error.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
