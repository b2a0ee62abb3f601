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

#ifndef CROWDCOUNT_SIMULATOR_H_
#define CROWDCOUNT_SIMULATOR_H_

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "crowdcount/cost_model.hpp"
#include "crowdcount/csv.hpp"
#include "crowdcount/estimation.hpp"
#include "crowdcount/mechanisms.hpp"
#include "crowdcount/protocol.hpp"
#include "crowdcount/random.hpp"
#include "crowdcount/signature.hpp"
#include "crowdcount/wire_json.hpp"

namespace crowdcount {

class InfeasibleScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A point of interest with an hour-of-day visit intensity profile.
struct Poi {
  std::string poi_id;
  std::string name;
  std::int64_t capacity = 1;
  std::array<double, 24> attraction_profile{};
};

inline void ValidatePoi(const Poi& poi) {
  if (!IsCsvSafeIdentifier(poi.poi_id)) {
    throw InfeasibleScenarioError("poi_id must be non-empty and separator-free");
  }
  if (poi.capacity < 1) {
    throw InfeasibleScenarioError("poi capacity must be at least 1");
  }
  for (double intensity : poi.attraction_profile) {
    if (!(intensity >= 0.0 && intensity <= 1.0)) {
      throw InfeasibleScenarioError("attraction profile values must lie in [0,1]");
    }
  }
}

// Which privacy level feeds the cost comparison when the mechanism is
// randomized response.
enum class CostEpsilonKind { kPaper, kStrict };

struct ScenarioConfig {
  std::int64_t total_population = 1;
  std::int64_t n_private_participants = 1;
  std::int64_t n_nonprivate = 1;
  std::vector<Poi> pois;
  std::int64_t start_time = 0;    // epoch-seconds; anchors hour-of-day profiles
  std::int64_t epoch_length = 60; // seconds
  std::int64_t horizon = 1;       // number of epochs
  MechanismSpec mechanism = RandomizedResponseSpec{CoinPair(0.5, 0.5)};
  double cost_worst_case_wait_w = 60.0;
  double cost_congestion_error_prob = 0.5;
  double cost_deanon_fraction_phi = 0.8;
  CostEpsilonKind cost_epsilon_kind = CostEpsilonKind::kPaper;
  std::uint64_t seed = 0;
};

inline void ValidateScenario(const ScenarioConfig& config) {
  if (config.total_population < 1) {
    throw InfeasibleScenarioError("total_population must be at least 1");
  }
  if (config.n_private_participants < 1 || config.n_nonprivate < 1) {
    throw InfeasibleScenarioError(
        "both cohorts must be non-empty for the cost comparison");
  }
  if (config.n_private_participants + config.n_nonprivate >
      config.total_population) {
    throw InfeasibleScenarioError(
        "participant cohorts exceed the total population");
  }
  if (config.pois.empty()) {
    throw InfeasibleScenarioError("at least one POI is required");
  }
  for (const Poi& poi : config.pois) {
    ValidatePoi(poi);
  }
  if (config.start_time < 0) {
    throw InfeasibleScenarioError("start_time must be non-negative");
  }
  if (config.epoch_length < 1) {
    throw InfeasibleScenarioError("epoch_length must be at least one second");
  }
  if (config.horizon < 1) {
    throw InfeasibleScenarioError("horizon must be at least one epoch");
  }
  if (!(config.cost_worst_case_wait_w >= 0.0) ||
      !(config.cost_congestion_error_prob >= 0.0 &&
        config.cost_congestion_error_prob <= 1.0) ||
      !(config.cost_deanon_fraction_phi >= 0.0 &&
        config.cost_deanon_fraction_phi <= 1.0)) {
    throw InfeasibleScenarioError("cost parameters out of range");
  }
}

inline CostParams ScenarioCostParams(const ScenarioConfig& config) {
  return CostParams(config.cost_worst_case_wait_w,
                    config.cost_congestion_error_prob,
                    config.cost_deanon_fraction_phi, config.n_nonprivate,
                    config.n_private_participants);
}

// One simulated person: whether they joined the study and where they are in
// each epoch (-1 when absent from every POI).
struct OwnerState {
  std::int64_t owner_index = 0;
  bool participates = false;
  std::vector<std::int16_t> presence_trace;
};

namespace internal {

// Disjoint stream-id ranges for the independent random streams a scenario
// consumes.
inline constexpr std::uint64_t kTraceStreamBase = 1ULL << 40;
inline constexpr std::uint64_t kResponseStreamBase = 2ULL << 40;
inline constexpr std::uint64_t kNoiseStream = 3ULL << 40;
inline constexpr std::uint64_t kAnalystKeyStream = 4ULL << 40;

inline int HourOfEpoch(const ScenarioConfig& config, std::int64_t epoch_index) {
  std::int64_t t = config.start_time + epoch_index * config.epoch_length;
  return static_cast<int>((t / 3600) % 24);
}

// Per-hour cumulative visit probabilities over the POI list, with the total
// capped at one.
inline std::array<std::vector<double>, 24> HourlyCumulativeProfiles(
    const ScenarioConfig& config) {
  std::array<std::vector<double>, 24> cumulative;
  for (int hour = 0; hour < 24; ++hour) {
    double total = 0.0;
    for (const Poi& poi : config.pois) {
      total += poi.attraction_profile[hour];
    }
    double scale = total > 1.0 ? 1.0 / total : 1.0;
    double acc = 0.0;
    cumulative[hour].reserve(config.pois.size());
    for (const Poi& poi : config.pois) {
      acc += poi.attraction_profile[hour] * scale;
      cumulative[hour].push_back(acc);
    }
  }
  return cumulative;
}

}  // namespace internal

// Synthesizes the population's presence traces: each epoch each owner
// independently visits POI k with its hourly intensity (normalized when the
// intensities sum above one) and is absent otherwise. The first
// n_private_participants owners are the study cohort.
inline std::vector<OwnerState> GeneratePopulation(const ScenarioConfig& config) {
  ValidateScenario(config);
  auto cumulative = internal::HourlyCumulativeProfiles(config);
  std::vector<int> epoch_hours(config.horizon);
  for (std::int64_t e = 0; e < config.horizon; ++e) {
    epoch_hours[e] = internal::HourOfEpoch(config, e);
  }
  RandomSource master(config.seed);
  std::vector<OwnerState> owners;
  owners.reserve(config.total_population);
  for (std::int64_t i = 0; i < config.total_population; ++i) {
    OwnerState owner;
    owner.owner_index = i;
    owner.participates = i < config.n_private_participants;
    owner.presence_trace.resize(config.horizon, -1);
    RandomSource rng = master.Fork(internal::kTraceStreamBase +
                                   static_cast<std::uint64_t>(i));
    for (std::int64_t e = 0; e < config.horizon; ++e) {
      const std::vector<double>& cum = cumulative[epoch_hours[e]];
      double u = rng.NextUnit();
      for (std::size_t k = 0; k < cum.size(); ++k) {
        if (u < cum[k]) {
          owner.presence_trace[e] = static_cast<std::int16_t>(k);
          break;
        }
      }
    }
    owners.push_back(std::move(owner));
  }
  return owners;
}

// Linear occupancy-to-wait map saturating at the worst case: full capacity
// costs the whole worst-case wait.
inline double WaitTimeEstimate(double crowd_estimate, const Poi& poi,
                               double w_max) {
  if (!(w_max >= 0.0)) {
    throw std::invalid_argument("w_max must be non-negative");
  }
  double occupancy = std::max(0.0, crowd_estimate) /
                     static_cast<double>(poi.capacity);
  return w_max * std::min(1.0, occupancy);
}

// The privacy level the configured mechanism actually provides, used to
// price participation. Returns +infinity when the mechanism is not
// differentially private (degenerate coins).
inline double RealizedEpsilon(const ScenarioConfig& config) {
  if (const auto* rr = std::get_if<RandomizedResponseSpec>(&config.mechanism)) {
    try {
      PrivacyLevel level = RrPrivacyLevel(rr->coins);
      return config.cost_epsilon_kind == CostEpsilonKind::kPaper
                 ? level.epsilon_paper
                 : level.epsilon_strict;
    } catch (const InfinitePrivacyLossError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return std::get<LaplaceSpec>(config.mechanism).epsilon();
}

struct CostComparison {
  double nonprivate_cost = 0.0;
  double private_cost = 0.0;        // +inf when epsilon is infinite
  double breakeven_epsilon = 0.0;   // +inf when undefined (any epsilon wins)
  bool participation_favored = false;
  double epsilon = 0.0;             // the level the private cost was taken at
};

// Case 1 (decline, bear deanonymization risk) versus Case 2 (participate at
// privacy level epsilon).
inline CostComparison CompareParticipation(const ScenarioConfig& config,
                                           double epsilon) {
  CostParams params = ScenarioCostParams(config);
  CostComparison cmp;
  cmp.epsilon = epsilon;
  cmp.nonprivate_cost = NonprivateCost(params);
  cmp.private_cost = PrivateCost(epsilon, params);
  try {
    cmp.breakeven_epsilon = BreakevenEpsilon(params);
  } catch (const DegenerateCostModelError&) {
    cmp.breakeven_epsilon = std::numeric_limits<double>::infinity();
  }
  cmp.participation_favored = cmp.private_cost < cmp.nonprivate_cost;
  return cmp;
}

// One published (epoch, POI) observation. Estimate fields are empty only
// when the aggregate was undefined (no responses, or a degenerate
// mechanism); CI fields are also empty on the Laplace path.
struct SimRow {
  std::int64_t epoch_index = 0;
  std::string poi_id;
  std::int64_t true_count = 0;
  std::optional<double> estimate_raw;
  std::optional<double> estimate_clamped;
  std::optional<double> ci95_low;
  std::optional<double> ci95_high;
  double wait_minutes = 0.0;
};

struct SimulationReport {
  std::vector<SimRow> rows;
  double coverage_fraction = 0.0;  // over rows that carry a CI
  std::int64_t ci_rows = 0;
  CostComparison cost_comparison;
};

// Deterministic analyst identity for a scenario; the aggregator a scenario
// talks to must trust this key.
struct AnalystIdentity {
  std::string analyst_id;
  std::string public_key_id;
  SigningKey key;
};

inline AnalystIdentity ScenarioAnalyst(const ScenarioConfig& config) {
  RandomSource master(config.seed);
  std::uint64_t key_seed = master.Fork(internal::kAnalystKeyStream).NextU64();
  return AnalystIdentity{"campus-study", "campus-study-key-1",
                         SigningKey::FromSeed(key_seed)};
}

inline Keyring ScenarioKeyring(const ScenarioConfig& config) {
  AnalystIdentity analyst = ScenarioAnalyst(config);
  Keyring keyring;
  keyring.Add(KeyringEntry{analyst.analyst_id, analyst.public_key_id,
                           analyst.key.public_key()});
  return keyring;
}

inline std::uint64_t ScenarioNoiseSeed(const ScenarioConfig& config) {
  return RandomSource(config.seed).Fork(internal::kNoiseStream).NextU64();
}

// Drives the full pipeline against the given transport with the given
// population: one signed standing query per POI, per-epoch privatized
// responses from every participant, epoch closes, and the cost comparison
// at the mechanism's realized privacy level. Any protocol rejection
// propagates; simulation mode treats rejections as failures, not skips.
inline SimulationReport RunSimulation(const ScenarioConfig& config,
                                      AggregatorTransport& transport,
                                      const std::vector<OwnerState>& owners) {
  ValidateScenario(config);
  for (const OwnerState& owner : owners) {
    if (std::ssize(owner.presence_trace) != config.horizon) {
      throw InfeasibleScenarioError("presence trace length must equal horizon");
    }
  }

  AnalystIdentity analyst = ScenarioAnalyst(config);
  std::int64_t end_time =
      config.start_time + config.horizon * config.epoch_length;
  std::vector<std::string> query_ids;
  for (const Poi& poi : config.pois) {
    Query query;
    query.query_id = "q-" + poi.poi_id;
    query.analyst_id = analyst.analyst_id;
    query.poi_id = poi.poi_id;
    query.start_time = config.start_time;
    query.end_time = end_time;
    query.epoch_length = config.epoch_length;
    query.mechanism = config.mechanism;
    SignedQuery signed_query =
        SignQuery(query, analyst.key, analyst.public_key_id);
    query_ids.push_back(
        transport.RegisterQuery(signed_query, config.start_time));
  }

  // Owners fetch the standing queries once and cache them.
  std::vector<SignedQuery> fetched = transport.FetchQueries(config.start_time);
  if (fetched.size() != config.pois.size()) {
    throw InfeasibleScenarioError("fetched query count does not match POIs");
  }

  std::vector<const OwnerState*> participants;
  std::vector<RandomSource> participant_rngs;
  RandomSource master(config.seed);
  for (const OwnerState& owner : owners) {
    if (owner.participates) {
      participants.push_back(&owner);
      participant_rngs.push_back(
          master.Fork(internal::kResponseStreamBase +
                      static_cast<std::uint64_t>(owner.owner_index)));
    }
  }

  const auto* rr = std::get_if<RandomizedResponseSpec>(&config.mechanism);
  SimulationReport report;
  std::int64_t covered = 0;
  for (std::int64_t e = 0; e < config.horizon; ++e) {
    for (std::size_t i = 0; i < participants.size(); ++i) {
      const OwnerState& owner = *participants[i];
      RandomSource& rng = participant_rngs[i];
      for (std::size_t k = 0; k < config.pois.size(); ++k) {
        int truth =
            owner.presence_trace[e] == static_cast<std::int16_t>(k) ? 1 : 0;
        Response response;
        response.query_id = query_ids[k];
        response.epoch_index = e;
        if (rr != nullptr) {
          response.payload = BitPayload{static_cast<std::uint8_t>(
              RrRandomize(truth, rr->coins, rng))};
        } else {
          response.payload = RealPayload{static_cast<double>(truth)};
        }
        response.nonce = RandomNonce(rng);
        transport.SubmitResponse(response);
      }
    }

    std::int64_t close_time =
        config.start_time + (e + 1) * config.epoch_length;
    for (std::size_t k = 0; k < config.pois.size(); ++k) {
      EpochAggregate aggregate =
          transport.CloseEpoch(query_ids[k], e, close_time);

      SimRow row;
      row.epoch_index = e;
      row.poi_id = config.pois[k].poi_id;
      for (const OwnerState* owner : participants) {
        if (owner->presence_trace[e] == static_cast<std::int16_t>(k)) {
          ++row.true_count;
        }
      }
      if (aggregate.estimate) {
        row.estimate_raw = aggregate.estimate->y_a_raw;
        row.estimate_clamped = aggregate.estimate->y_a_clamped;
        row.ci95_low = aggregate.estimate->ci95_low;
        row.ci95_high = aggregate.estimate->ci95_high;
        ++report.ci_rows;
        if (static_cast<double>(row.true_count) >= *row.ci95_low &&
            static_cast<double>(row.true_count) <= *row.ci95_high) {
          ++covered;
        }
      } else if (aggregate.noisy_count) {
        row.estimate_raw = *aggregate.noisy_count;
        row.estimate_clamped =
            std::min(static_cast<double>(aggregate.n_responses),
                     std::max(0.0, *aggregate.noisy_count));
      }
      row.wait_minutes = WaitTimeEstimate(row.estimate_clamped.value_or(0.0),
                                          config.pois[k],
                                          config.cost_worst_case_wait_w);
      report.rows.push_back(std::move(row));
    }
  }

  report.coverage_fraction =
      report.ci_rows > 0
          ? static_cast<double>(covered) / static_cast<double>(report.ci_rows)
          : 0.0;
  report.cost_comparison =
      CompareParticipation(config, RealizedEpsilon(config));
  return report;
}

// In-process binding: a fresh aggregator seeded from the scenario.
inline SimulationReport RunSimulation(const ScenarioConfig& config,
                                      const std::vector<OwnerState>& owners) {
  Aggregator aggregator(ScenarioKeyring(config),
                        AggregatorOptions{.grace_epochs = 0,
                                          .noise_seed = ScenarioNoiseSeed(config)});
  InProcessTransport transport(aggregator);
  return RunSimulation(config, transport, owners);
}

inline SimulationReport RunSimulation(const ScenarioConfig& config) {
  return RunSimulation(config, GeneratePopulation(config));
}

// ---------------------------------------------------------------------------
// Report serialization

inline std::string ReportCsv(const SimulationReport& report) {
  std::ostringstream out;
  out << "epoch,poi_id,true_count,estimate_raw,estimate_clamped,ci_low,ci_high,"
         "wait_minutes\n";
  auto field = [](const std::optional<double>& v) {
    return v ? FormatDouble(*v) : std::string();
  };
  for (const SimRow& row : report.rows) {
    out << row.epoch_index << ',' << row.poi_id << ',' << row.true_count << ','
        << field(row.estimate_raw) << ',' << field(row.estimate_clamped) << ','
        << field(row.ci95_low) << ',' << field(row.ci95_high) << ','
        << FormatDouble(row.wait_minutes) << '\n';
  }
  return out.str();
}

// Inverse of ReportCsv over the row fields; used to check that written CSVs
// reproduce the in-memory records exactly.
inline std::vector<SimRow> ParseReportCsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("empty report CSV");
  }
  std::vector<SimRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string_view> fields = SplitCsvLine(line);
    if (fields.size() != 8) {
      throw std::invalid_argument("report CSV rows require 8 fields");
    }
    SimRow row;
    row.epoch_index = ParseInt64(fields[0]);
    row.poi_id = std::string(fields[1]);
    row.true_count = ParseInt64(fields[2]);
    auto opt = [](std::string_view f) -> std::optional<double> {
      if (f.empty()) {
        return std::nullopt;
      }
      return ParseDouble(f);
    };
    row.estimate_raw = opt(fields[3]);
    row.estimate_clamped = opt(fields[4]);
    row.ci95_low = opt(fields[5]);
    row.ci95_high = opt(fields[6]);
    row.wait_minutes = ParseDouble(fields[7]);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json CostComparisonJson(const CostComparison& cmp) {
  Json j;
  j["nonprivate_cost"] = cmp.nonprivate_cost;
  j["private_cost"] = cmp.private_cost;          // infinity serializes as null
  j["breakeven_epsilon"] = cmp.breakeven_epsilon;
  j["participation_favored"] = cmp.participation_favored;
  j["epsilon"] = cmp.epsilon;
  return j;
}

inline Json ReportSummaryJson(const SimulationReport& report,
                              const ScenarioConfig& config) {
  Json j;
  j["epochs"] = config.horizon;
  j["n_pois"] = config.pois.size();
  j["n_private_participants"] = config.n_private_participants;
  j["n_nonprivate"] = config.n_nonprivate;
  j["seed"] = config.seed;
  j["ci_rows"] = report.ci_rows;
  j["coverage_fraction"] = report.coverage_fraction;
  j["cost_comparison"] = CostComparisonJson(report.cost_comparison);
  return j;
}

// ---------------------------------------------------------------------------
// Scenario JSON schema

inline Poi PoiFromJson(const Json& j) {
  Poi poi;
  poi.poi_id = j.at("poi_id").get<std::string>();
  poi.name = j.value("name", poi.poi_id);
  poi.capacity = j.at("capacity").get<std::int64_t>();
  const Json& profile = j.at("attraction_profile");
  if (!profile.is_array() || profile.size() != poi.attraction_profile.size()) {
    throw InfeasibleScenarioError("attraction_profile must have 24 entries");
  }
  for (std::size_t h = 0; h < poi.attraction_profile.size(); ++h) {
    poi.attraction_profile[h] = profile.at(h).get<double>();
  }
  return poi;
}

inline ScenarioConfig ScenarioFromJson(const Json& j) {
  ScenarioConfig config;
  config.total_population = j.at("total_population").get<std::int64_t>();
  config.n_private_participants =
      j.at("n_private_participants").get<std::int64_t>();
  config.n_nonprivate = j.at("n_nonprivate").get<std::int64_t>();
  for (const Json& poi : j.at("pois")) {
    config.pois.push_back(PoiFromJson(poi));
  }
  config.start_time = j.value("start_time", std::int64_t{0});
  config.epoch_length = j.at("epoch_length").get<std::int64_t>();
  config.horizon = j.at("horizon").get<std::int64_t>();
  config.mechanism = MechanismFromJson(j.at("mechanism"));
  const Json& cost = j.at("cost_params");
  config.cost_worst_case_wait_w = cost.at("worst_case_wait_w").get<double>();
  config.cost_congestion_error_prob =
      cost.at("congestion_error_prob").get<double>();
  config.cost_deanon_fraction_phi =
      cost.at("deanon_fraction_phi").get<double>();
  std::string kind = j.value("cost_epsilon", std::string("paper"));
  if (kind == "paper") {
    config.cost_epsilon_kind = CostEpsilonKind::kPaper;
  } else if (kind == "strict") {
    config.cost_epsilon_kind = CostEpsilonKind::kStrict;
  } else {
    throw InfeasibleScenarioError("cost_epsilon must be 'paper' or 'strict'");
  }
  config.seed = j.value("seed", std::uint64_t{0});
  ValidateScenario(config);
  return config;
}

}  // namespace crowdcount

#endif  // CROWDCOUNT_SIMULATOR_H_
