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

#ifndef CROWDCOUNT_ESTIMATION_H_
#define CROWDCOUNT_ESTIMATION_H_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include "crowdcount/mechanisms.hpp"
#include "crowdcount/random.hpp"

namespace crowdcount {

// Estimator is undefined, e.g. first-coin bias p = 0 leaves no truthful
// signal in the aggregate.
class DegenerateMechanismError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Relative error against a zero true count is undefined.
class UndefinedRelativeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raw per-epoch aggregate: the privatized yes-total and how many responded.
struct AggregateCounts {
  std::int64_t yes_randomized = 0;
  std::int64_t n_respondents = 0;

  AggregateCounts(std::int64_t yes, std::int64_t n)
      : yes_randomized(yes), n_respondents(n) {
    if (n <= 0 || yes < 0 || yes > n) {
      throw std::invalid_argument(
          "aggregate requires 0 <= yes_randomized <= n_respondents and n > 0");
    }
  }
};

// Reconstructed true-count estimate. The raw value is unbiased and may fall
// outside [0, N]; the clamped value is for display. The CI brackets the raw
// value with a plug-in normal approximation.
struct EstimateResult {
  double y_a_raw = 0.0;
  double y_a_clamped = 0.0;
  double std_plugin = 0.0;
  double ci95_low = 0.0;
  double ci95_high = 0.0;
};

inline constexpr double kNormal95Quantile = 1.959963984540054;

// Inverts the randomized-response marginal: Y_A = (Yhat - (1-p) q N) / p.
// Plug-in variance uses the clamped estimate in place of the unknown true
// count.
inline EstimateResult EstimateTrueYes(double yes_randomized, std::int64_t n,
                                      const CoinPair& coins) {
  if (!(coins.p() > 0.0)) {
    throw DegenerateMechanismError(
        "estimator undefined for first-coin bias p = 0");
  }
  double p1 = RrResponseProb(1, coins);
  double p0 = RrResponseProb(0, coins);
  double nd = static_cast<double>(n);

  EstimateResult result;
  result.y_a_raw = (yes_randomized - p0 * nd) / coins.p();
  result.y_a_clamped = std::min(nd, std::max(0.0, result.y_a_raw));
  double var_yhat = result.y_a_clamped * p1 * (1.0 - p1) +
                    (nd - result.y_a_clamped) * p0 * (1.0 - p0);
  result.std_plugin = std::sqrt(std::max(0.0, var_yhat)) / coins.p();
  result.ci95_low = result.y_a_raw - kNormal95Quantile * result.std_plugin;
  result.ci95_high = result.y_a_raw + kNormal95Quantile * result.std_plugin;
  return result;
}

inline EstimateResult EstimateTrueYes(const AggregateCounts& agg,
                                      const CoinPair& coins) {
  return EstimateTrueYes(static_cast<double>(agg.yes_randomized),
                         agg.n_respondents, coins);
}

// A seeded randomize-then-estimate trial setup.
struct ErrorTrialConfig {
  std::int64_t n = 0;
  std::int64_t true_yes = 0;
  CoinPair coins;
  std::int64_t runs = 1;
  std::uint64_t seed = 0;

  ErrorTrialConfig(std::int64_t n_in, std::int64_t true_yes_in,
                   CoinPair coins_in, std::int64_t runs_in, std::uint64_t seed_in)
      : n(n_in), true_yes(true_yes_in), coins(coins_in), runs(runs_in),
        seed(seed_in) {
    if (n <= 0 || true_yes < 0 || true_yes > n || runs < 1) {
      throw std::invalid_argument(
          "trial requires n > 0, 0 <= true_yes <= n, runs >= 1");
    }
  }
};

struct AnalyticError {
  double std_exact = 0.0;
  double expected_abs_rel_error = 0.0;
};

// Exact standard deviation of the estimator for a fixed truth vector, plus
// the implied mean absolute relative error under the normal approximation
// (E|Z| = sigma * sqrt(2/pi)). Independent of any sampling path, so it
// serves as the oracle for the Monte Carlo estimate below.
inline AnalyticError AnalyticErrorOracle(const ErrorTrialConfig& config) {
  if (!(config.coins.p() > 0.0)) {
    throw DegenerateMechanismError(
        "estimator undefined for first-coin bias p = 0");
  }
  if (config.true_yes == 0) {
    throw UndefinedRelativeError("relative error undefined for true_yes = 0");
  }
  double p1 = RrResponseProb(1, config.coins);
  double p0 = RrResponseProb(0, config.coins);
  double ty = static_cast<double>(config.true_yes);
  double nd = static_cast<double>(config.n);
  double var_yhat = ty * p1 * (1.0 - p1) + (nd - ty) * p0 * (1.0 - p0);

  AnalyticError out;
  out.std_exact = std::sqrt(var_yhat) / config.coins.p();
  out.expected_abs_rel_error =
      out.std_exact * std::sqrt(2.0 / std::numbers::pi) / ty;
  return out;
}

// Mean absolute relative error of the full randomize-then-estimate pipeline
// over seeded runs. Each run draws from an independent child stream, so the
// result does not depend on evaluation order.
inline double RelativeErrorMc(const ErrorTrialConfig& config) {
  if (!(config.coins.p() > 0.0)) {
    throw DegenerateMechanismError(
        "estimator undefined for first-coin bias p = 0");
  }
  if (config.true_yes == 0) {
    throw UndefinedRelativeError("relative error undefined for true_yes = 0");
  }
  RandomSource master(config.seed);
  double ty = static_cast<double>(config.true_yes);
  double total = 0.0;
  for (std::int64_t run = 0; run < config.runs; ++run) {
    RandomSource rng = master.Fork(static_cast<std::uint64_t>(run));
    std::int64_t yhat = 0;
    for (std::int64_t i = 0; i < config.n; ++i) {
      int truth = i < config.true_yes ? 1 : 0;
      yhat += RrRandomize(truth, config.coins, rng);
    }
    EstimateResult est =
        EstimateTrueYes(static_cast<double>(yhat), config.n, config.coins);
    total += std::abs(est.y_a_raw - ty) / ty;
  }
  return total / static_cast<double>(config.runs);
}

}  // namespace crowdcount

#endif  // CROWDCOUNT_ESTIMATION_H_
