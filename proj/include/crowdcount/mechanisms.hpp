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

#ifndef CROWDCOUNT_MECHANISMS_H_
#define CROWDCOUNT_MECHANISMS_H_

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>

#include "crowdcount/random.hpp"

namespace crowdcount {

// Raised when a response symbol has zero probability under one truth value,
// so no finite epsilon bounds the likelihood ratio.
class InfinitePrivacyLossError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Biases of the two coins of the randomized-response mechanism: the first
// coin decides truth-vs-forced, the second supplies the forced answer.
class CoinPair {
 public:
  CoinPair(double p, double q) : p_(p), q_(q) {
    if (!(p >= 0.0 && p <= 1.0) || !(q >= 0.0 && q <= 1.0)) {
      std::ostringstream msg;
      msg << "coin biases must lie in [0,1], got p=" << p << " q=" << q;
      throw std::invalid_argument(msg.str());
    }
  }

  double p() const { return p_; }
  double q() const { return q_; }

  friend bool operator==(const CoinPair&, const CoinPair&) = default;

 private:
  double p_;
  double q_;
};

struct RandomizedResponseSpec {
  CoinPair coins;

  friend bool operator==(const RandomizedResponseSpec&,
                         const RandomizedResponseSpec&) = default;
};

// Centralized Laplace privatization of a count with the given sensitivity.
class LaplaceSpec {
 public:
  explicit LaplaceSpec(double epsilon, double sensitivity = 1.0)
      : epsilon_(epsilon), sensitivity_(sensitivity) {
    if (!(epsilon > 0.0)) {
      throw std::invalid_argument("Laplace epsilon must be positive");
    }
    if (!(sensitivity > 0.0)) {
      throw std::invalid_argument("Laplace sensitivity must be positive");
    }
  }

  double epsilon() const { return epsilon_; }
  double sensitivity() const { return sensitivity_; }
  double scale() const { return sensitivity_ / epsilon_; }

  friend bool operator==(const LaplaceSpec&, const LaplaceSpec&) = default;

 private:
  double epsilon_;
  double sensitivity_;
};

using MechanismSpec = std::variant<RandomizedResponseSpec, LaplaceSpec>;

inline bool IsRandomizedResponse(const MechanismSpec& spec) {
  return std::holds_alternative<RandomizedResponseSpec>(spec);
}

// Privacy level of a mechanism. `epsilon_paper` is the yes-direction
// log-likelihood ratio ln(P(1|1)/P(1|0)); `epsilon_strict` is the max over
// both response symbols and is the value that bounds every ratio.
struct PrivacyLevel {
  double epsilon_paper = 0.0;
  double epsilon_strict = 0.0;
};

// Locally randomizes one truthful bit: with probability p the truth is
// reported, otherwise the outcome of a q-biased coin.
inline int RrRandomize(int truth, const CoinPair& coins, RandomSource& rng) {
  if (rng.Bernoulli(coins.p())) {
    return truth;
  }
  return rng.Bernoulli(coins.q()) ? 1 : 0;
}

// Closed-form marginal P(response=1 | truth): p + (1-p)q for truth=1 and
// (1-p)q for truth=0.
inline double RrResponseProb(int truth, const CoinPair& coins) {
  double forced_yes = (1.0 - coins.p()) * coins.q();
  return truth != 0 ? coins.p() + forced_yes : forced_yes;
}

namespace internal {

// The four conditional response probabilities, computed in forms that share
// subexpressions so that at q = 1/2 the yes- and no-direction ratios are
// bitwise identical.
struct RrConditionals {
  double yes_given_yes;  // P(1 | truth=1)
  double yes_given_no;   // P(1 | truth=0)
  double no_given_yes;   // P(0 | truth=1)
  double no_given_no;    // P(0 | truth=0)
};

inline RrConditionals RrConditionalProbs(const CoinPair& coins) {
  double forced = 1.0 - coins.p();
  RrConditionals c{};
  c.yes_given_no = forced * coins.q();
  c.no_given_yes = forced * (1.0 - coins.q());
  c.yes_given_yes = coins.p() + c.yes_given_no;
  c.no_given_no = coins.p() + c.no_given_yes;
  return c;
}

inline void RequireBothSymbolsReachable(const RrConditionals& c) {
  if (!(c.yes_given_no > 0.0) || !(c.no_given_yes > 0.0)) {
    throw InfinitePrivacyLossError(
        "a response symbol has zero probability under one truth value; "
        "the mechanism is not differentially private");
  }
}

}  // namespace internal

// Differential-privacy level of the two-coin mechanism. Requires both
// response symbols to be reachable under both truths; degenerate coins
// (p=1, q=0 or q=1) raise InfinitePrivacyLossError.
inline PrivacyLevel RrPrivacyLevel(const CoinPair& coins) {
  auto c = internal::RrConditionalProbs(coins);
  internal::RequireBothSymbolsReachable(c);
  double eps_yes = std::log(c.yes_given_yes / c.yes_given_no);
  double eps_no = std::log(c.no_given_no / c.no_given_yes);
  return PrivacyLevel{eps_yes, std::max(eps_yes, eps_no)};
}

struct DpRatioCheck {
  double max_observed_ratio = 0.0;
  bool satisfies = false;
};

// Analytic single-record check of the differential-privacy inequality:
// computes both output-probability ratios and confirms the larger one is
// bounded by e^epsilon_strict (it equals it by construction).
inline DpRatioCheck DpRatioCheckFor(const CoinPair& coins) {
  auto c = internal::RrConditionalProbs(coins);
  internal::RequireBothSymbolsReachable(c);
  double ratio_yes = c.yes_given_yes / c.yes_given_no;
  double ratio_no = c.no_given_no / c.no_given_yes;
  double max_ratio = std::max(ratio_yes, ratio_no);
  double bound = std::exp(RrPrivacyLevel(coins).epsilon_strict);
  return DpRatioCheck{max_ratio, max_ratio <= bound + 1e-12};
}

// Inverse CDF of Laplace(0, scale) for u in (0, 1); the median maps to zero.
inline double LaplaceInverseCdf(double u, double scale) {
  if (u < 0.5) {
    return scale * std::log(2.0 * u);
  }
  double x = -scale * std::log(2.0 * (1.0 - u));
  return x == 0.0 ? 0.0 : x;
}

// One draw from Laplace(0, scale) by inverse-CDF transform of a single
// uniform draw, so seeded sequences reproduce exactly.
inline double LaplaceSample(double scale, RandomSource& rng) {
  if (!(scale > 0.0)) {
    throw std::invalid_argument("Laplace scale must be positive");
  }
  return LaplaceInverseCdf(rng.NextUnitOpen(), scale);
}

// Centralized count privatization: true_count + Laplace(sensitivity/epsilon).
inline double LaplacePrivatize(double true_count, double epsilon,
                               double sensitivity, RandomSource& rng) {
  LaplaceSpec spec(epsilon, sensitivity);  // validates parameters
  return true_count + LaplaceSample(spec.scale(), rng);
}

}  // namespace crowdcount

#endif  // CROWDCOUNT_MECHANISMS_H_
