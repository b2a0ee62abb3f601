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

#ifndef CROWDCOUNT_COST_MODEL_H_
#define CROWDCOUNT_COST_MODEL_H_

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace crowdcount {

// Breakeven epsilon is undefined when the private study carries no cost
// scale (base cost zero or empty cohort).
class DegenerateCostModelError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Inputs of the participation-cost comparison. Costs are person-minutes:
// waits are minutes and cohort sizes are people. `congestion_error_prob` is
// the chance the study's congestion estimate fails a participant (distinct
// from any coin bias); `deanon_fraction_phi` is the fraction of
// non-participants whose location ends up re-identified.
struct CostParams {
  double worst_case_wait_w = 0.0;
  double congestion_error_prob = 0.0;
  double deanon_fraction_phi = 0.0;
  std::int64_t n_nonprivate = 1;
  std::int64_t n_private = 1;

  CostParams(double w, double error_prob, double phi, std::int64_t n_nonpriv,
             std::int64_t n_priv)
      : worst_case_wait_w(w), congestion_error_prob(error_prob),
        deanon_fraction_phi(phi), n_nonprivate(n_nonpriv), n_private(n_priv) {
    if (!(w >= 0.0)) {
      throw std::invalid_argument("worst-case wait must be non-negative");
    }
    if (!(error_prob >= 0.0 && error_prob <= 1.0) ||
        !(phi >= 0.0 && phi <= 1.0)) {
      throw std::invalid_argument("probabilities must lie in [0,1]");
    }
    if (n_nonpriv < 1 || n_priv < 1) {
      throw std::invalid_argument("cohort sizes must be at least 1");
    }
  }
};

// Expected residual wait per person even with the study in hand:
// E = congestion_error_prob * W.
inline double BaseCost(const CostParams& params) {
  return params.congestion_error_prob * params.worst_case_wait_w;
}

// Cost of declining the study: C = phi * W * N over the non-private cohort.
inline double NonprivateCost(const CostParams& params) {
  return params.deanon_fraction_phi * params.worst_case_wait_w *
         static_cast<double>(params.n_nonprivate);
}

// Cost of participating at privacy level epsilon: C = (e^eps - 1) * E * N
// over the private cohort.
inline double PrivateCost(double epsilon, const CostParams& params) {
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("epsilon must be non-negative");
  }
  return std::expm1(epsilon) * BaseCost(params) *
         static_cast<double>(params.n_private);
}

// The epsilon at which private and non-private costs are equal:
// eps* = ln(1 + C_nonpriv / (E * N_priv)). Participation wins strictly
// below it.
inline double BreakevenEpsilon(const CostParams& params) {
  double denom = BaseCost(params) * static_cast<double>(params.n_private);
  if (!(denom > 0.0)) {
    throw DegenerateCostModelError(
        "breakeven undefined when base cost times private cohort is zero");
  }
  return std::log1p(NonprivateCost(params) / denom);
}

struct CostCurvePoint {
  double epsilon = 0.0;
  double private_cost = 0.0;
  double nonprivate_cost = 0.0;
  bool participation_favored = false;
};

// Evaluates both costs along a strictly increasing epsilon grid. The favored
// flag uses strict inequality, so a point exactly at breakeven is not
// favored.
inline std::vector<CostCurvePoint> CostCurve(std::span<const double> epsilons,
                                             const CostParams& params) {
  if (epsilons.empty()) {
    throw std::invalid_argument("epsilon grid must be non-empty");
  }
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] > 0.0)) {
      throw std::invalid_argument("epsilon grid values must be positive");
    }
    if (i > 0 && !(epsilons[i] > epsilons[i - 1])) {
      throw std::invalid_argument("epsilon grid must be strictly increasing");
    }
  }
  double nonprivate = NonprivateCost(params);
  std::vector<CostCurvePoint> curve;
  curve.reserve(epsilons.size());
  for (double epsilon : epsilons) {
    CostCurvePoint point;
    point.epsilon = epsilon;
    point.private_cost = PrivateCost(epsilon, params);
    point.nonprivate_cost = nonprivate;
    point.participation_favored = point.private_cost < nonprivate;
    curve.push_back(point);
  }
  return curve;
}

}  // namespace crowdcount

#endif  // CROWDCOUNT_COST_MODEL_H_
