#pragma once

// Observables computed from model states, the observation likelihood,
// priors and the unnormalised log-posterior.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hpvcal/distributions.hpp"
#include "hpvcal/errors.hpp"
#include "hpvcal/ode.hpp"
#include "hpvcal/strata.hpp"

namespace hpvcal {

enum class ObservationKind { incidence, seroprevalence };

inline std::string to_string(ObservationKind k) {
  return k == ObservationKind::incidence ? "incidence" : "seroprevalence";
}

/// One observed value for a (gender, age-group) cell, optionally restricted
/// to one activity group. Incidence is new warts cases per 1000 persons per
/// year; seroprevalence is a proportion.
struct Observation {
  double time = 0.0;
  Gender gender = Gender::male;
  int age = 1;
  std::optional<int> activity;  // absent: aggregated over activity groups
  ObservationKind kind = ObservationKind::incidence;
  double value = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;

  friend bool operator==(const Observation&, const Observation&) = default;
};

/// Empty when valid. Incidence may be negative: values drawn from the
/// Gaussian observation model are not truncated.
inline std::string observation_violation(const Observation& o) {
  if (!std::isfinite(o.time)) return "time must be finite";
  if (o.age < 1 || o.age > kAgeGroups) return "age_group must be in 1..9";
  if (o.activity && (*o.activity < 1 || *o.activity > kActivityGroups))
    return "activity must be in 1..4";
  if (!std::isfinite(o.value)) return "value must be finite";
  if (o.kind == ObservationKind::seroprevalence && !(o.value > 0.0 && o.value < 1.0))
    return "seroprevalence must lie strictly between 0 and 1";
  if (o.ci_low && o.ci_high && *o.ci_low > *o.ci_high) return "ci_low exceeds ci_high";
  return {};
}

/// S, I, G, P, N summed over the four activity groups of (gender, age).
inline CompartmentCounts aggregate_over_activity(const StateVector& state, Gender gender,
                                                 int age) {
  CompartmentCounts sum;
  for (int s = 1; s <= kActivityGroups; ++s) sum += state.stratum(StratumIndex{gender, s, age});
  return sum;
}

/// Counts backing an observation cell: one stratum, or the activity aggregate.
inline CompartmentCounts observed_counts(const StateVector& state, Gender gender, int age,
                                         std::optional<int> activity) {
  if (activity) return state.stratum(StratumIndex{gender, *activity, age});
  return aggregate_over_activity(state, gender, age);
}

/// Warts incidence per 1000 persons per year: (1/WIP) * I / total * 1000.
inline double incidence_mean(const CompartmentCounts& counts, double incubation_years) {
  const double total = counts.total();
  if (!(total > 0.0)) throw UndefinedObservable("incidence of an empty stratum");
  return counts.I / (incubation_years * total) * 1000.0;
}

inline double incidence_mean(const StateVector& state, const PerGender<double>& incubation,
                             Gender gender, int age, std::optional<int> activity = {}) {
  return incidence_mean(observed_counts(state, gender, age, activity), incubation[gender]);
}

/// Fraction recovered and seropositive, P / total.
inline double seroprevalence_mean(const CompartmentCounts& counts) {
  const double total = counts.total();
  if (!(total > 0.0)) throw UndefinedObservable("seroprevalence of an empty stratum");
  return counts.P / total;
}

inline double seroprevalence_mean(const StateVector& state, Gender gender, int age,
                                  std::optional<int> activity = {}) {
  return seroprevalence_mean(observed_counts(state, gender, age, activity));
}

/// Which state the incidence mean is computed from.
enum class IncidenceForm {
  equilibrium,  // state at the observation time
  lagged,       // state one year earlier
  automatic,    // equilibrium when the derivative norm at t is below tol, else lagged
};

struct LikelihoodOptions {
  IncidenceForm incidence_form = IncidenceForm::automatic;
  double equilibrium_tol = 1e-4;  // persons / yr
};

inline constexpr double kSeroClamp = 1e-8;

/// Model-predicted mean for one observation.
inline double predicted_mean(const ModelParams& params, const Trajectory& trajectory,
                             const Observation& obs, const LikelihoodOptions& options = {}) {
  if (obs.kind == ObservationKind::seroprevalence)
    return seroprevalence_mean(trajectory.at(obs.time), obs.gender, obs.age, obs.activity);
  bool lagged = options.incidence_form == IncidenceForm::lagged;
  if (options.incidence_form == IncidenceForm::automatic)
    lagged = !(trajectory.residual_at(obs.time) < options.equilibrium_tol);
  const StateVector& state = trajectory.at(lagged ? obs.time - 1.0 : obs.time);
  return incidence_mean(state, params.warts_incubation, obs.gender, obs.age, obs.activity);
}

/// Beta shape B_Y chosen so that Beta(A_Y, B_Y) has mean y_hat; y_hat is
/// clamped to [1e-8, 1 - 1e-8].
inline double sero_shape_b(double scale_a, double y_hat) {
  const double y = std::clamp(y_hat, kSeroClamp, 1.0 - kSeroClamp);
  return scale_a * (1.0 / y - 1.0);
}

/// Log-density of one observation given its model mean.
inline double observation_log_density(const ModelParams& params, const Observation& obs,
                                      double mean) {
  if (obs.kind == ObservationKind::incidence)
    return dist::normal_log_pdf(obs.value, mean, params.incidence_variance);
  return dist::beta_log_pdf(obs.value, params.sero_scale, sero_shape_b(params.sero_scale, mean));
}

/// Sum of independent per-observation terms: Gaussian (variance sigma) for
/// incidence, Beta(A_Y, B_Y) for seroprevalence. Non-finite totals map to
/// -inf.
inline double log_likelihood(const ModelParams& params, const Trajectory& trajectory,
                             std::span<const Observation> observations,
                             const LikelihoodOptions& options = {}) {
  double sum = 0.0;
  for (const Observation& obs : observations)
    sum += observation_log_density(params, obs, predicted_mean(params, trajectory, obs, options));
  return std::isfinite(sum) ? sum : dist::kNegInf;
}

enum class PriorFamily { uniform, gamma, beta, inv_gamma };

inline std::string to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::uniform: return "uniform";
    case PriorFamily::gamma: return "gamma";
    case PriorFamily::beta: return "beta";
    case PriorFamily::inv_gamma: return "inv_gamma";
  }
  return "?";
}

inline PriorFamily prior_family_from_string(const std::string& s) {
  if (s == "uniform") return PriorFamily::uniform;
  if (s == "gamma") return PriorFamily::gamma;
  if (s == "beta") return PriorFamily::beta;
  if (s == "inv_gamma") return PriorFamily::inv_gamma;
  throw ConfigError("unsupported prior family '" + s + "'");
}

/// One marginal prior. (a, b) are (lower, upper) for uniform, (shape, scale)
/// for gamma and inv_gamma, (alpha, beta) for beta.
struct Prior {
  PriorFamily family = PriorFamily::uniform;
  double a = 0.0;
  double b = 1.0;

  double log_density(double x) const {
    switch (family) {
      case PriorFamily::uniform: return dist::uniform_log_pdf(x, a, b);
      case PriorFamily::gamma: return dist::gamma_log_pdf(x, a, b);
      case PriorFamily::beta: return dist::beta_log_pdf(x, a, b);
      case PriorFamily::inv_gamma: return dist::inv_gamma_log_pdf(x, a, b);
    }
    throw ConfigError("unsupported prior family");
  }

  /// A representative point inside the support (the mean where finite).
  double center() const {
    switch (family) {
      case PriorFamily::uniform: return 0.5 * (a + b);
      case PriorFamily::gamma: return a * b;
      case PriorFamily::beta: return a / (a + b);
      case PriorFamily::inv_gamma: return a > 1.0 ? b / (a - 1.0) : b / (a + 1.0);
    }
    return a;
  }

  friend bool operator==(const Prior&, const Prior&) = default;
};

using PriorSpec = std::map<std::string, Prior>;

enum class Variant { hpv6, hpv11, combined };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::hpv6: return "hpv6";
    case Variant::hpv11: return "hpv11";
    case Variant::combined: return "combined";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "hpv6") return Variant::hpv6;
  if (s == "hpv11") return Variant::hpv11;
  if (s == "combined") return Variant::combined;
  throw ConfigError("unknown variant '" + s + "' (expected hpv6, hpv11 or combined)");
}

/// Default marginal priors for a genotype variant.
///
/// Incubation (WIP) and asymptomatic-infection duration (DAI) bounds differ
/// per variant; treatment duration uses Gamma(92, 0.003) for males and
/// Beta(69, 231) (years) for females; sigma ~ InvGamma(2, 5), A_Y ~ Gamma(2, 2),
/// EPSa, EPSr ~ Beta(0.5, 0.7). Transmission and seroconversion
/// probabilities get flat priors on [0, 1].
inline PriorSpec default_priors(Variant variant, bool free_immunity = false) {
  PriorSpec p;
  const Prior flat{PriorFamily::uniform, 0.0, 1.0};
  p["TRm"] = flat;
  p["TRf"] = flat;
  switch (variant) {
    case Variant::hpv6:
      p["WIPm"] = {PriorFamily::uniform, 0.9, 1.3};
      p["WIPf"] = {PriorFamily::uniform, 0.6, 0.9};
      p["DAIm"] = p["DAIf"] = {PriorFamily::uniform, 2.2, 3.6};
      break;
    case Variant::hpv11:
      p["WIPm"] = {PriorFamily::uniform, 0.9, 1.3};
      p["WIPf"] = {PriorFamily::uniform, 0.6, 0.9};
      p["DAIm"] = p["DAIf"] = {PriorFamily::uniform, 2.0, 3.6};
      break;
    case Variant::combined:
      p["WIPm"] = p["WIPf"] = {PriorFamily::uniform, 1.0, 2.0};
      p["DAIm"] = p["DAIf"] = {PriorFamily::uniform, 3.8, 4.8};
      break;
  }
  p["DWTm"] = {PriorFamily::gamma, 92.0, 0.003};
  p["DWTf"] = {PriorFamily::beta, 69.0, 231.0};
  p["PSCm"] = p["PSCf"] = {PriorFamily::beta, 1.0, 1.0};
  if (free_immunity) p["DIm"] = p["DIf"] = {PriorFamily::uniform, 1.0, 60.0};
  p["sigma"] = {PriorFamily::inv_gamma, 2.0, 5.0};
  p["A_Y"] = {PriorFamily::gamma, 2.0, 2.0};
  p["EPSa"] = p["EPSr"] = {PriorFamily::beta, 0.5, 0.7};
  return p;
}

/// Sum of independent marginal log-densities over the free parameters of
/// `layout`; -inf outside any support.
inline double log_prior(const ModelParams& params, const PriorSpec& priors,
                        const ParameterLayout& layout = ParameterLayout{}) {
  const auto names = layout.names();
  const auto values = layout.to_vector(params);
  double sum = 0.0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = priors.find(names[i]);
    if (it == priors.end()) throw ConfigError("no prior for parameter " + names[i]);
    sum += it->second.log_density(values[i]);
    if (sum == dist::kNegInf) return sum;
  }
  return std::isfinite(sum) ? sum : dist::kNegInf;
}

inline double log_posterior(const ModelParams& params, const Trajectory& trajectory,
                            std::span<const Observation> observations, const PriorSpec& priors,
                            const ParameterLayout& layout = ParameterLayout{},
                            const LikelihoodOptions& options = {}) {
  const double prior = log_prior(params, priors, layout);
  if (prior == dist::kNegInf) return prior;
  const double lik = log_likelihood(params, trajectory, observations, options);
  if (lik == dist::kNegInf) return lik;
  return prior + lik;
}

}  // namespace hpvcal
