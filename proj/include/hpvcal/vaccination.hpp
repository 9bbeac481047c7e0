#pragma once

// Vaccination scenarios on top of a calibrated model: a second, vaccinated
// copy of every compartment, yearly vaccination pulses and the posterior
// predictive distribution of observables.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "hpvcal/errors.hpp"
#include "hpvcal/observation.hpp"
#include "hpvcal/ode.hpp"
#include "hpvcal/strata.hpp"

namespace hpvcal {

struct VaccinationPolicy {
  double start_offset = 10.0;  // years after the calibration time T
  double coverage = 0.8;       // fraction of unvaccinated target susceptibles per pulse
  double efficacy = 0.9;       // reduction of the force of infection when vaccinated
  Gender target_gender = Gender::female;
  int target_age = 1;
  double horizon = 40.0;       // years simulated after T

  /// Empty when valid. A zero horizon is accepted and yields only time T.
  std::string violation() const {
    if (!(coverage >= 0.0 && coverage <= 1.0)) return "coverage must lie in [0,1]";
    if (!(efficacy >= 0.0 && efficacy <= 1.0)) return "efficacy must lie in [0,1]";
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) return "horizon must be >= 0";
    if (!(start_offset >= 0.0) || !std::isfinite(start_offset))
      return "start_offset must be >= 0";
    if (target_age < 1 || target_age > kAgeGroups) return "target age must be in 1..9";
    return {};
  }

  void validate() const {
    if (auto v = violation(); !v.empty()) throw ConfigError("vaccination policy: " + v);
  }
};

/// Unvaccinated and vaccinated compartments. The flat layout is the
/// unvaccinated block followed by the vaccinated block (720 entries).
struct VaccinatedStateVector {
  StateVector unvaccinated;
  StateVector vaccinated;

  static constexpr std::size_t kSize = 2 * kStateSize;

  double total() const { return unvaccinated.total() + vaccinated.total(); }

  /// Both blocks added together, stratum by stratum.
  StateVector collapse() const {
    StateVector out = unvaccinated;
    for (std::size_t i = 0; i < kStateSize; ++i) out.flat()[i] += vaccinated.flat()[i];
    return out;
  }

  std::vector<double> flat() const {
    std::vector<double> out(kSize);
    std::copy(unvaccinated.flat().begin(), unvaccinated.flat().end(), out.begin());
    std::copy(vaccinated.flat().begin(), vaccinated.flat().end(), out.begin() + kStateSize);
    return out;
  }

  static VaccinatedStateVector from_flat(std::span<const double> v) {
    if (v.size() != kSize)
      throw ShapeError("vaccinated state needs " + std::to_string(kSize) + " entries, got " +
                       std::to_string(v.size()));
    VaccinatedStateVector out;
    out.unvaccinated = unflatten(v.first(kStateSize));
    out.vaccinated = unflatten(v.subspan(kStateSize));
    return out;
  }

  bool non_negative() const { return unvaccinated.non_negative() && vaccinated.non_negative(); }
};

inline VaccinatedStateVector extend_model(const StateVector& state) {
  return {state, StateVector{}};
}

/// Moves `coverage` of the unvaccinated susceptibles of the target
/// (gender, age) cell, in every activity group, into the vaccinated block.
inline VaccinatedStateVector apply_vaccination_pulse(VaccinatedStateVector state,
                                                     const VaccinationPolicy& policy) {
  for (int s = 1; s <= kActivityGroups; ++s) {
    const StratumIndex k{policy.target_gender, s, policy.target_age};
    double& from = state.unvaccinated(k, Compartment::susceptible);
    const double moved = policy.coverage * from;
    from -= moved;
    state.vaccinated(k, Compartment::susceptible) += moved;
  }
  return state;
}

/// Right-hand side of the two-block model for one parameter draw.
inline TransmissionDynamics vaccinated_dynamics(const ModelParams& params,
                                                const VaccinationPolicy& policy,
                                                const ModelContext& context = {}) {
  return TransmissionDynamics(context, params, {1.0, 1.0 - policy.efficacy});
}

inline VaccinatedStateVector vaccinated_rhs(double t, const VaccinatedStateVector& state,
                                            const ModelParams& params,
                                            const VaccinationPolicy& policy,
                                            const ModelContext& context = {}) {
  TransmissionDynamics f = vaccinated_dynamics(params, policy, context);
  const std::vector<double> y = state.flat();
  std::vector<double> dy(y.size());
  f(t, y, dy);
  return VaccinatedStateVector::from_flat(dy);
}

struct VaccinatedTrajectory {
  std::vector<double> times;
  std::vector<VaccinatedStateVector> states;
  std::size_t pulses = 0;
};

/// Pulse times: whole years from T + start_offset up to, but excluding,
/// the end of the horizon.
inline std::vector<double> pulse_times(double T, const VaccinationPolicy& policy) {
  std::vector<double> out;
  const double end = T + policy.horizon;
  for (double t = std::ceil(T + policy.start_offset - 1e-9); t < end - 1e-9; t += 1.0)
    out.push_back(t);
  return out;
}

/// Simulates [T, T + horizon] from `start`, saving yearly. Integration stops
/// at every pulse time, the pulse is applied and integration resumes; the
/// state saved at a pulse time is the one before the pulse (observables are
/// unchanged by a pulse).
inline VaccinatedTrajectory simulate_vaccination(const VaccinatedStateVector& start,
                                                 const ModelParams& params,
                                                 const VaccinationPolicy& policy, double T,
                                                 const SolverConfig& solver = {},
                                                 const ModelContext& context = {}) {
  policy.validate();
  TransmissionDynamics f = vaccinated_dynamics(params, policy, context);
  const double end = T + policy.horizon;
  const std::vector<double> saves =
      policy.horizon > 0.0 ? yearly_times(T, end) : std::vector<double>{T};
  std::vector<double> stops = pulse_times(T, policy);
  stops.push_back(end);

  VaccinatedTrajectory out;
  std::vector<double> y = start.flat();
  auto record = [&](double t, std::span<const double> x, std::span<const double>) {
    out.times.push_back(t);
    out.states.push_back(VaccinatedStateVector::from_flat(x));
  };

  double t0 = T;
  std::size_t next_save = 0;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    const double t1 = stops[i];
    const std::size_t first = next_save;
    while (next_save < saves.size() && saves[next_save] <= t1 + 1e-9) ++next_save;
    integrate_dopri(f, y, t0, t1,
                    std::span<const double>(saves.data() + first, next_save - first), solver,
                    record);
    if (i + 1 < stops.size()) {
      y = apply_vaccination_pulse(VaccinatedStateVector::from_flat(y), policy).flat();
      ++out.pulses;
    }
    t0 = t1;
  }
  return out;
}

/// One posterior draw as needed for prediction: its parameters and the
/// model state at the calibration time T.
struct PredictiveDraw {
  ModelParams params;
  StateVector terminal;
};

/// Observable for one gender and either one age group (1..9) or all ages (0),
/// aggregated over activity groups and vaccination status.
struct PredictiveSeries {
  Gender gender = Gender::female;
  int age = 0;
  ObservationKind kind = ObservationKind::incidence;
  std::vector<double> mean;
  std::vector<double> lower;  // 2.5% quantile
  std::vector<double> upper;  // 97.5% quantile
  std::vector<std::vector<double>> draws;  // [draw][time]
};

struct PredictiveResult {
  std::vector<double> times;
  std::vector<PredictiveSeries> series;

  const PredictiveSeries& find(Gender g, int age, ObservationKind kind) const {
    for (const auto& s : series)
      if (s.gender == g && s.age == age && s.kind == kind) return s;
    throw ContractViolation("no predictive series for the requested cell");
  }
};

/// Linear-interpolation quantile of an unsorted sample.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractViolation("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace detail {
inline CompartmentCounts gender_age_counts(const StateVector& x, Gender g, int age) {
  if (age > 0) return aggregate_over_activity(x, g, age);
  CompartmentCounts sum;
  for (int a = 1; a <= kAgeGroups; ++a) sum += aggregate_over_activity(x, g, a);
  return sum;
}
}  // namespace detail

/// Pushes every draw through the vaccinated model and summarises incidence
/// and seroprevalence per (gender, age) and per gender over all ages by the
/// pointwise mean and the central 95% band.
inline PredictiveResult posterior_predictive(std::span<const PredictiveDraw> draws,
                                             const VaccinationPolicy& policy, double T,
                                             const SolverConfig& solver = {},
                                             const ModelContext& context = {}) {
  if (draws.empty()) throw ContractViolation("posterior_predictive: no posterior draws");
  policy.validate();

  PredictiveResult out;
  for (Gender g : {Gender::male, Gender::female})
    for (int a = 0; a <= kAgeGroups; ++a)
      for (ObservationKind k : {ObservationKind::incidence, ObservationKind::seroprevalence})
        out.series.push_back({g, a, k, {}, {}, {}, {}});

  for (const PredictiveDraw& d : draws) {
    const VaccinatedTrajectory traj =
        simulate_vaccination(extend_model(d.terminal), d.params, policy, T, solver, context);
    if (out.times.empty()) out.times = traj.times;
    for (auto& s : out.series) {
      std::vector<double> values;
      values.reserve(traj.states.size());
      for (const auto& state : traj.states) {
        const CompartmentCounts c = detail::gender_age_counts(state.collapse(), s.gender, s.age);
        values.push_back(s.kind == ObservationKind::incidence
                             ? incidence_mean(c, d.params.warts_incubation[s.gender])
                             : seroprevalence_mean(c));
      }
      s.draws.push_back(std::move(values));
    }
  }

  const std::size_t nt = out.times.size();
  for (auto& s : out.series) {
    s.mean.assign(nt, 0.0);
    s.lower.resize(nt);
    s.upper.resize(nt);
    std::vector<double> column(s.draws.size());
    for (std::size_t t = 0; t < nt; ++t) {
      for (std::size_t j = 0; j < s.draws.size(); ++j) column[j] = s.draws[j][t];
      double sum = 0.0;
      for (double v : column) sum += v;
      s.mean[t] = sum / static_cast<double>(column.size());
      s.lower[t] = quantile(column, 0.025);
      s.upper[t] = quantile(column, 0.975);
    }
  }
  return out;
}

}  // namespace hpvcal
