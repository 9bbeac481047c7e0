#pragma once

// Glue between the forward model, the observation model and the sampler:
// the forward projection used for every parameter draw, the posterior
// target handed to run_chain, and synthetic data generation.

#include <array>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hpvcal/amcmc.hpp"
#include "hpvcal/errors.hpp"
#include "hpvcal/observation.hpp"
#include "hpvcal/ode.hpp"
#include "hpvcal/strata.hpp"

namespace hpvcal {

/// Documented forward projection: start from initial_state(population,
/// seed_fraction) at t0 and integrate to the calibration time T with yearly
/// saves.
struct ForwardModel {
  double population = 10000.0;
  double seed_fraction = 0.01;
  double t0 = 0.0;
  double T = 120.0;
  SolverConfig solver;
  ModelContext context;

  void validate() const {
    if (!(population > 0.0)) throw ConfigError("model: population must be positive");
    if (!(seed_fraction > 0.0 && seed_fraction <= 1.0))
      throw ConfigError("model: seed_fraction must lie in (0,1]");
    if (!(T > t0)) throw ConfigError("model: T must exceed t0");
    solver.validate();
    context.behavior.validate();
  }

  StateVector initial() const { return initial_state(population, seed_fraction, context.behavior); }
  std::vector<double> save_times() const { return yearly_times(t0, T); }

  Trajectory run(const ModelParams& params) const {
    const auto saves = save_times();
    return integrate(initial(), params, t0, T, solver, saves, context);
  }
};

/// Per-gender compartment totals over all activity and age groups.
using GenderTotals = std::array<CompartmentCounts, kGenders>;

inline GenderTotals gender_totals(const StateVector& x) {
  GenderTotals out{};
  for (const StratumIndex& k : all_strata()) out[gender_slot(k.gender)] += x.stratum(k);
  return out;
}

/// Model-predicted observables at the calibration time for every
/// (gender, age) cell, aggregated over activity groups.
struct FitObservables {
  std::array<std::array<double, kAgeGroups>, kGenders> incidence{};
  std::array<std::array<double, kAgeGroups>, kGenders> seroprevalence{};
};

inline FitObservables fit_observables(const ModelParams& params, const Trajectory& trajectory,
                                      double T, const LikelihoodOptions& options = {}) {
  FitObservables out;
  for (Gender g : {Gender::male, Gender::female})
    for (int a = 1; a <= kAgeGroups; ++a) {
      Observation o;
      o.time = T;
      o.gender = g;
      o.age = a;
      o.kind = ObservationKind::incidence;
      out.incidence[gender_slot(g)][a - 1] = predicted_mean(params, trajectory, o, options);
      o.kind = ObservationKind::seroprevalence;
      out.seroprevalence[gender_slot(g)][a - 1] = predicted_mean(params, trajectory, o, options);
    }
  return out;
}

/// Kept with each retained draw.
struct CalibrationPayload {
  StateVector terminal;             // state at T
  std::vector<GenderTotals> totals; // one entry per saved year
  FitObservables fit;
};

/// log prior + log likelihood of a flat parameter vector. The prior is
/// checked first so that out-of-support draws never reach the ODE solver.
class CalibrationTarget {
 public:
  CalibrationTarget(ForwardModel model, std::vector<Observation> observations, PriorSpec priors,
                    ParameterLayout layout = ParameterLayout{},
                    LikelihoodOptions options = {})
      : model_(std::move(model)),
        observations_(std::move(observations)),
        priors_(std::move(priors)),
        layout_(layout),
        options_(options) {
    model_.validate();
    for (const auto& name : layout_.names())
      if (!priors_.count(name)) throw ConfigError("no prior for parameter " + name);
    for (const Observation& o : observations_) {
      if (auto v = observation_violation(o); !v.empty()) throw DataError("observation: " + v);
      if (o.time < model_.t0 + 1.0 - 1e-9 || o.time > model_.T + 1e-9 ||
          std::abs(o.time - std::round(o.time)) > 1e-9)
        throw DataError("observation time " + std::to_string(o.time) +
                        " must be a whole year in [t0+1, T]");
    }
  }

  const ParameterLayout& layout() const noexcept { return layout_; }
  const ForwardModel& model() const noexcept { return model_; }
  const std::vector<Observation>& observations() const noexcept { return observations_; }
  const PriorSpec& priors() const noexcept { return priors_; }
  const LikelihoodOptions& options() const noexcept { return options_; }

  Evaluation<CalibrationPayload> operator()(std::span<const double> theta) const {
    Evaluation<CalibrationPayload> out;
    const ModelParams params = layout_.from_vector(theta);
    const double prior = log_prior(params, priors_, layout_);
    if (!std::isfinite(prior)) return out;
    if (!parameter_violation(params).empty()) return out;

    const Trajectory traj = model_.run(params);
    const double lik = log_likelihood(params, traj, observations_, options_);
    if (!std::isfinite(lik)) return out;
    out.log_posterior = prior + lik;

    out.payload.terminal = traj.states.back();
    out.payload.totals.reserve(traj.states.size());
    for (const auto& x : traj.states) out.payload.totals.push_back(gender_totals(x));
    out.payload.fit = fit_observables(params, traj, model_.T, options_);
    return out;
  }

 private:
  ForwardModel model_;
  std::vector<Observation> observations_;
  PriorSpec priors_;
  ParameterLayout layout_;
  LikelihoodOptions options_;
};

/// Default chain starting point: the prior centre of every parameter.
inline std::vector<double> prior_center(const PriorSpec& priors, const ParameterLayout& layout) {
  std::vector<double> out;
  for (const auto& name : layout.names()) out.push_back(priors.at(name).center());
  return out;
}

/// One draw from a marginal prior.
inline double sample_prior(const Prior& p, std::mt19937_64& rng) {
  switch (p.family) {
    case PriorFamily::uniform: return std::uniform_real_distribution<double>(p.a, p.b)(rng);
    case PriorFamily::gamma: return std::gamma_distribution<double>(p.a, p.b)(rng);
    case PriorFamily::inv_gamma: return p.b / std::gamma_distribution<double>(p.a, 1.0)(rng);
    case PriorFamily::beta: {
      const double x = std::gamma_distribution<double>(p.a, 1.0)(rng);
      const double y = std::gamma_distribution<double>(p.b, 1.0)(rng);
      return x / (x + y);
    }
  }
  throw ConfigError("unsupported prior family");
}

/// Settings of the synthetic experiment.
struct SyntheticDesign {
  ModelParams truth;                 // defaults to the reference true vector
  double first_time = 10.0;
  double interval = 10.0;
  double last_time = 120.0;
  bool per_activity = false;         // one cell per activity group instead of aggregates
  /// Multiplies the observation noise: incidence sd sqrt(sigma) * scale,
  /// Beta concentration A_Y / scale^2. Zero returns the model means.
  double noise_scale = 1.0;
  std::uint64_t seed = 1;

  std::vector<double> times() const {
    std::vector<double> out;
    for (double t = first_time; t <= last_time + 1e-9; t += interval) out.push_back(t);
    return out;
  }
};

/// Model means for every cell and time of the design, without noise.
inline std::vector<Observation> synthetic_means(const ForwardModel& model,
                                                const SyntheticDesign& design,
                                                const LikelihoodOptions& options = {}) {
  const Trajectory traj = model.run(design.truth);
  std::vector<Observation> out;
  for (double t : design.times())
    for (ObservationKind kind : {ObservationKind::incidence, ObservationKind::seroprevalence})
      for (Gender g : {Gender::male, Gender::female})
        for (int a = 1; a <= kAgeGroups; ++a) {
          const int s_lo = design.per_activity ? 1 : 0;
          const int s_hi = design.per_activity ? kActivityGroups : 0;
          for (int s = s_lo; s <= s_hi; ++s) {
            Observation o;
            o.time = t;
            o.gender = g;
            o.age = a;
            if (s > 0) o.activity = s;
            o.kind = kind;
            o.value = predicted_mean(design.truth, traj, o, options);
            out.push_back(o);
          }
        }
  return out;
}

/// Noisy observations drawn from the observation model around the model
/// means of the true parameters.
inline std::vector<Observation> synthetic_observations(const ForwardModel& model,
                                                       const SyntheticDesign& design,
                                                       const LikelihoodOptions& options = {}) {
  if (!(design.noise_scale >= 0.0)) throw ConfigError("synth: noise_scale must be >= 0");
  if (!(design.interval > 0.0)) throw ConfigError("synth: interval must be positive");
  std::vector<Observation> out = synthetic_means(model, design, options);
  if (design.noise_scale == 0.0) return out;

  std::mt19937_64 rng(design.seed);
  const ModelParams& p = design.truth;
  const double ns = design.noise_scale;
  for (Observation& o : out) {
    if (o.kind == ObservationKind::incidence) {
      o.value += std::sqrt(p.incidence_variance) * ns * std::normal_distribution<double>()(rng);
    } else {
      const double a = p.sero_scale / (ns * ns);
      const double b = sero_shape_b(a, o.value);
      double y = 0.0;
      do {
        const double x1 = std::gamma_distribution<double>(a, 1.0)(rng);
        const double x2 = std::gamma_distribution<double>(b, 1.0)(rng);
        y = x1 / (x1 + x2);
      } while (!(y > 0.0 && y < 1.0));
      o.value = y;
    }
  }
  return out;
}

}  // namespace hpvcal
