#pragma once

// Right-hand side of the transmission model and an adaptive Dormand-Prince
// 5(4) integrator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hpvcal/errors.hpp"
#include "hpvcal/mixing.hpp"
#include "hpvcal/strata.hpp"

namespace hpvcal {

/// Per-capita infection rate lambda_{g,s,a} (/yr), indexed by stratum ordinal.
struct ForceOfInfection {
  StratumArray values{};

  double operator[](std::size_t ordinal) const noexcept { return values[ordinal]; }
  double operator()(StratumIndex k) const noexcept { return values[k.ordinal()]; }
};

/// lambda_{g,s,a} = beta_g * sum_{s',a'} m[g][s][s'][a][a'] * I'/N' over the
/// opposite gender. Strata with zero population contribute nothing.
inline ForceOfInfection force_of_infection(const StratumArray& infected,
                                           const StratumArray& totals, const MixingMatrix& mix,
                                           const PerGender<double>& beta) {
  StratumArray prevalence{};
  for (std::size_t k = 0; k < kStrata; ++k)
    prevalence[k] = totals[k] > 0.0 ? infected[k] / totals[k] : 0.0;

  ForceOfInfection out;
  const auto& m = mix.entries.values();
  for (int g = 0; g < kGenders; ++g) {
    const double b = beta.slot(g);
    const double* prev_other = prevalence.data() + stratum_ordinal(1 - g, 0, 0);
    for (int s = 0; s < kActivityGroups; ++s)
      for (int a = 0; a < kAgeGroups; ++a) {
        double sum = 0.0;
        for (int s2 = 0; s2 < kActivityGroups; ++s2) {
          const double* row = m.data() + MixingTensor::index(g, s, s2, a, 0);
          const double* prev = prev_other + s2 * kAgeGroups;
          for (int a2 = 0; a2 < kAgeGroups; ++a2) sum += row[a2] * prev[a2];
        }
        out.values[stratum_ordinal(g, s, a)] = b * sum;
      }
  }
  return out;
}

inline ForceOfInfection force_of_infection(const StateVector& state, const MixingMatrix& mix,
                                           const PerGender<double>& beta) {
  StratumArray infected{};
  for (std::size_t k = 0; k < kStrata; ++k) infected[k] = state.stratum(k).I;
  return force_of_infection(infected, state.stratum_totals(), mix, beta);
}

inline constexpr double kAgingRate = 1.0 / 5.0;  // five-year age bands

/// Derivative of one or more stacked copies ("blocks") of the 360-entry
/// state. All blocks share the same disease dynamics and force of infection;
/// block b's susceptibles are infected at susceptibility[b] * lambda.
/// Individuals leaving the oldest age group of any block re-enter block 0 as
/// susceptibles in age group 1, split evenly between genders and across
/// activity groups in proportion to `activity_proportions`.
inline void rhs_blocks(std::span<const double> y, std::span<double> dy,
                       const RateCoefficients& rates, const ForceOfInfection& lambda,
                       std::span<const double> susceptibility,
                       const std::array<double, kActivityGroups>& activity_proportions) {
  const std::size_t blocks = susceptibility.size();
  double oldest = 0.0;  // everyone in age group 9, all blocks
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* yb = y.data() + b * kStateSize;
    for (int g = 0; g < kGenders; ++g)
      for (int s = 0; s < kActivityGroups; ++s) {
        const double* x = yb + kCompartments * stratum_ordinal(g, s, kAgeGroups - 1);
        oldest += x[0] + x[1] + x[2] + x[3] + x[4];
      }
  }
  // Outflow oldest/5 shared by 2 genders x 4 activity groups (1/40 each),
  // reweighted by 4 * proportion so that the activity mix is maintained.
  const double inflow_unit = oldest * kAgingRate / (kGenders * kActivityGroups) * kActivityGroups;

  for (std::size_t b = 0; b < blocks; ++b) {
    const double* yb = y.data() + b * kStateSize;
    double* db = dy.data() + b * kStateSize;
    const double susc = susceptibility[b];
    for (int g = 0; g < kGenders; ++g) {
      const double gamma = rates.gamma.slot(g), r = rates.r.slot(g);
      const double rho = rates.rho_rec.slot(g), nu = rates.nu.slot(g);
      const double zeta = rates.zeta.slot(g);
      for (int s = 0; s < kActivityGroups; ++s)
        for (int a = 0; a < kAgeGroups; ++a) {
          const std::size_t k = stratum_ordinal(g, s, a);
          const double* x = yb + kCompartments * k;
          double* d = db + kCompartments * k;
          const double S = x[0], I = x[1], G = x[2], P = x[3], N = x[4];
          const double infection = susc * lambda.values[k] * S;
          const double recovery = rho * I + r * G;
          d[0] = -infection + zeta * (P + N) - kAgingRate * S;
          d[1] = infection - (gamma + rho) * I - kAgingRate * I;
          d[2] = gamma * I - r * G - kAgingRate * G;
          d[3] = nu * recovery - zeta * P - kAgingRate * P;
          d[4] = (1.0 - nu) * recovery - zeta * N - kAgingRate * N;
          if (a > 0) {
            const double* younger = x - kCompartments;
            for (int c = 0; c < kCompartments; ++c) d[c] += kAgingRate * younger[c];
          } else if (b == 0) {
            d[0] += inflow_unit * activity_proportions[s];
          }
        }
    }
  }
}

/// Derivative of the unvaccinated model for a given force of infection.
inline StateVector rhs(double /*t*/, const StateVector& state, const RateCoefficients& rates,
                       const ForceOfInfection& lambda,
                       const std::array<double, kActivityGroups>& activity_proportions =
                           BehaviorTables::defaults().activity_proportions) {
  StateVector out;
  const double one = 1.0;
  rhs_blocks(state.flat(), out.flat(), rates, lambda, std::span<const double>(&one, 1),
             activity_proportions);
  return out;
}

/// Fixed inputs of a forward simulation that are not calibrated.
struct ModelContext {
  BehaviorTables behavior = BehaviorTables::defaults();
  double age_preference = 0.3;     // Gamma
  double supply_compromise = 0.5;  // theta1
  /// The mixing matrix is rebuilt whenever some stratum population has moved
  /// by more than this relative amount since the last build. Zero rebuilds on
  /// every evaluation.
  double mixing_rebuild_tol = 1e-9;

  MixingConfig mixing_config(const ModelParams& p) const {
    return {p.eps_age, p.eps_activity, age_preference, supply_compromise};
  }
};

/// The ODE right-hand side for one parameter draw, as a callable
/// f(t, y, dy). Keeps a cached mixing matrix, so an instance must not be
/// shared between threads.
class TransmissionDynamics {
 public:
  TransmissionDynamics(const ModelContext& context, const ModelParams& params,
                       std::vector<double> susceptibility = {1.0})
      : behavior_(context.behavior),
        mixing_(context.mixing_config(params)),
        rebuild_tol_(context.mixing_rebuild_tol),
        rates_(derive_rates(params)),
        susceptibility_(std::move(susceptibility)) {
    behavior_.validate();
    mixing_.validate();
  }

  std::size_t dimension() const noexcept { return kStateSize * susceptibility_.size(); }
  const RateCoefficients& rates() const noexcept { return rates_; }
  std::size_t mixing_builds() const noexcept { return builds_; }

  /// Stratum totals summed over blocks.
  StratumArray populations(std::span<const double> y) const {
    StratumArray pops{};
    for (std::size_t b = 0; b < susceptibility_.size(); ++b) {
      const double* yb = y.data() + b * kStateSize;
      for (std::size_t k = 0; k < kStrata; ++k) {
        const double* x = yb + kCompartments * k;
        pops[k] += x[0] + x[1] + x[2] + x[3] + x[4];
      }
    }
    return pops;
  }

  const MixingMatrix& mixing_for(const StratumArray& pops) {
    bool stale = !has_mix_;
    if (!stale) {
      for (std::size_t k = 0; k < kStrata && !stale; ++k) {
        const double ref = std::max(std::abs(mix_pops_[k]), 1e-300);
        stale = std::abs(pops[k] - mix_pops_[k]) > rebuild_tol_ * ref;
      }
    }
    if (stale) {
      mix_ = build_mixing_matrix(behavior_, mixing_, pops);
      mix_pops_ = pops;
      has_mix_ = true;
      ++builds_;
    }
    return mix_;
  }

  ForceOfInfection lambda(std::span<const double> y) {
    const StratumArray pops = populations(y);
    StratumArray infected{};
    for (std::size_t b = 0; b < susceptibility_.size(); ++b) {
      const double* yb = y.data() + b * kStateSize;
      for (std::size_t k = 0; k < kStrata; ++k) infected[k] += yb[kCompartments * k + 1];
    }
    return force_of_infection(infected, pops, mixing_for(pops), rates_.beta);
  }

  void operator()(double /*t*/, std::span<const double> y, std::span<double> dy) {
    const ForceOfInfection lam = lambda(y);
    rhs_blocks(y, dy, rates_, lam, susceptibility_, behavior_.activity_proportions);
  }

 private:
  BehaviorTables behavior_;
  MixingConfig mixing_;
  double rebuild_tol_;
  RateCoefficients rates_;
  std::vector<double> susceptibility_;
  MixingMatrix mix_{};
  StratumArray mix_pops_{};
  bool has_mix_ = false;
  std::size_t builds_ = 0;
};

struct SolverConfig {
  double initial_step = 1e-6;  // years
  double min_step = 1e-10;
  double rel_tol = 1e-3;
  double max_step = 0.25;
  /// Absolute floor of the error scale, in persons. Keeps components that
  /// are exactly zero from forcing tiny steps.
  double abs_tol = 1e-6;
  /// Accepted steps may dip this far below zero; such values are clipped.
  double negative_tol = 1e-9;

  void validate() const {
    if (!(min_step > 0.0 && min_step <= initial_step && initial_step <= max_step))
      throw ConfigError("solver: need 0 < min_step <= initial_step <= max_step");
    if (!(rel_tol > 0.0)) throw ConfigError("solver: rel_tol must be positive");
    if (!(abs_tol >= 0.0)) throw ConfigError("solver: abs_tol must be non-negative");
  }
};

struct IntegrationStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t evaluations = 0;
};

namespace detail {

// Dormand-Prince 5(4) tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// b - b*, the embedded 4th-order error estimate weights
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

}  // namespace detail

/// Integrates y' = f(t, y) from t0 to t1 with an embedded Dormand-Prince
/// 5(4) pair and local error control, landing exactly on each save time.
///
/// `on_save(t, y, dydt)` is called at every save time (including t0 and t1
/// when listed). Save times must be sorted and inside [t0, t1]. `y` holds
/// the state at t1 on return.
template <class Rhs, class OnSave>
IntegrationStats integrate_dopri(Rhs&& f, std::vector<double>& y, double t0, double t1,
                                 std::span<const double> save_times, const SolverConfig& config,
                                 OnSave&& on_save) {
  using namespace detail;
  config.validate();
  if (!(t1 >= t0)) throw ContractViolation("integrate: need t0 <= t1");
  const double time_eps = 1e-9 * std::max(1.0, std::abs(t1));
  for (std::size_t i = 0; i < save_times.size(); ++i) {
    if (save_times[i] < t0 - time_eps || save_times[i] > t1 + time_eps)
      throw ContractViolation("integrate: save time " + std::to_string(save_times[i]) +
                              " outside [t0, t1]");
    if (i > 0 && save_times[i] <= save_times[i - 1])
      throw ContractViolation("integrate: save times must be strictly increasing");
  }

  const std::size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);
  IntegrationStats stats;

  auto eval = [&](double t, const std::vector<double>& x, std::vector<double>& out) {
    f(t, std::span<const double>(x), std::span<double>(out));
    ++stats.evaluations;
  };

  double t = t0;
  eval(t, y, k1);
  std::size_t next_save = 0;
  auto flush_saves = [&](const std::vector<double>& deriv) {
    while (next_save < save_times.size() && std::abs(save_times[next_save] - t) <= time_eps) {
      on_save(save_times[next_save], std::span<const double>(y), std::span<const double>(deriv));
      ++next_save;
    }
  };
  flush_saves(k1);

  double h = std::min(config.initial_step, config.max_step);
  while (t1 - t > time_eps) {
    const double target = next_save < save_times.size() ? save_times[next_save] : t1;
    const double span_left = target - t;
    bool clipped = false;
    double step = h;
    if (step >= span_left - time_eps) {
      step = span_left;
      clipped = true;
    }

    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + step * a21 * k1[i];
    eval(t + c2 * step, ytmp, k2);
    for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + step * (a31 * k1[i] + a32 * k2[i]);
    eval(t + c3 * step, ytmp, k3);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + step * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    eval(t + c4 * step, ytmp, k4);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + step * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    eval(t + c5 * step, ytmp, k5);
    for (std::size_t i = 0; i < n; ++i)
      ytmp[i] = y[i] + step * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] +
                               a65 * k5[i]);
    eval(t + step, ytmp, k6);
    for (std::size_t i = 0; i < n; ++i)
      ynew[i] = y[i] + step * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    eval(t + step, ynew, k7);

    double err = 0.0;
    bool finite = true;
    bool negative = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(ynew[i])) {
        finite = false;
        break;
      }
      if (ynew[i] < -config.negative_tol) negative = true;
      const double e = step * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] +
                               e6 * k6[i] + e7 * k7[i]);
      const double scale = config.abs_tol + config.rel_tol * std::max(std::abs(y[i]),
                                                                      std::abs(ynew[i]));
      err = std::max(err, std::abs(e) / scale);
    }
    if (!finite) {
      // A non-finite trial can come from an over-long step; only give up once
      // the step cannot shrink any further.
      if (step <= config.min_step)
        throw DivergenceError("integrate: non-finite state at t=" + std::to_string(t), t);
      h = std::max(step * 0.1, config.min_step);
      ++stats.rejected;
      continue;
    }

    if (err <= 1.0 && !negative) {
      t = clipped ? target : t + step;
      for (std::size_t i = 0; i < n; ++i) y[i] = ynew[i] < 0.0 ? 0.0 : ynew[i];
      std::swap(k1, k7);
      ++stats.accepted;
      flush_saves(k1);
      const double grow = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      // A step shortened to hit a save time says nothing about the natural size.
      if (!clipped || step >= h) h = std::min(config.max_step, step * grow);
    } else {
      ++stats.rejected;
      const double shrink =
          negative && err <= 1.0 ? 0.5 : std::clamp(0.9 * std::pow(err, -0.2), 0.1, 1.0);
      h = step * shrink;
      if (h < config.min_step) {
        if (negative && err <= 1.0)
          throw DivergenceError("integrate: state component below zero at t=" +
                                    std::to_string(t),
                                t);
        throw StiffnessError("integrate: step size underflow at t=" + std::to_string(t), t);
      }
    }
  }
  return stats;
}

/// States of the unvaccinated model at the requested save times, with the
/// max-norm of the derivative at each saved point.
struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<double> residuals;
  IntegrationStats stats;

  bool empty() const noexcept { return times.empty(); }

  /// Index of the saved time equal to t (within 1e-9), if any.
  std::ptrdiff_t find(double t) const noexcept {
    auto it = std::lower_bound(times.begin(), times.end(), t - 1e-9);
    if (it != times.end() && std::abs(*it - t) <= 1e-9) return it - times.begin();
    return -1;
  }

  const StateVector& at(double t) const {
    const auto i = find(t);
    if (i < 0) throw ContractViolation("trajectory has no saved state at t=" + std::to_string(t));
    return states[static_cast<std::size_t>(i)];
  }

  double residual_at(double t) const {
    const auto i = find(t);
    if (i < 0) throw ContractViolation("trajectory has no saved state at t=" + std::to_string(t));
    return residuals[static_cast<std::size_t>(i)];
  }
};

inline double max_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Forward simulation of the unvaccinated model.
inline Trajectory integrate(const StateVector& initial, const ModelParams& params, double t0,
                            double t1, const SolverConfig& config,
                            std::span<const double> save_times,
                            const ModelContext& context = {}) {
  if (!(t0 < t1)) throw ContractViolation("integrate: need t0 < t1");
  TransmissionDynamics dynamics(context, params);
  std::vector<double> y = flatten(initial);
  Trajectory traj;
  traj.times.reserve(save_times.size());
  traj.states.reserve(save_times.size());
  traj.residuals.reserve(save_times.size());
  traj.stats = integrate_dopri(dynamics, y, t0, t1, save_times, config,
                               [&](double t, std::span<const double> x,
                                   std::span<const double> dx) {
                                 traj.times.push_back(t);
                                 traj.states.push_back(unflatten(x));
                                 traj.residuals.push_back(max_norm(dx));
                               });
  return traj;
}

/// Yearly save grid t0, t0+1, ..., t1 (t1 included even if not integral).
inline std::vector<double> yearly_times(double t0, double t1) {
  std::vector<double> out;
  for (double t = t0; t < t1 - 1e-9; t += 1.0) out.push_back(t);
  out.push_back(t1);
  return out;
}

struct EquilibriumReport {
  bool at_equilibrium = false;
  double residual = 0.0;  // persons / yr, max-norm of the derivative
};

/// Max-norm of the derivative at the final saved time compared with `tol`.
inline EquilibriumReport equilibrium_check(const Trajectory& trajectory, double tol) {
  if (trajectory.empty()) throw ContractViolation("equilibrium_check: empty trajectory");
  const double r = trajectory.residuals.back();
  return {r < tol, r};
}

/// Same check for a bare state.
inline EquilibriumReport equilibrium_check(const StateVector& state, const ModelParams& params,
                                           const ModelContext& context, double tol) {
  TransmissionDynamics dynamics(context, params);
  StateVector d;
  dynamics(0.0, state.flat(), d.flat());
  const double r = max_norm(d.flat());
  return {r < tol, r};
}

/// Documented starting state: `population` persons split across activity
/// groups by the behaviour proportions, evenly across genders and ages, with
/// `seed_fraction` of every stratum infected and the rest susceptible.
inline StateVector initial_state(double population, double seed_fraction,
                                 const BehaviorTables& behavior = BehaviorTables::defaults()) {
  StateVector x;
  for (const StratumIndex& k : all_strata()) {
    const double n = population * behavior.activity_proportions[k.activity - 1] /
                     (kGenders * kAgeGroups);
    x(k, Compartment::infected) = seed_fraction * n;
    x(k, Compartment::susceptible) = n - seed_fraction * n;
  }
  return x;
}

}  // namespace hpvcal
