#pragma once

// Shared generators and small helpers for the test suites.

#include <cmath>
#include <random>
#include <vector>

#include "hpvcal/mixing.hpp"
#include "hpvcal/ode.hpp"
#include "hpvcal/strata.hpp"

namespace test {

inline hpvcal::StratumArray random_populations(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.0, 500.0);
  hpvcal::StratumArray pops{};
  for (double& p : pops) p = u(rng);
  return pops;
}

inline hpvcal::MixingConfig random_mixing_config(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng), 0.9 * u(rng), u(rng)};
}

inline hpvcal::StateVector random_state(std::mt19937_64& rng, double scale = 100.0) {
  std::uniform_real_distribution<double> u(0.0, scale);
  hpvcal::StateVector x;
  for (double& v : x.flat()) v = u(rng);
  return x;
}

/// Empirical order of the adaptive integrator on y' = -y over [0, 10]:
/// rel_tol is tightened 1e-3 -> 1e-7 and the global error at t = 10 is
/// fitted against the number of accepted steps on a log-log scale.
inline double decay_convergence_order() {
  std::vector<double> lx, ly;
  for (double tol : {1e-3, 1e-4, 1e-5, 1e-6, 1e-7}) {
    hpvcal::SolverConfig cfg;
    cfg.rel_tol = tol;
    cfg.abs_tol = 0.0;
    cfg.max_step = 10.0;
    cfg.initial_step = 10.0;  // no ramp-up from a tiny first step
    std::vector<double> y{1.0};
    const std::vector<double> none;
    const auto stats = hpvcal::integrate_dopri(
        [](double, std::span<const double> x, std::span<double> dx) { dx[0] = -x[0]; }, y, 0.0,
        10.0, none, cfg, [](double, auto, auto) {});
    lx.push_back(std::log(static_cast<double>(stats.accepted)));
    ly.push_back(std::log(std::abs(y[0] - std::exp(-10.0))));
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i] / n, my += ly[i] / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i)
    sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  return -sxy / sxx;
}

}  // namespace test
