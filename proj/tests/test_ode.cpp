#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hpvcal/ode.hpp"
#include "test_support.hpp"

using namespace hpvcal;

namespace {

MixingMatrix survey_mixing(const StateVector& x) {
  return build_mixing_matrix(BehaviorTables::defaults(), {0.5, 0.5, 0.3, 0.5}, x.stratum_totals());
}

const Trajectory& reference_run() {
  static const Trajectory traj = [] {
    const auto saves = yearly_times(0.0, 150.0);
    return integrate(initial_state(10000.0, 0.01), ModelParams{}, 0.0, 150.0, SolverConfig{},
                     saves);
  }();
  return traj;
}

}  // namespace

TEST(ForceOfInfection, ZeroWithoutInfecteds) {
  std::mt19937_64 rng(1);
  StateVector x = test::random_state(rng);
  for (const auto& k : all_strata()) x(k, Compartment::infected) = 0.0;
  const auto lam = force_of_infection(x, survey_mixing(x), {0.9, 0.9});
  for (double v : lam.values) EXPECT_EQ(v, 0.0);
}

TEST(ForceOfInfection, ZeroTransmissionProbability) {
  std::mt19937_64 rng(2);
  const StateVector x = test::random_state(rng);
  const auto lam = force_of_infection(x, survey_mixing(x), {0.0, 0.0});
  for (double v : lam.values) EXPECT_EQ(v, 0.0);
}

TEST(ForceOfInfection, SingleTermByHand) {
  // One female stratum fully infected, one male->female entry of 2.0/yr.
  MixingMatrix mix{};
  mix.entries(0, 1, 2, 3, 4) = 2.0;
  StratumArray infected{}, totals{};
  totals.fill(50.0);
  const auto kf = StratumIndex{Gender::female, 3, 5}.ordinal();
  infected[kf] = totals[kf];
  const auto lam = force_of_infection(infected, totals, mix, {0.9, 0.5});
  EXPECT_NEAR(lam(StratumIndex{Gender::male, 2, 4}), 1.8, 1e-15);
  double others = 0.0;
  for (double v : lam.values) others += v;
  EXPECT_NEAR(others, 1.8, 1e-15);
}

TEST(ForceOfInfection, EmptyStrataContributeNothing) {
  MixingMatrix mix{};
  for (int s2 = 0; s2 < 4; ++s2)
    for (int a2 = 0; a2 < 9; ++a2) mix.entries(0, 0, s2, 0, a2) = 1.0;
  StratumArray infected{}, totals{};  // everything empty: 0/0 prevalence
  const auto lam = force_of_infection(infected, totals, mix, {1.0, 1.0});
  EXPECT_EQ(lam(StratumIndex{Gender::male, 1, 1}), 0.0);
}

TEST(ForceOfInfection, MonotoneInOppositeGenderInfecteds) {
  std::mt19937_64 rng(4);
  StateVector x = test::random_state(rng);
  const auto mix = survey_mixing(x);
  const auto before = force_of_infection(x, mix, {0.7, 0.8});
  // Move mass from S to I in one female stratum: totals unchanged.
  const StratumIndex k{Gender::female, 2, 3};
  const double moved = 0.5 * x(k, Compartment::susceptible);
  x(k, Compartment::susceptible) -= moved;
  x(k, Compartment::infected) += moved;
  const auto after = force_of_infection(x, mix, {0.7, 0.8});
  for (std::size_t i = 0; i < kStrata; ++i) EXPECT_GE(after.values[i], before.values[i]);
  EXPECT_GT(after(StratumIndex{Gender::male, 2, 5}), before(StratumIndex{Gender::male, 2, 5}));
}

TEST(Rhs, ClosedPopulation) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const StateVector x = test::random_state(rng);
    ModelParams p;
    p.immunity.female = ImmunityDuration::years(8.0);
    const auto lam = force_of_infection(x, survey_mixing(x), {0.9, 0.9});
    const StateVector d = rhs(0.0, x, derive_rates(p), lam);
    double sum = 0.0;
    for (double v : d.flat()) sum += v;
    EXPECT_NEAR(sum, 0.0, 1e-9 * x.total());
  }
}

TEST(Rhs, WartsCohortTermByTerm) {
  StateVector x;
  const StratumIndex k{Gender::male, 2, 4}, younger{Gender::male, 2, 3};
  x(k, Compartment::warts) = 30.0;
  x(younger, Compartment::warts) = 10.0;
  ModelParams p;
  p.warts_treatment.male = 0.25;  // r = 4
  const StateVector d = rhs(0.0, x, derive_rates(p), ForceOfInfection{});
  EXPECT_NEAR(d(k, Compartment::warts), -4.0 * 30.0 - 30.0 / 5.0 + 10.0 / 5.0, 1e-12);
  // recovery from warts splits PSC : 1-PSC into P and N
  EXPECT_NEAR(d(k, Compartment::seropositive), 0.5 * 4.0 * 30.0, 1e-12);
  EXPECT_NEAR(d(k, Compartment::seronegative), 0.5 * 4.0 * 30.0, 1e-12);
}

TEST(Rhs, DiseaseFreeStateOnlyRedistributesSusceptibles) {
  StateVector x = initial_state(10000.0, 0.0);
  const StateVector d = rhs(0.0, x, derive_rates(ModelParams{}), ForceOfInfection{});
  for (const auto& k : all_strata()) {
    EXPECT_EQ(d(k, Compartment::infected), 0.0);
    EXPECT_EQ(d(k, Compartment::warts), 0.0);
    EXPECT_EQ(d(k, Compartment::seropositive), 0.0);
    EXPECT_EQ(d(k, Compartment::seronegative), 0.0);
  }
  // Even age split with inflow equal to the outflow: every S is stationary.
  for (double v : d.flat()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Rhs, InflowMatchesOldestOutflow) {
  std::mt19937_64 rng(6);
  const StateVector x = test::random_state(rng);
  const StateVector d = rhs(0.0, x, derive_rates(ModelParams{}), ForceOfInfection{});
  double oldest = 0.0;
  for (const auto& k : all_strata())
    if (k.age == 9) oldest += x.stratum(k).total();
  const auto props = BehaviorTables::defaults().activity_proportions;
  for (Gender g : {Gender::male, Gender::female})
    for (int s = 1; s <= 4; ++s) {
      const StratumIndex k{g, s, 1};
      const double expected_inflow = oldest / 5.0 / 8.0 * 4.0 * props[s - 1];
      const double without_inflow = -x(k, Compartment::susceptible) / 5.0;
      EXPECT_NEAR(d(k, Compartment::susceptible) - without_inflow, expected_inflow, 1e-9);
    }
}

TEST(Integrator, ZeroDynamicsIsConstant) {
  std::vector<double> y{1.0, 2.0, 3.0};
  const std::vector<double> saves{0.0, 0.5, 1.0, 2.0};
  std::vector<std::vector<double>> seen;
  integrate_dopri([](double, std::span<const double>, std::span<double> dy) {
    std::fill(dy.begin(), dy.end(), 0.0);
  }, y, 0.0, 2.0, saves, SolverConfig{}, [&](double, std::span<const double> x, std::span<const double>) {
    seen.emplace_back(x.begin(), x.end());
  });
  ASSERT_EQ(seen.size(), 4u);
  for (const auto& s : seen) EXPECT_EQ(s, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(Integrator, LinearDecay) {
  SolverConfig cfg;
  cfg.rel_tol = 1e-7;
  cfg.abs_tol = 1e-12;
  std::vector<double> y{1.0};
  const std::vector<double> saves{1.0};
  integrate_dopri([](double, std::span<const double> x, std::span<double> dx) { dx[0] = -x[0]; },
                  y, 0.0, 1.0, saves, cfg, [](double, auto, auto) {});
  EXPECT_NEAR(y[0], std::exp(-1.0), 1e-6);
}

TEST(Integrator, ConvergenceOrderAtLeastFour) {
  EXPECT_GE(test::decay_convergence_order(), 4.0);
}

TEST(Integrator, StepUnderflowIsStiffnessError) {
  SolverConfig cfg;
  cfg.min_step = 1e-6;
  cfg.initial_step = 1e-6;
  std::vector<double> y{1.0};
  const std::vector<double> none;
  try {
    // finite-time blow-up at t = 1
    integrate_dopri([](double, std::span<const double> x, std::span<double> dx) { dx[0] = x[0] * x[0]; },
                    y, 0.0, 2.0, none, cfg, [](double, auto, auto) {});
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_GT(e.time(), 0.9);
    EXPECT_LT(e.time(), 1.0 + 1e-3);
  }
}

TEST(Integrator, NonFiniteDerivativeIsDivergenceError) {
  std::vector<double> y{1.0};
  const std::vector<double> none;
  EXPECT_THROW(integrate_dopri([](double t, std::span<const double>, std::span<double> dx) {
                 dx[0] = t > 0.5 ? std::nan("") : 1.0;
               }, y, 0.0, 1.0, none, SolverConfig{}, [](double, auto, auto) {}),
               NumericalError);
}

TEST(Integrator, SaveTimesOutsideRangeAreRejected) {
  std::vector<double> y{1.0};
  const std::vector<double> saves{2.0};
  EXPECT_THROW(integrate_dopri([](double, auto, std::span<double> dx) { dx[0] = 0.0; }, y, 0.0,
                               1.0, saves, SolverConfig{}, [](double, auto, auto) {}),
               ContractViolation);
}

TEST(Integrator, SolverConfigValidation) {
  SolverConfig cfg;
  cfg.min_step = 1e-3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SolverConfig{};
  cfg.rel_tol = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(FullModel, ConservationAndNonNegativity) {
  const Trajectory& traj = reference_run();
  ASSERT_EQ(traj.times.size(), 151u);
  for (const auto& x : traj.states) {
    EXPECT_NEAR(x.total(), 10000.0, 1e-6 * 10000.0);
    for (double v : x.flat()) EXPECT_GE(v, -1e-9);
  }
}

TEST(FullModel, ResidualDecreasesAfterTransient) {
  const Trajectory& traj = reference_run();
  for (std::size_t i = 2; i < traj.residuals.size(); ++i)
    EXPECT_LT(traj.residuals[i], traj.residuals[i - 1]) << "t=" << traj.times[i];
}

TEST(FullModel, FrozenEquilibriumResiduals) {
  // Values produced by this engine at the default solver settings; the
  // residual keeps shrinking by roughly a factor four per decade.
  const Trajectory& traj = reference_run();
  EXPECT_NEAR(traj.residual_at(5.0), 2.8269, 1e-3);
  EXPECT_NEAR(traj.residual_at(120.0), 1.1897e-4, 1e-7);
  EXPECT_NEAR(traj.residual_at(150.0), 1.6831e-6, 1e-9);
  EXPECT_FALSE(equilibrium_check(traj.at(5.0), ModelParams{}, ModelContext{}, 1e-4).at_equilibrium);
  EXPECT_TRUE(equilibrium_check(traj.at(120.0), ModelParams{}, ModelContext{}, 2e-4).at_equilibrium);
  EXPECT_TRUE(equilibrium_check(traj, 1e-5).at_equilibrium);
}

TEST(FullModel, EndemicLevels) {
  const StateVector& x = reference_run().at(120.0);
  double male_infected = 0.0;
  for (const auto& k : all_strata())
    if (k.gender == Gender::male) male_infected += x(k, Compartment::infected);
  EXPECT_NEAR(male_infected, 10.7793, 1e-3);
}

TEST(FullModel, ZeroRatesTrajectoryIsAtEquilibrium) {
  // Disease-free state: the documented start without a seed is a fixed point.
  const auto saves = yearly_times(0.0, 5.0);
  const Trajectory traj =
      integrate(initial_state(1000.0, 0.0), ModelParams{}, 0.0, 5.0, SolverConfig{}, saves);
  EXPECT_TRUE(equilibrium_check(traj, 1e-9).at_equilibrium);
  EXPECT_EQ(traj.states.back(), traj.states.front());
}

TEST(FullModel, MissingSaveTimeIsContractViolation) {
  EXPECT_THROW(reference_run().at(0.5), ContractViolation);
  EXPECT_THROW(equilibrium_check(Trajectory{}, 1.0), ContractViolation);
}

TEST(FullModel, LazyMixingRebuildMatchesEagerRebuild) {
  const auto saves = yearly_times(0.0, 20.0);
  ModelContext eager;
  eager.mixing_rebuild_tol = 0.0;
  const auto a = integrate(initial_state(10000.0, 0.01), ModelParams{}, 0.0, 20.0, SolverConfig{}, saves);
  const auto b = integrate(initial_state(10000.0, 0.01), ModelParams{}, 0.0, 20.0, SolverConfig{}, saves, eager);
  for (std::size_t i = 0; i < kStateSize; ++i)
    EXPECT_NEAR(a.states.back().flat()[i], b.states.back().flat()[i], 1e-9);
}
