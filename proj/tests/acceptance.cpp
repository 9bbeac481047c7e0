// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria 1, 2 and 8 share one synthetic calibration;
// criterion 7 runs a calibration against the bundled survey data.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hpvcal/hpvcal.hpp"
#include "test_support.hpp"

using namespace hpvcal;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = HPVCAL_SOURCE_DIR;

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::printf("%s %d %s: %s\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Calibrated {
  RunConfig config;
  ForwardModel model;
  std::vector<Observation> observations;
  std::vector<CalibrationChain> chains;
  std::vector<Draw<CalibrationPayload>> draws;
  double runtime = 0.0;
};

Calibrated calibrate(RunConfig config, std::vector<Observation> observations) {
  Calibrated out;
  const auto t0 = std::chrono::steady_clock::now();
  out.config = std::move(config);
  out.model = configured_model(out.config);
  out.observations = std::move(observations);
  const CalibrationTarget target(out.model, out.observations, out.config.priors(),
                                 out.config.layout(), out.config.likelihood);
  out.chains = run_calibration(out.config, target);
  out.draws = pooled_draws(out.chains);
  out.runtime = seconds_since(t0);
  return out;
}

RunConfig bundled(const char* name) {
  RunConfig c = load_config((kSource / "configs" / name).string());
  c.finalize();
  return c;
}

// 1 and 2: recovery of the true parameters and of the male trajectories.
void synthetic_recovery(const Calibrated& run) {
  const auto names = run.config.layout().names();
  const auto truth = run.config.layout().to_vector(run.config.synthetic.truth);
  std::size_t inside = 0;
  std::string missed;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Interval iv = parameter_interval(run.draws, i);
    if (iv.contains(truth[i])) {
      ++inside;
    } else {
      missed += " " + names[i] + "=" + io::format_number(truth[i]) + " not in [" +
                io::format_number(iv.lower) + ", " + io::format_number(iv.upper) + "]";
    }
  }
  report(1, inside == names.size(), "synthetic parameter recovery",
         std::to_string(inside) + "/" + std::to_string(names.size()) +
             " true values inside central 95% intervals; " +
             std::to_string(run.config.sampler.iterations) + " iterations, " +
             std::to_string(run.draws.size()) + " retained draws, acceptance " +
             fmt("%.3f", run.chains.front().diagnostics.acceptance_rate) + ", " +
             fmt("%.0f s", run.runtime) + missed);

  const Trajectory truth_traj = run.model.run(run.config.synthetic.truth);
  const char* labels[] = {"S", "I", "G", "P", "N"};
  double worst = 1.0;
  std::string detail;
  for (int c = 0; c < kCompartments; ++c) {
    const auto band = compartment_band(run.draws, Gender::male, static_cast<Compartment>(c));
    std::size_t covered = 0;
    for (std::size_t t = 0; t < band.size(); ++t) {
      const CompartmentCounts x = gender_totals(truth_traj.states[t])[gender_slot(Gender::male)];
      const double vals[] = {x.S, x.I, x.G, x.P, x.N};
      covered += band[t].contains(vals[c]);
    }
    const double frac = static_cast<double>(covered) / static_cast<double>(band.size());
    worst = std::min(worst, frac);
    detail += std::string(c ? ", " : "") + labels[c] + " " + fmt("%.3f", frac);
  }
  report(2, worst >= 0.95, "male trajectory coverage",
         "fraction of saved years inside the pointwise 95% band: " + detail);
}

// 3: closed population over 120 years at the default solver tolerances.
void conservation() {
  std::mt19937_64 rng(3);
  const auto priors = default_priors(Variant::hpv6);
  const ParameterLayout layout;
  double worst = 0.0;
  for (int rep = 0; rep < 6; ++rep) {
    ModelParams p;
    if (rep > 0) {
      std::vector<double> theta;
      for (const auto& n : layout.names()) theta.push_back(sample_prior(priors.at(n), rng));
      p = layout.from_vector(theta);
    }
    const auto saves = yearly_times(0.0, 120.0);
    const Trajectory traj =
        integrate(initial_state(10000.0, 0.01), p, 0.0, 120.0, SolverConfig{}, saves);
    for (const auto& x : traj.states) worst = std::max(worst, std::abs(x.total() / 10000.0 - 1.0));
  }
  report(3, worst < 1e-6, "population conservation",
         "max relative drift " + fmt("%.3e", worst) + " over 6 parameter sets, 120 years");
}

// 4: balance residual and row sums on random inputs.
void mixing_balance() {
  std::mt19937_64 rng(4);
  double worst_balance = 0.0, worst_rows = 0.0;
  const auto tables = BehaviorTables::defaults();
  for (int rep = 0; rep < 200; ++rep) {
    const StratumArray pops = test::random_populations(rng);
    const MixingConfig cfg = test::random_mixing_config(rng);
    const StratumArray rates = partner_rates(tables, pops);
    const MixingTensor rho = mixing_probabilities(cfg, rates, pops);
    const MixingTensor adjusted = age_adjust(rho, cfg.age_preference);
    for (const MixingTensor* t : {&rho, &adjusted})
      for (int g = 0; g < kGenders; ++g)
        for (int s = 0; s < kActivityGroups; ++s)
          for (int a = 0; a < kAgeGroups; ++a)
            worst_rows = std::max(worst_rows, std::abs(t->row_sum(g, s, a) - 1.0));

    const MixingMatrix m = balance(rates, adjusted, pops, cfg.supply_compromise);
    for (int s = 0; s < kActivityGroups; ++s)
      for (int s2 = 0; s2 < kActivityGroups; ++s2)
        for (int a = 0; a < kAgeGroups; ++a)
          for (int a2 = 0; a2 < kAgeGroups; ++a2) {
            const double male = m.entries(0, s, s2, a, a2) * pops[stratum_ordinal(0, s, a)];
            const double female = m.entries(1, s2, s, a2, a) * pops[stratum_ordinal(1, s2, a2)];
            worst_balance =
                std::max(worst_balance, std::abs(male - female) / std::max(male, 1e-12));
          }
  }
  report(4, worst_balance < 1e-8 && worst_rows < 1e-10, "mixing balance",
         "max balance residual " + fmt("%.3e", worst_balance) + ", max row-sum error " +
             fmt("%.3e", worst_rows) + " over 200 random inputs");
}

// 5: moment recursion against a plain replay.
void recursion_oracle() {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(1.0, 4.0);
  const std::size_t d = 14;
  std::vector<std::vector<double>> xs(1001, std::vector<double>(d));
  for (auto& x : xs)
    for (double& v : x) v = n(rng);

  ChainState chain = ChainState::start(Eigen::Map<Eigen::VectorXd>(xs[0].data(), d), 0.0, 1);
  for (std::size_t i = 1; i < xs.size(); ++i)
    update_moments(chain, Eigen::Map<Eigen::VectorXd>(xs[i].data(), d));

  std::vector<double> mean = xs[0];
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    const double w = 1.0 / static_cast<double>(i + 1);
    std::vector<double> diff(d);
    for (std::size_t k = 0; k < d; ++k) diff[k] = xs[i][k] - mean[k];
    for (std::size_t k = 0; k < d; ++k) mean[k] += w * diff[k];
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t l = 0; l < d; ++l)
        cov[k * d + l] += w * (diff[k] * diff[l] - cov[k * d + l]);
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    worst = std::max(worst, std::abs(chain.mean[static_cast<Eigen::Index>(k)] - mean[k]));
    for (std::size_t l = 0; l < d; ++l)
      worst = std::max(worst, std::abs(chain.cov(static_cast<Eigen::Index>(k),
                                                 static_cast<Eigen::Index>(l)) -
                                       cov[k * d + l]));
  }
  report(5, worst < 1e-10, "moment recursion oracle",
         "max entry difference " + fmt("%.3e", worst) + " after 1000 vectors");
}

// 6: the sampler alone on a standard bivariate Gaussian.
void gaussian_target() {
  SamplerConfig cfg;
  cfg.iterations = 50000;
  cfg.burn_in = 5000;
  cfg.thinning = 1;
  cfg.seed = 6;
  const std::vector<double> init{0.5, -0.5};
  const auto r = run_chain(init, [](std::span<const double> x) {
    return Evaluation<int>{-0.5 * (x[0] * x[0] + x[1] * x[1]), 0};
  }, cfg);
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    double m = 0.0, v = 0.0;
    for (const auto& s : r.samples) m += s.theta[i];
    m /= static_cast<double>(r.samples.size());
    for (const auto& s : r.samples) v += (s.theta[i] - m) * (s.theta[i] - m);
    v /= static_cast<double>(r.samples.size() - 1);
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_var = std::max(worst_var, std::abs(v - 1.0));
  }
  const double acc = r.diagnostics.acceptance_rate;
  report(6, worst_mean < 0.05 && worst_var < 0.1 && acc > 0.1 && acc < 0.5,
         "sampler on a standard Gaussian",
         "max |mean| " + fmt("%.4f", worst_mean) + ", max |var-1| " + fmt("%.4f", worst_var) +
             ", acceptance " + fmt("%.3f", acc));
}

// 7: posterior-mean observables of the combined fit against the survey CIs.
void real_data(const Calibrated& run) {
  const auto rows = io::calibration_fit(run.draws, run.observations, run.model.T);
  std::size_t cells = 0, inside = 0;
  std::string outside;
  for (const auto& r : rows) {
    if (r.gender == Gender::male && r.age == 1) continue;
    const auto in = r.inside_ci();
    if (!in) continue;
    ++cells;
    if (*in) {
      ++inside;
    } else {
      outside += std::string(" ") + (r.gender == Gender::male ? "m" : "f") + std::to_string(r.age) +
                 (r.kind == ObservationKind::incidence ? "-inc" : "-sero");
    }
  }
  const double frac = cells ? static_cast<double>(inside) / static_cast<double>(cells) : 0.0;
  report(7, cells > 0 && frac >= 0.70, "real-data plausibility (combined variant)",
         std::to_string(inside) + "/" + std::to_string(cells) + " cells inside the reported CI (" +
             fmt("%.1f%%", 100.0 * frac) + "); " + std::to_string(run.config.sampler.iterations) +
             " iterations, " + fmt("%.0f s", run.runtime) + "; outside:" + outside);
}

// 8: vaccination forecast from the synthetic posterior.
void vaccination(const Calibrated& run) {
  std::vector<PredictiveDraw> draws;
  draws.reserve(run.draws.size());
  for (const auto& d : run.draws)
    draws.push_back({run.config.layout().from_vector(d.theta), d.payload.terminal});
  const VaccinationPolicy& policy = run.config.vaccination;
  const double T = run.model.T;
  const auto result = posterior_predictive(draws, policy, T, run.model.solver, run.model.context);
  const Gender target = policy.target_gender;
  const Gender other = target == Gender::male ? Gender::female : Gender::male;
  const auto& f = result.find(target, 0, ObservationKind::incidence);
  const auto& m = result.find(other, 0, ObservationKind::incidence);

  double worst_rise = 0.0;
  for (std::size_t t = 1; t < result.times.size(); ++t)
    if (result.times[t - 1] >= T + policy.start_offset - 1e-9)
      worst_rise = std::max(worst_rise, f.mean[t] - f.mean[t - 1]);
  std::size_t lower_at_end = 0;
  for (const auto& d : f.draws) lower_at_end += d.back() < d.front();
  const bool herd = m.mean.back() < m.mean.front();
  report(8, worst_rise <= 1e-3 && lower_at_end == f.draws.size() && herd,
         "vaccination forecast",
         "largest rise of the mean after T+" + io::format_number(policy.start_offset) + ": " +
             fmt("%.2e", worst_rise) + "; " + std::to_string(lower_at_end) + "/" +
             std::to_string(f.draws.size()) + " draws end below their value at T (" +
             fmt("%.3f", f.mean.front()) + " -> " + fmt("%.3f", f.mean.back()) +
             " per 1000); other gender " + fmt("%.3f", m.mean.front()) + " -> " +
             fmt("%.3f", m.mean.back()));
}

void solver_order() {
  const double order = test::decay_convergence_order();
  report(9, order >= 4.0, "solver convergence order",
         "empirical order " + fmt("%.2f", order) + " on y' = -y, rel_tol 1e-3 .. 1e-7");
}

}  // namespace

int main() {
  try {
    conservation();
    mixing_balance();
    recursion_oracle();
    gaussian_target();
    solver_order();

    RunConfig syn = bundled("synthetic.json");
    const ForwardModel syn_model = configured_model(syn);
    const Calibrated synthetic =
        calibrate(syn, synthetic_observations(syn_model, syn.synthetic, syn.likelihood));
    synthetic_recovery(synthetic);
    vaccination(synthetic);

    const RunConfig comb = bundled("combined.json");
    real_data(calibrate(comb, load_observations(comb)));
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance run aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
