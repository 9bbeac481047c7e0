#pragma once

// End-to-end steps shared by the command-line tool and the acceptance
// tests: loading inputs, running one or more chains, and turning retained
// draws into summaries.

#include <future>
#include <random>
#include <string>
#include <vector>

#include "hpvcal/amcmc.hpp"
#include "hpvcal/calibration.hpp"
#include "hpvcal/config.hpp"
#include "hpvcal/io.hpp"
#include "hpvcal/vaccination.hpp"

namespace hpvcal {

/// Applies the behaviour file, if any, to the forward model.
inline ForwardModel configured_model(const RunConfig& c) {
  ForwardModel m = c.model;
  if (c.behavior_file) m.context.behavior = read_behavior(*c.behavior_file);
  return m;
}

inline std::vector<Observation> load_observations(const RunConfig& c) {
  std::vector<Observation> out;
  for (const auto& f : c.observation_files) {
    auto file = io::read_observations(f);
    out.insert(out.end(), file.observations.begin(), file.observations.end());
  }
  return out;
}

/// Seed of chain k, decorrelated from the run seed.
inline std::uint64_t chain_seed(std::uint64_t seed, std::size_t k) {
  if (k == 0) return seed;
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

using CalibrationChain = ChainResult<CalibrationPayload>;

/// Runs `config.chains` independent chains concurrently. Chain k starts from
/// the configured initial point (or the prior centres) and uses chain_seed(seed, k).
inline std::vector<CalibrationChain> run_calibration(const RunConfig& config,
                                                     const CalibrationTarget& target) {
  const auto layout = target.layout();
  const std::vector<double> init = config.init ? *config.init : prior_center(target.priors(), layout);
  std::vector<std::future<CalibrationChain>> jobs;
  for (std::size_t k = 0; k < config.chains; ++k) {
    SamplerConfig s = config.sampler;
    s.seed = chain_seed(config.seed, k);
    jobs.push_back(std::async(config.chains > 1 ? std::launch::async : std::launch::deferred,
                              [&target, init, s] { return run_chain(init, target, s); }));
  }
  std::vector<CalibrationChain> out;
  for (auto& j : jobs) out.push_back(j.get());
  return out;
}

/// Retained draws of all chains in one sequence.
inline std::vector<Draw<CalibrationPayload>> pooled_draws(const std::vector<CalibrationChain>& chains) {
  std::vector<Draw<CalibrationPayload>> out;
  for (const auto& c : chains) out.insert(out.end(), c.samples.begin(), c.samples.end());
  return out;
}

inline io::SampleTable sample_table(const std::vector<CalibrationChain>& chains,
                                    const ParameterLayout& layout) {
  io::SampleTable t;
  t.names = layout.names();
  for (std::size_t k = 0; k < chains.size(); ++k)
    for (const auto& d : chains[k].samples) {
      t.theta.push_back(d.theta);
      t.log_posterior.push_back(d.log_posterior);
      t.iteration.push_back(d.iteration);
      if (chains.size() > 1) t.chain.push_back(k);
    }
  return t;
}

/// Central credible interval of one scalar across draws.
struct Interval {
  double mean = 0.0, lower = 0.0, upper = 0.0;
  bool contains(double x) const { return x >= lower && x <= upper; }
};

inline Interval summarize(const std::vector<double>& values, double level = 0.95) {
  if (values.empty()) throw ContractViolation("summarize: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double tail = 0.5 * (1.0 - level);
  return {sum / static_cast<double>(values.size()), quantile(values, tail),
          quantile(values, 1.0 - tail)};
}

/// Marginal posterior summary of parameter i.
template <class Draws>
Interval parameter_interval(const Draws& draws, std::size_t i, double level = 0.95) {
  std::vector<double> v;
  for (const auto& d : draws) v.push_back(d.theta.at(i));
  return summarize(v, level);
}

/// Pointwise band of a gender's compartment total over the saved years.
template <class Draws>
std::vector<Interval> compartment_band(const Draws& draws, Gender g, Compartment c) {
  if (draws.empty()) throw ContractViolation("compartment_band: no draws");
  const std::size_t nt = draws.front().payload.totals.size();
  std::vector<Interval> out;
  for (std::size_t t = 0; t < nt; ++t) {
    std::vector<double> v;
    for (const auto& d : draws) {
      const CompartmentCounts& x = d.payload.totals.at(t)[gender_slot(g)];
      const double vals[] = {x.S, x.I, x.G, x.P, x.N};
      v.push_back(vals[static_cast<int>(c)]);
    }
    out.push_back(summarize(v));
  }
  return out;
}

inline std::string serialize_bands(const std::vector<Draw<CalibrationPayload>>& draws,
                                   const std::vector<double>& times) {
  std::string out = "time,gender,compartment,mean,q2.5,q97.5\n";
  const char* names[] = {"S", "I", "G", "P", "N"};
  for (Gender g : {Gender::male, Gender::female})
    for (int c = 0; c < kCompartments; ++c) {
      const auto band = compartment_band(draws, g, static_cast<Compartment>(c));
      for (std::size_t t = 0; t < band.size(); ++t)
        out += io::format_number(times.at(t)) + "," + gender_name(g) + "," + names[c] + "," +
               io::format_number(band[t].mean) + "," + io::format_number(band[t].lower) + "," +
               io::format_number(band[t].upper) + "\n";
    }
  return out;
}

/// Re-simulates the terminal state at T for every sample row.
inline std::vector<PredictiveDraw> predictive_draws(const io::SampleTable& samples,
                                                    const ParameterLayout& layout,
                                                    const ForwardModel& model) {
  std::vector<PredictiveDraw> out;
  const auto saves = std::vector<double>{model.T};
  for (const auto& theta : samples.theta) {
    PredictiveDraw d;
    d.params = layout.from_vector(theta);
    validate(d.params);
    d.terminal = integrate(model.initial(), d.params, model.t0, model.T, model.solver, saves,
                           model.context)
                     .states.back();
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace hpvcal
