#pragma once

// Run configuration for the command-line tool: one JSON file, with
// relative paths resolved against the file's directory, plus overrides.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hpvcal/amcmc.hpp"
#include "hpvcal/calibration.hpp"
#include "hpvcal/errors.hpp"
#include "hpvcal/io.hpp"
#include "hpvcal/mixing.hpp"
#include "hpvcal/observation.hpp"
#include "hpvcal/ode.hpp"
#include "hpvcal/vaccination.hpp"

namespace hpvcal {

struct RunConfig {
  Variant variant = Variant::combined;
  bool free_immunity = false;
  std::vector<std::string> observation_files;
  std::optional<std::string> behavior_file;
  std::optional<std::string> samples_file;  // input of `predict`
  PriorSpec prior_overrides;
  ForwardModel model;
  SamplerConfig sampler;
  std::optional<double> burn_in_fraction = 0.2;  // used when burn_in is not given
  std::size_t chains = 1;
  std::optional<std::vector<double>> init;       // default: prior centres
  LikelihoodOptions likelihood;
  SyntheticDesign synthetic;
  VaccinationPolicy vaccination;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  std::string source_json = "{}";  // canonical dump, hashed into manifests

  ParameterLayout layout() const { return ParameterLayout(free_immunity); }

  PriorSpec priors() const {
    PriorSpec p = default_priors(variant, free_immunity);
    for (const auto& [name, prior] : prior_overrides) p[name] = prior;
    return p;
  }

  /// Fills derived sampler fields after overrides.
  void finalize() {
    sampler.seed = seed;
    synthetic.seed = seed;
    if (burn_in_fraction)
      sampler.burn_in = std::max<std::size_t>(
          1, static_cast<std::size_t>(*burn_in_fraction * static_cast<double>(sampler.iterations)));
  }

  std::uint64_t hash() const { return io::fnv1a(source_json); }
};

namespace detail {

inline void check_keys(const io::Json& j, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

template <class T>
void read(const io::Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal().string();
}

inline Prior parse_prior(const io::Json& j, const std::string& where) {
  check_keys(j, where, {"family", "a", "b"});
  Prior p;
  std::string family = "uniform";
  read(j, "family", family, where);
  p.family = prior_family_from_string(family);
  if (!j.contains("a") || !j.contains("b")) throw ConfigError(where + ": needs a and b");
  read(j, "a", p.a, where);
  read(j, "b", p.b, where);
  if (!(p.b > p.a) && p.family == PriorFamily::uniform)
    throw ConfigError(where + ": uniform needs a < b");
  if (p.family != PriorFamily::uniform && !(p.a > 0.0 && p.b > 0.0))
    throw ConfigError(where + ": shape parameters must be positive");
  return p;
}

}  // namespace detail

/// Behaviour tables from JSON: age_rates (9), activity_rates (4),
/// activity_proportions (4), mean_partner_rate.
inline BehaviorTables behavior_from_json(const io::Json& j, const std::string& where) {
  detail::check_keys(j, where, {"age_rates", "activity_rates", "activity_proportions",
                                "mean_partner_rate", "comment"});
  BehaviorTables b = BehaviorTables::defaults();
  detail::read(j, "age_rates", b.age_rates, where);
  detail::read(j, "activity_rates", b.activity_rates, where);
  detail::read(j, "activity_proportions", b.activity_proportions, where);
  detail::read(j, "mean_partner_rate", b.mean_partner_rate, where);
  try {
    b.validate();
  } catch (const InvalidParameter& e) {
    throw ConfigError(where + ": " + e.what());
  }
  return b;
}

inline BehaviorTables read_behavior(const std::string& path) {
  io::Json j;
  try {
    j = io::Json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
  return behavior_from_json(j, path);
}

inline RunConfig config_from_json(const io::Json& j, const std::filesystem::path& base_dir) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, "config", {"variant", "seed", "output_dir", "free_immunity", "data", "priors",
                           "model", "solver", "sampler", "likelihood", "synthetic",
                           "vaccination", "comment"});
  RunConfig c;
  c.source_json = j.dump();
  std::string variant = to_string(c.variant);
  read(j, "variant", variant, "config");
  c.variant = variant_from_string(variant);
  read(j, "seed", c.seed, "config");
  read(j, "output_dir", c.output_dir, "config");
  c.output_dir = detail::resolve(base_dir, c.output_dir);
  read(j, "free_immunity", c.free_immunity, "config");

  if (j.contains("data")) {
    const auto& d = j["data"];
    check_keys(d, "data", {"observations", "behavior", "samples"});
    std::vector<std::string> files;
    read(d, "observations", files, "data");
    for (auto& f : files) c.observation_files.push_back(detail::resolve(base_dir, f));
    if (d.contains("behavior")) {
      std::string f;
      read(d, "behavior", f, "data");
      c.behavior_file = detail::resolve(base_dir, f);
    }
    if (d.contains("samples")) {
      std::string f;
      read(d, "samples", f, "data");
      c.samples_file = detail::resolve(base_dir, f);
    }
  }

  if (j.contains("priors")) {
    const auto& p = j["priors"];
    if (!p.is_object()) throw ConfigError("priors: expected an object");
    const auto names = ParameterLayout(true).names();
    for (auto it = p.begin(); it != p.end(); ++it) {
      if (std::find(names.begin(), names.end(), it.key()) == names.end())
        throw ConfigError("priors: unknown parameter '" + it.key() + "'");
      c.prior_overrides[it.key()] = detail::parse_prior(it.value(), "priors." + it.key());
    }
  }

  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, "model", {"population", "seed_fraction", "t0", "T", "age_preference",
                            "supply_compromise", "mixing_rebuild_tol"});
    read(m, "population", c.model.population, "model");
    read(m, "seed_fraction", c.model.seed_fraction, "model");
    read(m, "t0", c.model.t0, "model");
    read(m, "T", c.model.T, "model");
    read(m, "age_preference", c.model.context.age_preference, "model");
    read(m, "supply_compromise", c.model.context.supply_compromise, "model");
    read(m, "mixing_rebuild_tol", c.model.context.mixing_rebuild_tol, "model");
  }

  if (j.contains("solver")) {
    const auto& s = j["solver"];
    check_keys(s, "solver", {"initial_step", "min_step", "rel_tol", "max_step", "abs_tol",
                             "negative_tol"});
    auto& cfg = c.model.solver;
    read(s, "initial_step", cfg.initial_step, "solver");
    read(s, "min_step", cfg.min_step, "solver");
    read(s, "rel_tol", cfg.rel_tol, "solver");
    read(s, "max_step", cfg.max_step, "solver");
    read(s, "abs_tol", cfg.abs_tol, "solver");
    read(s, "negative_tol", cfg.negative_tol, "solver");
  }

  if (j.contains("sampler")) {
    const auto& s = j["sampler"];
    check_keys(s, "sampler", {"iterations", "burn_in", "burn_in_fraction", "mixture_weight",
                              "adaptation_start", "thinning", "window", "chains", "init"});
    read(s, "iterations", c.sampler.iterations, "sampler");
    if (s.contains("burn_in")) {
      read(s, "burn_in", c.sampler.burn_in, "sampler");
      c.burn_in_fraction.reset();
    }
    if (s.contains("burn_in_fraction")) {
      double f = 0.0;
      read(s, "burn_in_fraction", f, "sampler");
      if (!(f > 0.0 && f < 1.0)) throw ConfigError("sampler.burn_in_fraction must lie in (0,1)");
      c.burn_in_fraction = f;
    }
    read(s, "mixture_weight", c.sampler.mixture_weight, "sampler");
    read(s, "adaptation_start", c.sampler.adaptation_start, "sampler");
    read(s, "thinning", c.sampler.thinning, "sampler");
    read(s, "window", c.sampler.window, "sampler");
    read(s, "chains", c.chains, "sampler");
    if (s.contains("init")) {
      std::vector<double> init;
      read(s, "init", init, "sampler");
      c.init = init;
    }
  }

  if (j.contains("likelihood")) {
    const auto& l = j["likelihood"];
    check_keys(l, "likelihood", {"incidence_form", "equilibrium_tol"});
    std::string form = "automatic";
    read(l, "incidence_form", form, "likelihood");
    if (form == "automatic") c.likelihood.incidence_form = IncidenceForm::automatic;
    else if (form == "equilibrium") c.likelihood.incidence_form = IncidenceForm::equilibrium;
    else if (form == "lagged") c.likelihood.incidence_form = IncidenceForm::lagged;
    else throw ConfigError("likelihood.incidence_form: '" + form + "'");
    read(l, "equilibrium_tol", c.likelihood.equilibrium_tol, "likelihood");
  }

  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    check_keys(s, "synthetic", {"truth", "first_time", "interval", "last_time", "per_activity",
                                "noise_scale"});
    if (s.contains("truth")) c.synthetic.truth = io::params_from_json(s["truth"]);
    read(s, "first_time", c.synthetic.first_time, "synthetic");
    read(s, "interval", c.synthetic.interval, "synthetic");
    read(s, "last_time", c.synthetic.last_time, "synthetic");
    read(s, "per_activity", c.synthetic.per_activity, "synthetic");
    read(s, "noise_scale", c.synthetic.noise_scale, "synthetic");
  }

  if (j.contains("vaccination")) {
    const auto& v = j["vaccination"];
    check_keys(v, "vaccination", {"start_offset", "coverage", "efficacy", "target_gender",
                                  "target_age", "horizon"});
    read(v, "start_offset", c.vaccination.start_offset, "vaccination");
    read(v, "coverage", c.vaccination.coverage, "vaccination");
    read(v, "efficacy", c.vaccination.efficacy, "vaccination");
    if (v.contains("target_gender")) {
      std::string g;
      read(v, "target_gender", g, "vaccination");
      if (g == "male") c.vaccination.target_gender = Gender::male;
      else if (g == "female") c.vaccination.target_gender = Gender::female;
      else throw ConfigError("vaccination.target_gender: '" + g + "'");
    }
    read(v, "target_age", c.vaccination.target_age, "vaccination");
    read(v, "horizon", c.vaccination.horizon, "vaccination");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  io::Json j;
  try {
    j = io::Json::parse(io::read_file(path));
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path());
}

/// Checks everything a subcommand needs before any work starts.
inline void validate_config(const RunConfig& c, bool needs_observations, bool needs_samples) {
  c.model.validate();
  c.vaccination.validate();
  if (c.chains == 0) throw ConfigError("sampler.chains must be >= 1");
  const auto layout = c.layout();
  const auto priors = c.priors();
  for (const auto& n : layout.names())
    if (!priors.count(n)) throw ConfigError("no prior for parameter " + n);
  if (c.init && c.init->size() != layout.size())
    throw ConfigError("sampler.init: expected " + std::to_string(layout.size()) + " values");
  c.sampler.validate(layout.size());
  auto exists = [](const std::string& p, const std::string& what) {
    if (!std::filesystem::exists(p)) throw ConfigError(what + " not found: " + p);
  };
  if (needs_observations) {
    if (c.observation_files.empty()) throw ConfigError("data.observations: no files given");
    for (const auto& f : c.observation_files) exists(f, "observation file");
  }
  if (c.behavior_file) exists(*c.behavior_file, "behaviour file");
  if (needs_samples) {
    if (!c.samples_file) throw ConfigError("data.samples: no samples file given");
    exists(*c.samples_file, "samples file");
  }
}

}  // namespace hpvcal
