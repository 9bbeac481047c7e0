// hpvcal: synthetic data, calibration, vaccination forecasts and single
// forward runs of the HPV-6/-11 transmission model.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hpvcal/hpvcal.hpp"

namespace fs = std::filesystem;
using namespace hpvcal;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  std::optional<std::string> variant;
  std::optional<std::size_t> chains;
  std::optional<std::string> out;
  std::optional<std::string> samples;
};

RunConfig load(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.iterations) c.sampler.iterations = *o.iterations;
  if (o.variant) c.variant = variant_from_string(*o.variant);
  if (o.chains) c.chains = *o.chains;
  if (o.out) c.output_dir = *o.out;
  if (o.samples) c.samples_file = *o.samples;
  c.finalize();
  return c;
}

std::string out_path(const RunConfig& c, const std::string& name) {
  return (fs::path(c.output_dir) / name).string();
}

void prepare_output(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.output_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.output_dir + ": " + ec.message());
}

void write_manifest(const RunConfig& c, const std::string& command,
                    const std::vector<std::string>& argv, const std::vector<std::string>& files) {
  io::Json m;
  m["tool"] = "hpvcal";
  m["version"] = kVersion;
  m["command"] = command;
  m["arguments"] = argv;
  m["seed"] = c.seed;
  m["variant"] = to_string(c.variant);
  m["iterations"] = c.sampler.iterations;
  m["chains"] = c.chains;
  m["config_hash"] = io::hex64(c.hash());
  m["config"] = io::Json::parse(c.source_json);
  m["outputs"] = files;
  m["compiler"] = __VERSION__;
  io::write_file(out_path(c, "manifest.json"), m.dump(2) + "\n");
}

int run_synth(const RunConfig& c, const std::vector<std::string>& argv) {
  validate_config(c, false, false);
  prepare_output(c);
  const ForwardModel model = configured_model(c);
  const auto obs = synthetic_observations(model, c.synthetic, c.likelihood);
  io::write_file(out_path(c, "observations.csv"),
                 io::serialize_observations(
                     obs, {"synthetic observations; seed " + std::to_string(c.seed) +
                           ", noise scale " + io::format_number(c.synthetic.noise_scale)}));
  io::Json truth;
  truth["parameters"] = io::params_json(c.synthetic.truth);
  truth["population"] = model.population;
  truth["seed_fraction"] = model.seed_fraction;
  truth["observation_times"] = c.synthetic.times();
  truth["noise_scale"] = c.synthetic.noise_scale;
  truth["seed"] = c.seed;
  io::write_file(out_path(c, "truth.json"), truth.dump(2) + "\n");
  write_manifest(c, "synth", argv, {"observations.csv", "truth.json"});
  std::cout << "wrote " << obs.size() << " observations to " << out_path(c, "observations.csv")
            << "\n";
  return 0;
}

int run_calibrate(const RunConfig& c, const std::vector<std::string>& argv) {
  validate_config(c, true, false);
  prepare_output(c);
  const ForwardModel model = configured_model(c);
  const auto observations = load_observations(c);
  const CalibrationTarget target(model, observations, c.priors(), c.layout(), c.likelihood);
  const auto chains = run_calibration(c, target);
  const auto draws = pooled_draws(chains);

  io::write_file(out_path(c, "samples.csv"), io::serialize_samples(sample_table(chains, c.layout())));
  io::Json diag;
  const auto names = c.layout().names();
  for (std::size_t k = 0; k < chains.size(); ++k)
    diag["chains"].push_back(io::diagnostics_json(chains[k].diagnostics, names));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Interval iv = parameter_interval(draws, i);
    diag["posterior"][names[i]] = {{"mean", iv.mean}, {"q2.5", iv.lower}, {"q97.5", iv.upper}};
  }
  diag["retained_draws"] = draws.size();
  io::write_file(out_path(c, "diagnostics.json"), diag.dump(2) + "\n");
  io::write_file(out_path(c, "calibration_fit.csv"),
                 io::serialize_fit(io::calibration_fit(draws, observations, model.T)));
  io::write_file(out_path(c, "state_bands.csv"), serialize_bands(draws, model.save_times()));
  write_manifest(c, "calibrate", argv,
                 {"samples.csv", "diagnostics.json", "calibration_fit.csv", "state_bands.csv"});
  for (std::size_t k = 0; k < chains.size(); ++k)
    std::cout << "chain " << k << ": acceptance " << chains[k].diagnostics.acceptance_rate
              << ", " << chains[k].samples.size() << " retained draws, "
              << chains[k].diagnostics.runtime_seconds << " s\n";
  return 0;
}

int run_predict(const RunConfig& c, const std::vector<std::string>& argv) {
  validate_config(c, false, true);
  prepare_output(c);
  const ForwardModel model = configured_model(c);
  const auto samples =
      io::parse_samples(io::read_file(*c.samples_file), *c.samples_file, c.layout());
  if (samples.theta.empty()) throw DataError(*c.samples_file + ": no samples");
  const auto draws = predictive_draws(samples, c.layout(), model);
  const auto result = posterior_predictive(draws, c.vaccination, model.T, model.solver, model.context);
  io::write_file(out_path(c, "predictive.csv"), io::serialize_predictive(result));
  write_manifest(c, "predict", argv, {"predictive.csv"});
  std::cout << "predictive distribution from " << draws.size() << " draws over "
            << result.times.size() << " time points\n";
  return 0;
}

int run_simulate(const RunConfig& c, const std::vector<std::string>& argv) {
  validate_config(c, false, false);
  prepare_output(c);
  const ForwardModel model = configured_model(c);
  validate(c.synthetic.truth);
  const Trajectory traj = model.run(c.synthetic.truth);
  io::write_file(out_path(c, "trajectory.csv"), io::serialize_trajectory(traj));
  write_manifest(c, "simulate", argv, {"trajectory.csv"});
  std::cout << "residual at T: " << traj.residuals.back() << " persons/yr\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HPV-6/-11 transmission model calibration and vaccination forecasts"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--iterations", o.iterations, "sampler iterations");
    sub->add_option("--variant", o.variant, "prior block: hpv6, hpv11 or combined");
    sub->add_option("--chains", o.chains, "independent chains");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* synth = app.add_subcommand("synth", "generate synthetic observations");
  auto* calibrate = app.add_subcommand("calibrate", "run the adaptive Metropolis calibration");
  auto* predict = app.add_subcommand("predict", "posterior predictive vaccination forecast");
  auto* simulate = app.add_subcommand("simulate", "single forward run");
  for (auto* s : {synth, calibrate, predict, simulate}) add_common(s);
  predict->add_option("--samples", o.samples, "samples CSV from calibrate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::vector<std::string> args(argv + 1, argv + argc);

  try {
    const RunConfig c = load(o);
    if (synth->parsed()) return run_synth(c, args);
    if (calibrate->parsed()) return run_calibrate(c, args);
    if (predict->parsed()) return run_predict(c, args);
    return run_simulate(c, args);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const InitializationError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidParameter& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure at t=" << e.time() << ": " << e.what() << "\n";
    return 4;
  } catch (const UndefinedObservable& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
