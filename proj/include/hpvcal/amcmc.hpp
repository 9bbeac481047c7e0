#pragma once

// Adaptive Metropolis sampler with a two-component Gaussian mixture
// proposal: an adapted component with covariance (2.38^2/d) Sigma_j and a
// fixed component with covariance (0.1^2/d) I.

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "hpvcal/errors.hpp"

namespace hpvcal {

inline constexpr double kAdaptiveScale = 2.38;
inline constexpr double kFixedScale = 0.1;
inline constexpr double kCholeskyJitter = 1e-10;

struct SamplerConfig {
  std::size_t iterations = 100000;  // J
  std::size_t burn_in = 10000;
  double mixture_weight = 0.95;     // probability of the adapted component
  std::size_t adaptation_start = 0; // j0; 0 means 2d
  std::size_t thinning = 10;
  std::uint64_t seed = 1;
  std::size_t window = 1000;        // acceptance-rate window length
  bool adapt = true;                // false: no adaptation, fixed component only

  std::size_t effective_start(std::size_t d) const noexcept {
    return adaptation_start == 0 ? 2 * d : adaptation_start;
  }

  void validate(std::size_t d) const {
    if (iterations > 0 && !(burn_in > 0 && burn_in < iterations))
      throw ConfigError("sampler: need 0 < burn_in < iterations");
    if (!(mixture_weight > 0.0 && mixture_weight < 1.0))
      throw ConfigError("sampler: mixture weight must lie in (0,1)");
    if (effective_start(d) < d + 1) throw ConfigError("sampler: adaptation start must be >= d+1");
    if (thinning == 0) throw ConfigError("sampler: thinning must be >= 1");
    if (window == 0) throw ConfigError("sampler: window must be >= 1");
  }
};

/// Current point of a chain and the running moments that drive adaptation.
struct ChainState {
  Eigen::VectorXd theta;
  double log_post = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t j = 1;
  std::mt19937_64 rng;

  static ChainState start(const Eigen::VectorXd& theta, double log_post, std::uint64_t seed) {
    ChainState c;
    c.theta = theta;
    c.log_post = log_post;
    c.mean = theta;
    c.cov = Eigen::MatrixXd::Zero(theta.size(), theta.size());
    c.j = 1;
    c.rng.seed(seed);
    return c;
  }

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(theta.size()); }
};

struct Proposal {
  Eigen::VectorXd theta;
  bool adaptive = false;           // drawn from the adapted component
  bool cholesky_fallback = false;  // adapted component requested but not factorisable
};

/// Lower Cholesky factor of cov, retrying once with 1e-10 jitter on the
/// diagonal. Returns false if both attempts fail.
inline bool cholesky_with_jitter(const Eigen::MatrixXd& cov, Eigen::MatrixXd& lower) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    llt.compute(cov + kCholeskyJitter * Eigen::MatrixXd::Identity(cov.rows(), cov.cols()));
    if (llt.info() != Eigen::Success) return false;
  }
  lower = llt.matrixL();
  return lower.allFinite();
}

/// Draws a candidate around chain.theta. Before j0, or with adaptation
/// switched off, only the fixed component is used.
inline Proposal propose(ChainState& chain, const SamplerConfig& config) {
  const auto d = static_cast<Eigen::Index>(chain.dimension());
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double u = unif(chain.rng);
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(chain.rng);

  Proposal out;
  const bool want_adaptive = config.adapt &&
                             chain.j >= config.effective_start(chain.dimension()) &&
                             u < config.mixture_weight;
  if (want_adaptive) {
    Eigen::MatrixXd lower;
    if (cholesky_with_jitter(chain.cov, lower)) {
      out.theta = chain.theta + (kAdaptiveScale / std::sqrt(static_cast<double>(d))) * (lower * z);
      out.adaptive = true;
      return out;
    }
    out.cholesky_fallback = true;
  }
  out.theta = chain.theta + (kFixedScale / std::sqrt(static_cast<double>(d))) * z;
  return out;
}

/// Running mean / covariance recursion with step 1/(j+1):
///   mu    <- mu + (theta - mu) / (j+1)
///   Sigma <- Sigma + ((theta - mu)(theta - mu)' - Sigma) / (j+1)
/// where (theta - mu) uses the mean before the update; j is then incremented.
inline void update_moments(ChainState& chain, const Eigen::VectorXd& theta) {
  const double step = 1.0 / static_cast<double>(chain.j + 1);
  const Eigen::VectorXd diff = theta - chain.mean;
  chain.mean += step * diff;
  chain.cov += step * (diff * diff.transpose() - chain.cov);
  ++chain.j;
}

struct Acceptance {
  double probability = 0.0;
  bool invalid_chain = false;  // both densities were -inf
};

/// min(1, exp(candidate - current)). The mixture kernel is symmetric in its
/// two arguments, so no proposal-density correction is needed.
inline Acceptance accept_prob(double current, double candidate) {
  constexpr double neg_inf = -std::numeric_limits<double>::infinity();
  if (candidate == neg_inf || std::isnan(candidate)) return {0.0, current == neg_inf};
  if (current == neg_inf) return {1.0, false};
  const double diff = candidate - current;
  return {diff >= 0.0 ? 1.0 : std::exp(diff), false};
}

/// What a target returns: log-posterior plus anything the caller wants to
/// keep alongside retained draws (trajectories, fitted observables...).
template <class Payload>
struct Evaluation {
  double log_posterior = -std::numeric_limits<double>::infinity();
  Payload payload{};
};

template <class Payload>
struct Draw {
  std::size_t iteration = 0;
  std::vector<double> theta;
  double log_posterior = 0.0;
  Payload payload{};
};

struct ChainDiagnostics {
  std::size_t iterations = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 0.0;
  std::size_t window = 0;
  std::vector<double> window_acceptance;
  std::vector<double> log_posterior_trace;  // current log-posterior after each iteration
  std::size_t numerical_failures = 0;       // candidates whose forward solve failed
  std::size_t invalid_chain_warnings = 0;
  std::size_t cholesky_fallbacks = 0;
  std::size_t adaptive_proposals = 0;
  Eigen::VectorXd final_mean;
  Eigen::MatrixXd final_cov;
  double runtime_seconds = 0.0;
  std::vector<std::string> warnings;  // first few only
};

template <class Payload>
struct ChainResult {
  std::vector<Draw<Payload>> samples;
  ChainDiagnostics diagnostics;
  ChainState final_state;
};

namespace detail {
template <class Target>
using payload_of =
    std::remove_cvref_t<decltype(std::declval<Target&>()(std::span<const double>{}).payload)>;

inline void add_warning(ChainDiagnostics& d, std::string msg) {
  if (d.warnings.size() < 20) d.warnings.push_back(std::move(msg));
}
}  // namespace detail

/// Runs J iterations of propose -> evaluate -> accept/reject -> adapt.
///
/// `target(theta)` returns an Evaluation; a NumericalError or
/// UndefinedObservable thrown while evaluating a candidate counts as a
/// rejection. Draws after burn-in are kept every `thinning` iterations; a
/// zero-iteration run returns the initial point only. `on_iteration` (may be
/// empty) is called after each iteration.
template <class Target>
ChainResult<detail::payload_of<Target>> run_chain(
    std::span<const double> init, Target&& target, const SamplerConfig& config,
    const std::function<void(const ChainState&)>& on_iteration = {}) {
  using Payload = detail::payload_of<Target>;
  const auto started = std::chrono::steady_clock::now();
  const std::size_t d = init.size();
  config.validate(d);

  ChainResult<Payload> result;
  ChainDiagnostics& diag = result.diagnostics;
  diag.window = config.window;

  Eigen::VectorXd theta0 = Eigen::Map<const Eigen::VectorXd>(init.data(),
                                                             static_cast<Eigen::Index>(d));
  Evaluation<Payload> current = target(init);
  if (!std::isfinite(current.log_posterior))
    throw InitializationError(
        "initial parameters have zero posterior density; re-draw the starting point from the "
        "priors");

  ChainState chain = ChainState::start(theta0, current.log_posterior, config.seed);
  auto to_std = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

  if (config.iterations == 0) {
    result.samples.push_back({0, to_std(chain.theta), chain.log_post, std::move(current.payload)});
    diag.final_mean = chain.mean;
    diag.final_cov = chain.cov;
    result.final_state = std::move(chain);
    return result;
  }

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  diag.log_posterior_trace.reserve(config.iterations);
  std::size_t window_accepted = 0, window_count = 0;

  for (std::size_t it = 1; it <= config.iterations; ++it) {
    Proposal prop = propose(chain, config);
    if (prop.cholesky_fallback) {
      ++diag.cholesky_fallbacks;
      detail::add_warning(diag, "iteration " + std::to_string(it) +
                                    ": covariance not factorisable, used fixed component");
    }
    if (prop.adaptive) ++diag.adaptive_proposals;

    Evaluation<Payload> cand;
    const std::span<const double> cand_span(prop.theta.data(), d);
    try {
      cand = target(cand_span);
    } catch (const NumericalError& e) {
      ++diag.numerical_failures;
      detail::add_warning(diag, "iteration " + std::to_string(it) + ": " + e.what());
      cand.log_posterior = -std::numeric_limits<double>::infinity();
    } catch (const UndefinedObservable& e) {
      ++diag.numerical_failures;
      detail::add_warning(diag, "iteration " + std::to_string(it) + ": " + e.what());
      cand.log_posterior = -std::numeric_limits<double>::infinity();
    }

    const Acceptance acc = accept_prob(chain.log_post, cand.log_posterior);
    if (acc.invalid_chain) {
      ++diag.invalid_chain_warnings;
      detail::add_warning(diag, "iteration " + std::to_string(it) +
                                    ": current and candidate both have zero density");
    }
    const double u = unif(chain.rng);
    if (u < acc.probability) {
      chain.theta = prop.theta;
      chain.log_post = cand.log_posterior;
      current.payload = std::move(cand.payload);
      ++diag.accepted;
      ++window_accepted;
    }
    if (config.adapt) {
      update_moments(chain, chain.theta);
    } else {
      ++chain.j;
    }

    diag.log_posterior_trace.push_back(chain.log_post);
    if (++window_count == config.window) {
      diag.window_acceptance.push_back(static_cast<double>(window_accepted) /
                                       static_cast<double>(window_count));
      window_accepted = window_count = 0;
    }
    if (it > config.burn_in && (it - config.burn_in) % config.thinning == 0)
      result.samples.push_back({it, to_std(chain.theta), chain.log_post, current.payload});
    if (on_iteration) on_iteration(chain);
  }
  if (window_count > 0)
    diag.window_acceptance.push_back(static_cast<double>(window_accepted) /
                                     static_cast<double>(window_count));

  diag.iterations = config.iterations;
  diag.acceptance_rate =
      static_cast<double>(diag.accepted) / static_cast<double>(config.iterations);
  diag.final_mean = chain.mean;
  diag.final_cov = chain.cov;
  diag.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  result.final_state = std::move(chain);
  return result;
}

}  // namespace hpvcal
