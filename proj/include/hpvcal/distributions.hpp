#pragma once

// Log-densities for the prior families and the observation model.
// Gamma and inverse-gamma use the shape/scale parameterisation.

#include <cmath>
#include <limits>
#include <numbers>

namespace hpvcal::dist {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Normal log-density parameterised by its variance.
inline double normal_log_pdf(double x, double mean, double variance) {
  if (!(variance > 0.0)) return kNegInf;
  const double z = x - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance) - 0.5 * z * z / variance;
}

inline double uniform_log_pdf(double x, double lo, double hi) {
  if (!(hi > lo) || x < lo || x > hi) return kNegInf;
  return -std::log(hi - lo);
}

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// Beta(a, b) on the open interval (0, 1).
inline double beta_log_pdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !(x > 0.0) || !(x < 1.0)) return kNegInf;
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

inline double gamma_log_pdf(double x, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0) || !(x > 0.0)) return kNegInf;
  return (shape - 1.0) * std::log(x) - x / scale - std::lgamma(shape) -
         shape * std::log(scale);
}

/// Inverse gamma: density proportional to x^(-shape-1) exp(-scale/x).
inline double inv_gamma_log_pdf(double x, double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0) || !(x > 0.0)) return kNegInf;
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

}  // namespace hpvcal::dist
