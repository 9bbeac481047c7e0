#pragma once

// Population stratification, state layout and the calibrated parameter set.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hpvcal/errors.hpp"

namespace hpvcal {

enum class Gender : int { male = 1, female = 2 };

enum class Compartment : int {
  susceptible = 0,      // S
  infected = 1,         // I
  warts = 2,            // G
  seropositive = 3,     // P
  seronegative = 4,     // N
};

inline constexpr int kGenders = 2;
inline constexpr int kActivityGroups = 4;
inline constexpr int kAgeGroups = 9;
inline constexpr int kCompartments = 5;
inline constexpr std::size_t kStrata = kGenders * kActivityGroups * kAgeGroups;  // 72
inline constexpr std::size_t kStateSize = kStrata * kCompartments;               // 360

/// Zero-based gender slot: male -> 0, female -> 1.
constexpr int gender_slot(Gender g) noexcept { return static_cast<int>(g) - 1; }
constexpr Gender gender_from_slot(int slot) noexcept { return static_cast<Gender>(slot + 1); }
constexpr Gender opposite(Gender g) noexcept {
  return g == Gender::male ? Gender::female : Gender::male;
}

inline std::string_view to_string(Gender g) { return g == Gender::male ? "male" : "female"; }

/// Zero-based ordinal of stratum (g, s, a), gender-major then activity then age.
constexpr std::size_t stratum_ordinal(int g0, int s0, int a0) noexcept {
  return static_cast<std::size_t>((g0 * kActivityGroups + s0) * kAgeGroups + a0);
}

inline std::string gender_name(Gender g) { return std::string(to_string(g)); }

/// (gender, activity-group, age-group) with 1-based activity and age.
struct StratumIndex {
  Gender gender = Gender::male;
  int activity = 1;  // 1..4
  int age = 1;       // 1..9

  constexpr bool valid() const noexcept {
    return (gender == Gender::male || gender == Gender::female) && activity >= 1 &&
           activity <= kActivityGroups && age >= 1 && age <= kAgeGroups;
  }

  constexpr std::size_t ordinal() const noexcept {
    return stratum_ordinal(gender_slot(gender), activity - 1, age - 1);
  }

  static constexpr StratumIndex from_ordinal(std::size_t k) noexcept {
    const int a0 = static_cast<int>(k % kAgeGroups);
    const int s0 = static_cast<int>((k / kAgeGroups) % kActivityGroups);
    const int g0 = static_cast<int>(k / (kAgeGroups * kActivityGroups));
    return {gender_from_slot(g0), s0 + 1, a0 + 1};
  }

  friend constexpr bool operator==(const StratumIndex&, const StratumIndex&) = default;
};

/// Every stratum in ordinal order.
inline std::array<StratumIndex, kStrata> all_strata() {
  std::array<StratumIndex, kStrata> out{};
  for (std::size_t k = 0; k < kStrata; ++k) out[k] = StratumIndex::from_ordinal(k);
  return out;
}

/// Per-stratum scalar (populations, rates, ...), indexed by stratum ordinal.
using StratumArray = std::array<double, kStrata>;

struct CompartmentCounts {
  double S = 0, I = 0, G = 0, P = 0, N = 0;
  double total() const noexcept { return S + I + G + P + N; }
  CompartmentCounts& operator+=(const CompartmentCounts& o) noexcept {
    S += o.S; I += o.I; G += o.G; P += o.P; N += o.N;
    return *this;
  }
};

/// S, I, G, P, N counts for every stratum.
///
/// Flat layout (also used by CSV exports): index = 5 * ordinal + compartment,
/// so S(male, 1, 1) is element 0 and N(female, 4, 9) is element 359.
class StateVector {
 public:
  StateVector() { values_.fill(0.0); }

  double& operator()(StratumIndex k, Compartment c) { return values_[offset(k, c)]; }
  double operator()(StratumIndex k, Compartment c) const { return values_[offset(k, c)]; }

  CompartmentCounts stratum(StratumIndex k) const { return stratum(k.ordinal()); }
  CompartmentCounts stratum(std::size_t ordinal) const {
    const double* p = values_.data() + kCompartments * ordinal;
    return {p[0], p[1], p[2], p[3], p[4]};
  }

  double total() const noexcept {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum;
  }

  /// Per-stratum population S+I+G+P+N.
  StratumArray stratum_totals() const noexcept {
    StratumArray out{};
    for (std::size_t k = 0; k < kStrata; ++k) {
      const double* p = values_.data() + kCompartments * k;
      out[k] = p[0] + p[1] + p[2] + p[3] + p[4];
    }
    return out;
  }

  std::span<double, kStateSize> flat() noexcept { return values_; }
  std::span<const double, kStateSize> flat() const noexcept { return values_; }

  bool non_negative() const noexcept {
    for (double v : values_)
      if (!(v >= 0.0)) return false;
    return true;
  }

  static constexpr std::size_t offset(StratumIndex k, Compartment c) noexcept {
    return kCompartments * k.ordinal() + static_cast<std::size_t>(c);
  }

  friend bool operator==(const StateVector&, const StateVector&) = default;

 private:
  std::array<double, kStateSize> values_;
};

inline std::vector<double> flatten(const StateVector& state) {
  const auto flat = state.flat();
  return {flat.begin(), flat.end()};
}

inline StateVector unflatten(std::span<const double> values) {
  if (values.size() != kStateSize)
    throw ShapeError("unflatten: expected " + std::to_string(kStateSize) + " values, got " +
                     std::to_string(values.size()));
  StateVector state;
  std::copy(values.begin(), values.end(), state.flat().begin());
  return state;
}

template <class T>
struct PerGender {
  T male{};
  T female{};

  T& operator[](Gender g) noexcept { return g == Gender::male ? male : female; }
  const T& operator[](Gender g) const noexcept { return g == Gender::male ? male : female; }
  T& slot(int g0) noexcept { return g0 == 0 ? male : female; }
  const T& slot(int g0) const noexcept { return g0 == 0 ? male : female; }

  friend bool operator==(const PerGender&, const PerGender&) = default;
};

/// Duration of immunity after recovery: a number of years, or lifelong.
class ImmunityDuration {
 public:
  ImmunityDuration() = default;  // lifelong
  static ImmunityDuration lifelong() noexcept { return ImmunityDuration{}; }
  static ImmunityDuration years(double y) noexcept { return ImmunityDuration{y}; }

  bool is_lifelong() const noexcept { return !years_.has_value(); }
  double value() const { return years_.value(); }

  friend bool operator==(const ImmunityDuration&, const ImmunityDuration&) = default;

 private:
  explicit ImmunityDuration(double y) : years_(y) {}
  std::optional<double> years_;
};

/// The calibrated parameters. Durations are in years.
struct ModelParams {
  PerGender<double> transmission_prob{0.9, 0.9};        // TR
  PerGender<double> warts_incubation{0.95, 0.85};       // WIP
  PerGender<double> warts_treatment{0.15, 0.3};         // DWT
  PerGender<double> asymptomatic_duration{3.2, 3.4};    // DAI
  PerGender<double> seroconversion_prob{0.5, 0.6};      // PSC
  PerGender<ImmunityDuration> immunity{ImmunityDuration::lifelong(),
                                       ImmunityDuration::lifelong()};  // DI
  double incidence_variance = 5.0;  // sigma
  double sero_scale = 2.0;          // A_Y
  double eps_age = 0.5;             // EPSa
  double eps_activity = 0.5;        // EPSr

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Returns an empty string when every parameter is inside its domain,
/// otherwise a description of the first offending field.
inline std::string parameter_violation(const ModelParams& p) {
  auto prob = [](double x) { return x >= 0.0 && x <= 1.0; };
  auto positive = [](double x) { return x > 0.0 && std::isfinite(x); };
  for (Gender g : {Gender::male, Gender::female}) {
    const std::string sfx = g == Gender::male ? "m" : "f";
    if (!prob(p.transmission_prob[g])) return "TR" + sfx + " must lie in [0,1]";
    if (!positive(p.warts_incubation[g])) return "WIP" + sfx + " must be positive";
    if (!positive(p.warts_treatment[g])) return "DWT" + sfx + " must be positive";
    if (!positive(p.asymptomatic_duration[g])) return "DAI" + sfx + " must be positive";
    if (!prob(p.seroconversion_prob[g])) return "PSC" + sfx + " must lie in [0,1]";
    if (!p.immunity[g].is_lifelong() && !positive(p.immunity[g].value()))
      return "DI" + sfx + " must be positive or lifelong";
  }
  if (!positive(p.incidence_variance)) return "sigma must be positive";
  if (!positive(p.sero_scale)) return "A_Y must be positive";
  if (!prob(p.eps_age)) return "EPSa must lie in [0,1]";
  if (!prob(p.eps_activity)) return "EPSr must lie in [0,1]";
  return {};
}

inline void validate(const ModelParams& p) {
  if (auto msg = parameter_violation(p); !msg.empty()) throw InvalidParameter(msg);
}

/// Rate coefficients of the ODE system, per gender.
struct RateCoefficients {
  PerGender<double> beta;     // transmission probability per partnership
  PerGender<double> gamma;    // warts development rate, 1/WIP
  PerGender<double> r;        // treated recovery rate, 1/DWT
  PerGender<double> rho_rec;  // untreated recovery rate, 1/DAI
  PerGender<double> nu;       // seroconversion probability
  PerGender<double> zeta;     // immunity loss rate, 1/DI (0 when lifelong)
};

inline RateCoefficients derive_rates(const ModelParams& p) {
  auto reciprocal = [](double years, const char* name) {
    if (!(years > 0.0) || !std::isfinite(years))
      throw InvalidParameter(std::string(name) + " must be a positive duration");
    return 1.0 / years;
  };
  RateCoefficients out;
  for (Gender g : {Gender::male, Gender::female}) {
    out.beta[g] = p.transmission_prob[g];
    out.gamma[g] = reciprocal(p.warts_incubation[g], "WIP");
    out.r[g] = reciprocal(p.warts_treatment[g], "DWT");
    out.rho_rec[g] = reciprocal(p.asymptomatic_duration[g], "DAI");
    out.nu[g] = p.seroconversion_prob[g];
    out.zeta[g] = p.immunity[g].is_lifelong() ? 0.0 : reciprocal(p.immunity[g].value(), "DI");
  }
  return out;
}

/// Maps ModelParams to and from the flat vector explored by the sampler.
///
/// With lifelong immunity the vector has 14 entries
///   TRm TRf WIPm WIPf DWTm DWTf DAIm DAIf PSCm PSCf sigma A_Y EPSa EPSr
/// and with free immunity DIm DIf are inserted after PSCf (16 entries).
class ParameterLayout {
 public:
  explicit ParameterLayout(bool free_immunity = false) : free_immunity_(free_immunity) {}

  bool free_immunity() const noexcept { return free_immunity_; }
  std::size_t size() const noexcept { return free_immunity_ ? 16 : 14; }

  std::vector<std::string> names() const {
    std::vector<std::string> out{"TRm", "TRf", "WIPm", "WIPf", "DWTm", "DWTf",
                                 "DAIm", "DAIf", "PSCm", "PSCf"};
    if (free_immunity_) {
      out.emplace_back("DIm");
      out.emplace_back("DIf");
    }
    for (const char* n : {"sigma", "A_Y", "EPSa", "EPSr"}) out.emplace_back(n);
    return out;
  }

  std::vector<double> to_vector(const ModelParams& p) const {
    std::vector<double> v{p.transmission_prob.male,      p.transmission_prob.female,
                          p.warts_incubation.male,       p.warts_incubation.female,
                          p.warts_treatment.male,        p.warts_treatment.female,
                          p.asymptomatic_duration.male,  p.asymptomatic_duration.female,
                          p.seroconversion_prob.male,    p.seroconversion_prob.female};
    if (free_immunity_) {
      for (Gender g : {Gender::male, Gender::female}) {
        if (p.immunity[g].is_lifelong())
          throw InvalidParameter("free-immunity layout needs finite DIm/DIf");
        v.push_back(p.immunity[g].value());
      }
    }
    v.insert(v.end(), {p.incidence_variance, p.sero_scale, p.eps_age, p.eps_activity});
    return v;
  }

  /// No domain checks; out-of-support vectors are the prior's business.
  ModelParams from_vector(std::span<const double> v) const {
    if (v.size() != size())
      throw ShapeError("parameter vector: expected " + std::to_string(size()) + " values, got " +
                       std::to_string(v.size()));
    ModelParams p;
    std::size_t i = 0;
    auto pair = [&](PerGender<double>& field) {
      field.male = v[i++];
      field.female = v[i++];
    };
    pair(p.transmission_prob);
    pair(p.warts_incubation);
    pair(p.warts_treatment);
    pair(p.asymptomatic_duration);
    pair(p.seroconversion_prob);
    if (free_immunity_) {
      p.immunity.male = ImmunityDuration::years(v[i++]);
      p.immunity.female = ImmunityDuration::years(v[i++]);
    } else {
      p.immunity = {ImmunityDuration::lifelong(), ImmunityDuration::lifelong()};
    }
    p.incidence_variance = v[i++];
    p.sero_scale = v[i++];
    p.eps_age = v[i++];
    p.eps_activity = v[i++];
    return p;
  }

 private:
  bool free_immunity_;
};

}  // namespace hpvcal
