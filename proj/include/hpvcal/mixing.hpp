#pragma once

// Sexual mixing matrix: relative partner acquisition rates, assortative /
// proportionate blending, age-preference adjustment and supply-demand
// balancing between the two genders.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "hpvcal/errors.hpp"
#include "hpvcal/strata.hpp"

namespace hpvcal {

/// Relative partner acquisition rates and the overall rate they are scaled to.
struct BehaviorTables {
  std::array<double, kAgeGroups> age_rates{};
  std::array<double, kActivityGroups> activity_rates{};
  std::array<double, kActivityGroups> activity_proportions{};
  double mean_partner_rate = 0.0;  // new partners / person / yr

  /// Australian survey values for ages 15-59 in five-year bands and four
  /// activity groups; overall rate 0.437.
  static BehaviorTables defaults() {
    return {{5.28, 6.06, 4.37, 2.57, 1.61, 1.43, 1.00, 1.00, 1.00},
            {1.00, 4.76, 24.83, 105.67},
            {0.60, 0.27, 0.11, 0.02},
            0.437};
  }

  void validate() const {
    for (double r : age_rates)
      if (!(r > 0.0)) throw InvalidParameter("age relative rates must be positive");
    for (double r : activity_rates)
      if (!(r > 0.0)) throw InvalidParameter("activity relative rates must be positive");
    double sum = 0.0;
    for (double p : activity_proportions) {
      if (!(p >= 0.0)) throw InvalidParameter("activity proportions must be non-negative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw InvalidParameter("activity proportions must sum to 1 (got " + std::to_string(sum) +
                             ")");
    if (!(mean_partner_rate > 0.0)) throw InvalidParameter("mean partner rate must be positive");
  }
};

struct MixingConfig {
  double eps_age = 0.5;             // 0 = fully assortative by age, 1 = proportionate
  double eps_activity = 0.5;        // same, by activity group
  double age_preference = 0.3;      // Gamma in [0,1)
  double supply_compromise = 0.5;   // theta1 in [0,1]; 0 leaves male rates untouched

  void validate() const {
    auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!unit(eps_age) || !unit(eps_activity))
      throw InvalidParameter("EPSa and EPSr must lie in [0,1]");
    if (!(age_preference >= 0.0 && age_preference < 1.0))
      throw InvalidParameter("age preference Gamma must lie in [0,1)");
    if (!unit(supply_compromise)) throw InvalidParameter("theta1 must lie in [0,1]");
  }
};

/// Dense (gender, s, s', a, a') tensor; used for both the conditional
/// partner-choice probabilities and the final rate products.
class MixingTensor {
 public:
  static constexpr std::size_t kSize =
      kGenders * kActivityGroups * kActivityGroups * kAgeGroups * kAgeGroups;  // 2592

  MixingTensor() { values_.fill(0.0); }

  /// Zero-based indices; g0 is the gender of the individual choosing.
  static constexpr std::size_t index(int g0, int s, int s2, int a, int a2) noexcept {
    return static_cast<std::size_t>((((g0 * kActivityGroups + s) * kActivityGroups + s2) *
                                         kAgeGroups + a) * kAgeGroups + a2);
  }

  double& operator()(int g0, int s, int s2, int a, int a2) noexcept {
    return values_[index(g0, s, s2, a, a2)];
  }
  double operator()(int g0, int s, int s2, int a, int a2) const noexcept {
    return values_[index(g0, s, s2, a, a2)];
  }

  /// Sum over (s', a') for the row of chooser (g0, s, a).
  double row_sum(int g0, int s, int a) const noexcept {
    double sum = 0.0;
    for (int s2 = 0; s2 < kActivityGroups; ++s2)
      for (int a2 = 0; a2 < kAgeGroups; ++a2) sum += (*this)(g0, s, s2, a, a2);
    return sum;
  }

  const std::array<double, kSize>& values() const noexcept { return values_; }

 private:
  std::array<double, kSize> values_;
};

/// Balanced partner acquisition rates c*rho (new partners / person / yr).
struct MixingMatrix {
  MixingTensor entries;     // m[g][s][s'][a][a']
  StratumArray base_rates;  // c_{g,s,a} before balancing
};

/// r_{g,s,a} = r_age[a] * r_act[s], identical for both genders.
inline StratumArray relative_rates(const BehaviorTables& tables) {
  StratumArray out{};
  for (int g = 0; g < kGenders; ++g)
    for (int s = 0; s < kActivityGroups; ++s)
      for (int a = 0; a < kAgeGroups; ++a)
        out[stratum_ordinal(g, s, a)] = tables.age_rates[a] * tables.activity_rates[s];
  return out;
}

/// Lowest per-capita partner acquisition rate of each gender,
/// c_min = c_bar * N_g / sum_{s,a} r_{g,s,a} N_{g,s,a}.
inline PerGender<double> min_partner_rate(const BehaviorTables& tables,
                                          const StratumArray& populations) {
  const StratumArray rel = relative_rates(tables);
  PerGender<double> out;
  for (int g = 0; g < kGenders; ++g) {
    double pop = 0.0, weighted = 0.0;
    for (int s = 0; s < kActivityGroups; ++s)
      for (int a = 0; a < kAgeGroups; ++a) {
        const std::size_t k = stratum_ordinal(g, s, a);
        pop += populations[k];
        weighted += rel[k] * populations[k];
      }
    if (!(weighted > 0.0))
      throw DegenerateInput("min_partner_rate: zero weighted population for " +
                            std::string(to_string(gender_from_slot(g))));
    out.slot(g) = tables.mean_partner_rate * pop / weighted;
  }
  return out;
}

/// Absolute per-stratum rates c_{g,s,a} = c_min(g) * r_{g,s,a}.
inline StratumArray partner_rates(const BehaviorTables& tables, const StratumArray& populations) {
  const StratumArray rel = relative_rates(tables);
  const PerGender<double> cmin = min_partner_rate(tables, populations);
  StratumArray out{};
  for (std::size_t k = 0; k < kStrata; ++k) out[k] = cmin.slot(k < kStrata / 2 ? 0 : 1) * rel[k];
  return out;
}

/// Blend of assortative (delta) and proportionate mixing, separately by age
/// and by activity; rho is the product of the two factors, so every row sums
/// to one. If the opposite gender generates no partnerships at all the
/// proportionate shares are taken as zero.
inline MixingTensor mixing_probabilities(const MixingConfig& config, const StratumArray& rates,
                                         const StratumArray& populations) {
  MixingTensor rho;
  for (int g = 0; g < kGenders; ++g) {
    const int other = 1 - g;
    // Partnerships generated by the opposite gender, by age and by activity.
    std::array<double, kAgeGroups> by_age{};
    std::array<double, kActivityGroups> by_activity{};
    double total = 0.0;
    for (int s = 0; s < kActivityGroups; ++s)
      for (int a = 0; a < kAgeGroups; ++a) {
        const std::size_t k = stratum_ordinal(other, s, a);
        const double flow = rates[k] * populations[k];
        by_age[a] += flow;
        by_activity[s] += flow;
        total += flow;
      }
    const double inv_total = total > 0.0 ? 1.0 / total : 0.0;

    std::array<std::array<double, kAgeGroups>, kAgeGroups> age_factor{};
    for (int a = 0; a < kAgeGroups; ++a)
      for (int a2 = 0; a2 < kAgeGroups; ++a2)
        age_factor[a][a2] = (1.0 - config.eps_age) * (a == a2 ? 1.0 : 0.0) +
                            config.eps_age * by_age[a2] * inv_total;
    std::array<std::array<double, kActivityGroups>, kActivityGroups> act_factor{};
    for (int s = 0; s < kActivityGroups; ++s)
      for (int s2 = 0; s2 < kActivityGroups; ++s2)
        act_factor[s][s2] = (1.0 - config.eps_activity) * (s == s2 ? 1.0 : 0.0) +
                            config.eps_activity * by_activity[s2] * inv_total;

    for (int s = 0; s < kActivityGroups; ++s)
      for (int s2 = 0; s2 < kActivityGroups; ++s2)
        for (int a = 0; a < kAgeGroups; ++a)
          for (int a2 = 0; a2 < kAgeGroups; ++a2)
            rho(g, s, s2, a, a2) = age_factor[a][a2] * act_factor[s][s2];
  }
  return rho;
}

/// Shifts same-age partnerships towards older-male / younger-female pairs.
///
/// Males in age-group a (3 <= a <= 7) move a fraction Gamma of their
/// same-age mass to females in group a-2; females in age-group a
/// (1 <= a <= 5) move Gamma of their same-age mass to males in group a+2.
/// Each reduction is paired with its compensating increase, so row sums are
/// unchanged. Ages are 1-based in this description.
inline MixingTensor age_adjust(const MixingTensor& rho, double gamma) {
  MixingTensor out = rho;
  if (gamma == 0.0) return out;
  for (int s = 0; s < kActivityGroups; ++s)
    for (int s2 = 0; s2 < kActivityGroups; ++s2) {
      // males (slot 0): zero-based a in [2, 6], partner a - 2 in [0, 4]
      for (int a = 2; a <= 6; ++a) {
        const double moved = gamma * rho(0, s, s2, a, a);
        out(0, s, s2, a, a) -= moved;
        out(0, s, s2, a, a - 2) += moved;
      }
      // females (slot 1): zero-based a in [0, 4], partner a + 2 in [2, 6]
      for (int a = 0; a <= 4; ++a) {
        const double moved = gamma * rho(1, s, s2, a, a);
        out(1, s, s2, a, a) -= moved;
        out(1, s, s2, a, a + 2) += moved;
      }
    }
  return out;
}

/// Reconciles the partnerships counted from each side.
///
/// For each male cell (s,a) and female cell (s',a') the imbalance is
/// B = (c' rho' N') / (c rho N); male rates are scaled by B^theta1 and female
/// rates by B^(theta1-1), so both sides then count the same number of
/// partnerships. Pairs where either side has zero flow are set to zero.
inline MixingMatrix balance(const StratumArray& rates, const MixingTensor& rho,
                            const StratumArray& populations, double theta1) {
  MixingMatrix out;
  out.base_rates = rates;
  MixingTensor& m = out.entries;
  const bool half = theta1 == 0.5;
  for (int s = 0; s < kActivityGroups; ++s)
    for (int a = 0; a < kAgeGroups; ++a) {
      const std::size_t km = stratum_ordinal(0, s, a);
      const double male_rate = rates[km];
      const double male_pop = populations[km];
      for (int s2 = 0; s2 < kActivityGroups; ++s2)
        for (int a2 = 0; a2 < kAgeGroups; ++a2) {
          const std::size_t kf = stratum_ordinal(1, s2, a2);
          const double male_prod = male_rate * rho(0, s, s2, a, a2);
          const double female_prod = rates[kf] * rho(1, s2, s, a2, a);
          const double male_flow = male_prod * male_pop;
          const double female_flow = female_prod * populations[kf];
          if (!(male_flow > 0.0) || !(female_flow > 0.0)) {
            m(0, s, s2, a, a2) = 0.0;
            m(1, s2, s, a2, a) = 0.0;
            continue;
          }
          const double imbalance = female_flow / male_flow;
          const double up = half ? std::sqrt(imbalance) : std::pow(imbalance, theta1);
          m(0, s, s2, a, a2) = male_prod * up;
          m(1, s2, s, a2, a) = female_prod * up / imbalance;
        }
    }
  return out;
}

/// Full pipeline: rates from the behaviour tables, blended probabilities,
/// age adjustment, balancing.
inline MixingMatrix build_mixing_matrix(const BehaviorTables& tables, const MixingConfig& config,
                                        const StratumArray& populations) {
  const StratumArray rates = partner_rates(tables, populations);
  const MixingTensor rho = age_adjust(mixing_probabilities(config, rates, populations),
                                      config.age_preference);
  return balance(rates, rho, populations, config.supply_compromise);
}

}  // namespace hpvcal
