#pragma once

// CSV and JSON formats read and written by the command-line tool.
// Numbers are written in the shortest form that parses back to the same
// double, so files round-trip exactly.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "hpvcal/calibration.hpp"
#include "hpvcal/errors.hpp"
#include "hpvcal/observation.hpp"
#include "hpvcal/strata.hpp"
#include "hpvcal/vaccination.hpp"

namespace hpvcal::io {

using Json = nlohmann::ordered_json;

inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_number(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(path + ": cannot write file");
  out << contents;
  if (!out) throw ConfigError(path + ": write failed");
}

/// Comment-aware CSV table. Lines starting with '#' are kept with their
/// position so that a parsed file serialises back byte for byte.
struct CsvTable {
  struct Comment {
    std::size_t before_row;  // index of the data row that follows it
    bool before_header;
    std::string text;        // full line, including '#'
  };
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row
  std::vector<Comment> comments;
};

inline CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == text.npos ? text.npos : nl - pos);
    pos = nl == text.npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty() && line.front() == '#') {
      t.comments.push_back({t.rows.size(), t.header.empty(), std::string(line)});
      continue;
    }
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw DataError(source + ": row " + std::to_string(line_no) + ": expected " +
                      std::to_string(t.header.size()) + " columns, found " +
                      std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw DataError(source + ": missing header line");
  return t;
}

inline std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

inline std::string serialize_csv(const CsvTable& t) {
  std::string out;
  std::size_t c = 0;
  while (c < t.comments.size() && t.comments[c].before_header) out += t.comments[c++].text + "\n";
  out += join(t.header) + "\n";
  for (std::size_t r = 0; r <= t.rows.size(); ++r) {
    while (c < t.comments.size() && t.comments[c].before_row == r) out += t.comments[c++].text + "\n";
    if (r < t.rows.size()) out += join(t.rows[r]) + "\n";
  }
  return out;
}

/// Column lookup with errors that name the file, row and column.
class RowReader {
 public:
  RowReader(const CsvTable& table, std::string source) : table_(table), source_(std::move(source)) {
    for (std::size_t i = 0; i < table.header.size(); ++i) index_[table.header[i]] = i;
  }

  bool has(const std::string& column) const { return index_.count(column) > 0; }

  void require(const std::vector<std::string>& columns) const {
    for (const auto& c : columns)
      if (!has(c)) throw DataError(source_ + ": missing column '" + c + "'");
  }

  void allow_only(const std::vector<std::string>& columns) const {
    for (const auto& h : table_.header)
      if (std::find(columns.begin(), columns.end(), h) == columns.end())
        throw DataError(source_ + ": unexpected column '" + h + "'");
  }

  const std::string& text(std::size_t row, const std::string& column) const {
    return table_.rows[row][index_.at(column)];
  }

  [[noreturn]] void fail(std::size_t row, const std::string& column, const std::string& why) const {
    throw DataError(source_ + ": row " + std::to_string(table_.line_numbers[row]) + ", column '" +
                    column + "': " + why);
  }

  double number(std::size_t row, const std::string& column) const {
    const auto& s = text(row, column);
    auto v = parse_number(s);
    if (!v || !std::isfinite(*v)) fail(row, column, "not a finite number: '" + s + "'");
    return *v;
  }

  std::optional<double> optional_number(std::size_t row, const std::string& column) const {
    if (!has(column) || text(row, column).empty()) return std::nullopt;
    return number(row, column);
  }

  int integer(std::size_t row, const std::string& column, int lo, int hi) const {
    const double v = number(row, column);
    if (v != std::floor(v) || v < lo || v > hi)
      fail(row, column, "expected an integer in " + std::to_string(lo) + ".." + std::to_string(hi));
    return static_cast<int>(v);
  }

 private:
  const CsvTable& table_;
  std::string source_;
  std::map<std::string, std::size_t> index_;
};

inline Gender parse_gender(const std::string& s) {
  if (s == "male" || s == "1") return Gender::male;
  if (s == "female" || s == "2") return Gender::female;
  throw DataError("gender '" + s + "'");
}

inline ObservationKind parse_kind(const std::string& s) {
  if (s == "incidence") return ObservationKind::incidence;
  if (s == "seroprevalence") return ObservationKind::seroprevalence;
  throw DataError("kind '" + s + "'");
}

// ---------------------------------------------------------------- observations

/// Observation file: time,gender,age_group[,activity],kind,value,ci_low,ci_high.
/// Seroprevalence values are proportions; incidence is per 1000 per year.
struct ObservationFile {
  std::vector<Observation> observations;
  CsvTable table;  // source layout, used for exact re-serialisation
};

inline const std::vector<std::string>& observation_columns() {
  static const std::vector<std::string> cols{"time", "gender", "age_group", "kind",
                                             "value", "ci_low", "ci_high"};
  return cols;
}

inline ObservationFile parse_observations(std::string_view text, const std::string& source) {
  ObservationFile f;
  f.table = parse_csv(text, source);
  RowReader r(f.table, source);
  r.require({"time", "gender", "age_group", "kind", "value"});
  auto allowed = observation_columns();
  allowed.push_back("activity");
  r.allow_only(allowed);
  for (std::size_t i = 0; i < f.table.rows.size(); ++i) {
    Observation o;
    o.time = r.number(i, "time");
    try {
      o.gender = parse_gender(r.text(i, "gender"));
    } catch (const DataError&) {
      r.fail(i, "gender", "expected male or female, got '" + r.text(i, "gender") + "'");
    }
    o.age = r.integer(i, "age_group", 1, kAgeGroups);
    if (r.has("activity") && !r.text(i, "activity").empty())
      o.activity = r.integer(i, "activity", 1, kActivityGroups);
    try {
      o.kind = parse_kind(r.text(i, "kind"));
    } catch (const DataError&) {
      r.fail(i, "kind", "expected incidence or seroprevalence, got '" + r.text(i, "kind") + "'");
    }
    o.value = r.number(i, "value");
    o.ci_low = r.optional_number(i, "ci_low");
    o.ci_high = r.optional_number(i, "ci_high");
    if (auto v = observation_violation(o); !v.empty()) r.fail(i, "value", v);
    f.observations.push_back(o);
  }
  return f;
}

inline ObservationFile read_observations(const std::string& path) {
  return parse_observations(read_file(path), path);
}

/// Canonical CSV for a set of observations, with optional leading comments.
inline std::string serialize_observations(const std::vector<Observation>& obs,
                                          const std::vector<std::string>& comments = {}) {
  bool any_activity = false;
  for (const auto& o : obs) any_activity |= o.activity.has_value();
  CsvTable t;
  for (const auto& c : comments) t.comments.push_back({0, true, "# " + c});
  t.header = any_activity ? std::vector<std::string>{"time", "gender", "age_group", "activity",
                                                     "kind", "value", "ci_low", "ci_high"}
                          : observation_columns();
  for (const auto& o : obs) {
    std::vector<std::string> row{format_number(o.time), gender_name(o.gender),
                                 std::to_string(o.age)};
    if (any_activity) row.push_back(o.activity ? std::to_string(*o.activity) : "");
    row.push_back(to_string(o.kind));
    row.push_back(format_number(o.value));
    row.push_back(o.ci_low ? format_number(*o.ci_low) : "");
    row.push_back(o.ci_high ? format_number(*o.ci_high) : "");
    t.rows.push_back(std::move(row));
  }
  return serialize_csv(t);
}

/// Re-serialises a parsed file from its observations, keeping the source
/// comments and column order.
inline std::string serialize_observations(const ObservationFile& f) {
  CsvTable t = f.table;
  RowReader r(t, "");
  const bool has_activity = r.has("activity");
  for (std::size_t i = 0; i < f.observations.size(); ++i) {
    const Observation& o = f.observations[i];
    std::map<std::string, std::string> cell{
        {"time", format_number(o.time)},
        {"gender", gender_name(o.gender)},
        {"age_group", std::to_string(o.age)},
        {"kind", to_string(o.kind)},
        {"value", format_number(o.value)},
        {"ci_low", o.ci_low ? format_number(*o.ci_low) : ""},
        {"ci_high", o.ci_high ? format_number(*o.ci_high) : ""}};
    if (has_activity) cell["activity"] = o.activity ? std::to_string(*o.activity) : "";
    for (std::size_t c = 0; c < t.header.size(); ++c) t.rows[i][c] = cell.at(t.header[c]);
  }
  return serialize_csv(t);
}

// ---------------------------------------------------------------- samples

struct SampleTable {
  std::vector<std::string> names;  // parameter columns
  std::vector<std::vector<double>> theta;
  std::vector<double> log_posterior;
  std::vector<std::size_t> iteration;
  std::vector<std::size_t> chain;
};

inline std::string serialize_samples(const SampleTable& s) {
  const bool with_chain = !s.chain.empty();
  std::string out = join(s.names) + ",log_posterior,iteration" + (with_chain ? ",chain" : "") + "\n";
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    for (double v : s.theta[i]) out += format_number(v) + ",";
    out += format_number(s.log_posterior[i]) + "," + std::to_string(s.iteration[i]);
    if (with_chain) out += "," + std::to_string(s.chain[i]);
    out += "\n";
  }
  return out;
}

/// Parses a samples file and checks its parameter columns against `layout`.
inline SampleTable parse_samples(std::string_view text, const std::string& source,
                                 const ParameterLayout& layout) {
  const CsvTable t = parse_csv(text, source);
  const auto names = layout.names();
  std::vector<std::string> expected = names;
  expected.push_back("log_posterior");
  expected.push_back("iteration");
  const bool with_chain = t.header.size() == expected.size() + 1 && t.header.back() == "chain";
  if (with_chain) expected.push_back("chain");
  for (std::size_t i = 0; i < std::max(expected.size(), t.header.size()); ++i) {
    if (i >= t.header.size())
      throw DataError(source + ": missing column '" + expected[i] + "'");
    if (i >= expected.size() || t.header[i] != expected[i])
      throw DataError(source + ": unexpected column '" + t.header[i] + "' at position " +
                      std::to_string(i + 1) +
                      (i < expected.size() ? " (expected '" + expected[i] + "')" : ""));
  }
  RowReader r(t, source);
  SampleTable s;
  s.names = names;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    std::vector<double> theta;
    for (const auto& n : names) theta.push_back(r.number(i, n));
    s.theta.push_back(std::move(theta));
    const auto lp = parse_number(r.text(i, "log_posterior"));
    if (!lp) r.fail(i, "log_posterior", "not a number");
    s.log_posterior.push_back(*lp);
    s.iteration.push_back(static_cast<std::size_t>(r.integer(i, "iteration", 0, 2'000'000'000)));
    if (with_chain) s.chain.push_back(static_cast<std::size_t>(r.integer(i, "chain", 0, 1'000'000)));
  }
  return s;
}

// ---------------------------------------------------------------- outputs

inline std::string serialize_trajectory(const Trajectory& traj) {
  std::string out = "time,gender,activity,age_group,S,I,G,P,N\n";
  for (std::size_t i = 0; i < traj.times.size(); ++i)
    for (const StratumIndex& k : all_strata()) {
      const CompartmentCounts c = traj.states[i].stratum(k);
      out += format_number(traj.times[i]) + "," + gender_name(k.gender) + "," +
             std::to_string(k.activity) + "," + std::to_string(k.age) + "," +
             format_number(c.S) + "," + format_number(c.I) + "," + format_number(c.G) + "," +
             format_number(c.P) + "," + format_number(c.N) + "\n";
    }
  return out;
}

inline std::string serialize_predictive(const PredictiveResult& p) {
  std::string out = "time,gender,age_group,observable,mean,q2.5,q97.5\n";
  for (std::size_t t = 0; t < p.times.size(); ++t)
    for (const auto& s : p.series)
      out += format_number(p.times[t]) + "," + gender_name(s.gender) + "," +
             (s.age == 0 ? std::string("all") : std::to_string(s.age)) + "," +
             to_string(s.kind) + "," + format_number(s.mean[t]) + "," +
             format_number(s.lower[t]) + "," + format_number(s.upper[t]) + "\n";
  return out;
}

/// One row of the calibration-fit table.
struct FitRow {
  Gender gender;
  int age;
  ObservationKind kind;
  std::optional<double> data, ci_low, ci_high;
  double mean, lower, upper;  // posterior mean and central 95% band

  std::optional<bool> inside_ci() const {
    if (!ci_low || !ci_high) return std::nullopt;
    return mean >= *ci_low && mean <= *ci_high;
  }
};

/// Posterior summaries of the fitted observables at T against the data
/// observed at T (one row per gender, age group and kind).
template <class Draws>
std::vector<FitRow> calibration_fit(const Draws& samples, const std::vector<Observation>& data,
                                    double T) {
  if (samples.empty()) throw ContractViolation("calibration_fit: no retained draws");
  std::vector<FitRow> rows;
  for (ObservationKind kind : {ObservationKind::incidence, ObservationKind::seroprevalence})
    for (Gender g : {Gender::male, Gender::female})
      for (int a = 1; a <= kAgeGroups; ++a) {
        FitRow row{g, a, kind, {}, {}, {}, 0.0, 0.0, 0.0};
        for (const auto& o : data)
          if (o.kind == kind && o.gender == g && o.age == a && !o.activity &&
              std::abs(o.time - T) < 1e-9) {
            row.data = o.value;
            row.ci_low = o.ci_low;
            row.ci_high = o.ci_high;
          }
        std::vector<double> v;
        for (const auto& d : samples) {
          const auto& fit = d.payload.fit;
          v.push_back(kind == ObservationKind::incidence ? fit.incidence[gender_slot(g)][a - 1]
                                                         : fit.seroprevalence[gender_slot(g)][a - 1]);
        }
        double sum = 0.0;
        for (double x : v) sum += x;
        row.mean = sum / static_cast<double>(v.size());
        row.lower = quantile(v, 0.025);
        row.upper = quantile(v, 0.975);
        rows.push_back(row);
      }
  return rows;
}

inline std::string serialize_fit(const std::vector<FitRow>& rows) {
  auto opt = [](const std::optional<double>& x) { return x ? format_number(*x) : std::string(); };
  std::string out = "gender,age_group,observable,data,ci_low,ci_high,mean,q2.5,q97.5,inside_ci\n";
  for (const auto& r : rows) {
    const auto inside = r.inside_ci();
    out += gender_name(r.gender) + "," + std::to_string(r.age) + "," + to_string(r.kind) + "," +
           opt(r.data) + "," + opt(r.ci_low) + "," + opt(r.ci_high) + "," +
           format_number(r.mean) + "," + format_number(r.lower) + "," + format_number(r.upper) +
           "," + (inside ? (*inside ? "1" : "0") : "") + "\n";
  }
  return out;
}

// ---------------------------------------------------------------- JSON records

inline Json params_json(const ModelParams& p) {
  Json j;
  const ParameterLayout layout(false);
  const auto names = layout.names();
  const auto values = layout.to_vector(p);
  for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = values[i];
  for (Gender g : {Gender::male, Gender::female}) {
    const std::string key = g == Gender::male ? "DIm" : "DIf";
    if (p.immunity[g].is_lifelong())
      j[key] = "lifelong";
    else
      j[key] = p.immunity[g].value();
  }
  return j;
}

inline ModelParams params_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("parameter record must be an object");
  ModelParams p;
  std::vector<double> v;
  const ParameterLayout layout(false);
  for (const auto& n : layout.names()) {
    if (!j.contains(n) || !j[n].is_number()) throw ConfigError("parameter record lacks " + n);
    v.push_back(j[n].get<double>());
  }
  p = layout.from_vector(v);
  for (Gender g : {Gender::male, Gender::female}) {
    const std::string key = g == Gender::male ? "DIm" : "DIf";
    if (!j.contains(key) || (j[key].is_string() && j[key] == "lifelong")) continue;
    if (!j[key].is_number()) throw ConfigError(key + " must be a number or \"lifelong\"");
    p.immunity[g] = ImmunityDuration::years(j[key].get<double>());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto names = ParameterLayout(true).names();
    if (std::find(names.begin(), names.end(), it.key()) == names.end())
      throw ConfigError("unknown parameter '" + it.key() + "'");
  }
  return p;
}

inline Json diagnostics_json(const ChainDiagnostics& d, const std::vector<std::string>& names) {
  Json j;
  j["iterations"] = d.iterations;
  j["accepted"] = d.accepted;
  j["acceptance_rate"] = d.acceptance_rate;
  j["acceptance_window"] = d.window;
  j["window_acceptance"] = d.window_acceptance;
  j["numerical_failures"] = d.numerical_failures;
  j["invalid_chain_warnings"] = d.invalid_chain_warnings;
  j["cholesky_fallbacks"] = d.cholesky_fallbacks;
  j["adaptive_proposals"] = d.adaptive_proposals;
  j["runtime_seconds"] = d.runtime_seconds;
  j["warnings"] = d.warnings;
  Json mean = Json::object(), cov = Json::array();
  for (Eigen::Index i = 0; i < d.final_mean.size(); ++i) {
    mean[names.at(static_cast<std::size_t>(i))] = d.final_mean[i];
    std::vector<double> row(static_cast<std::size_t>(d.final_cov.cols()));
    for (Eigen::Index k = 0; k < d.final_cov.cols(); ++k) row[static_cast<std::size_t>(k)] = d.final_cov(i, k);
    cov.push_back(row);
  }
  j["adapted_mean"] = mean;
  j["adapted_covariance"] = cov;
  j["log_posterior_trace"] = d.log_posterior_trace;
  return j;
}

/// 64-bit FNV-1a, used to fingerprint configurations in run manifests.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  const auto res = std::to_chars(buf, buf + 16, v, 16);
  std::string s(buf, res.ptr);
  return std::string(16 - s.size(), '0') + s;
}

}  // namespace hpvcal::io
