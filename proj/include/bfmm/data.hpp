#pragma once

// Mixed continuous/categorical datasets with detection-limit censoring.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "bfmm/errors.hpp"
#include "bfmm/kernels.hpp"

namespace bfmm {

enum class CensorKind { observed, left_censored, right_censored };

/// Censoring annotation of one continuous cell. `bound` is the detection limit
/// (standardized units inside a MixedDataset) and is unused when observed.
struct CensorMark {
  CensorKind kind = CensorKind::observed;
  double bound = 0.0;

  bool censored() const { return kind != CensorKind::observed; }
  friend bool operator==(const CensorMark&, const CensorMark&) = default;
};

/// Affine standardization, optionally preceded by a natural log.
struct ColumnTransform {
  double original_mean = 0.0;  // mean on the (possibly log) scale
  double original_sd = 1.0;
  bool log_transformed = false;

  double apply(double raw) const {
    const double v = log_transformed ? std::log(raw) : raw;
    return (v - original_mean) / original_sd;
  }
  double invert(double standardized) const {
    const double v = standardized * original_sd + original_mean;
    return log_transformed ? std::exp(v) : v;
  }
  friend bool operator==(const ColumnTransform&, const ColumnTransform&) = default;
};

/// A censored cell of the continuous block.
struct CensoredCell {
  std::size_t row = 0;
  std::size_t col = 0;
  CensorKind kind = CensorKind::left_censored;
  double bound = 0.0;  // standardized
};

/// n observations of q continuous and M - q categorical variables.
///
/// Continuous values are standardized per column; censored cells hold their
/// standardized detection bound. Categorical entries are coded 1..L_m.
struct MixedDataset {
  Matrix continuous;                    // n x q, standardized
  std::vector<CensorMark> censor_marks; // n * q, row-major
  Eigen::MatrixXi categorical;          // n x (M - q), codes 1..L_m
  std::vector<int> levels;              // L_m per categorical variable
  std::vector<std::string> column_names;            // continuous first
  std::vector<ColumnTransform> standardization;     // per continuous column
  std::vector<std::vector<std::string>> level_names;  // code - 1 -> token
  Matrix raw_continuous;                // n x q, original units (bound if censored)

  std::size_t n() const { return static_cast<std::size_t>(continuous.rows()); }
  std::size_t q() const { return static_cast<std::size_t>(continuous.cols()); }
  std::size_t num_categorical() const {
    return static_cast<std::size_t>(categorical.cols());
  }
  std::size_t M() const { return q() + num_categorical(); }

  const CensorMark& mark(std::size_t i, std::size_t m) const {
    return censor_marks[i * q() + m];
  }

  std::vector<CensoredCell> censored_cells() const {
    std::vector<CensoredCell> cells;
    for (std::size_t i = 0; i < n(); ++i) {
      for (std::size_t m = 0; m < q(); ++m) {
        const CensorMark& c = mark(i, m);
        if (c.censored()) cells.push_back({i, m, c.kind, c.bound});
      }
    }
    return cells;
  }

  /// Per-column observed mean of the standardized block (zero up to round-off).
  Vector marginal_means() const { return continuous.colwise().mean().transpose(); }

  /// Level counts of categorical variable `c` (0-based among categoricals).
  Vector level_counts(std::size_t c) const {
    Vector counts = Vector::Zero(levels[c]);
    for (std::size_t i = 0; i < n(); ++i) counts[categorical(i, c) - 1] += 1.0;
    return counts;
  }
};

/// Result of standardizing a single column.
struct StandardizedColumn {
  std::vector<double> values;
  ColumnTransform transform;
};

/// Optionally log-transforms, then centers and scales to unit sample sd
/// (n - 1 denominator). Censored cells are passed at their detection bound and
/// participate in the mean/sd like any other cell.
inline StandardizedColumn standardize(std::span<const double> raw, bool log_flag) {
  StandardizedColumn out;
  out.transform.log_transformed = log_flag;
  std::vector<double> v(raw.begin(), raw.end());
  if (log_flag) {
    for (double& x : v) {
      if (!(x > 0.0)) {
        throw ValidationError("standardize: log transform needs positive values");
      }
      x = std::log(x);
    }
  }
  if (std::set<double>(v.begin(), v.end()).size() < 2) {
    throw ValidationError("standardize: column has zero variance");
  }
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  if (!(sd > 0.0)) throw ValidationError("standardize: column has zero variance");
  out.transform.original_mean = mean;
  out.transform.original_sd = sd;
  out.values.resize(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = (v[i] - mean) / sd;
  // Re-center so the standardized mean is zero to machine precision.
  double resid = 0.0;
  for (double x : out.values) resid += x;
  resid /= static_cast<double>(v.size());
  for (double& x : out.values) x -= resid;
  out.transform.original_mean += resid * sd;
  return out;
}

/// Raw (unstandardized) table used to assemble a MixedDataset.
struct RawTable {
  std::vector<std::string> continuous_names;
  std::vector<std::string> categorical_names;
  Matrix continuous;                  // n x q, raw units; censored cells at bound
  std::vector<CensorMark> marks;      // n * q, bounds in raw units
  std::vector<std::vector<std::string>> categorical_tokens;  // [column][row]
  std::vector<bool> log_transform;    // per continuous column
};

/// Standardizes the continuous block and codes categorical levels 1..L in
/// first-appearance order.
inline MixedDataset build_dataset(const RawTable& raw) {
  const auto n = static_cast<std::size_t>(raw.continuous.rows());
  const auto q = static_cast<std::size_t>(raw.continuous.cols());
  if (n == 0) throw ValidationError("dataset is empty");
  if (q == 0) throw ValidationError("dataset needs at least one continuous variable");
  if (raw.continuous_names.size() != q ||
      raw.categorical_names.size() != raw.categorical_tokens.size()) {
    throw ValidationError("column name count does not match data");
  }
  MixedDataset ds;
  ds.raw_continuous = raw.continuous;
  ds.continuous.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q));
  ds.censor_marks = raw.marks.empty() ? std::vector<CensorMark>(n * q) : raw.marks;
  if (ds.censor_marks.size() != n * q) throw ValidationError("censor mark count mismatch");
  for (std::size_t m = 0; m < q; ++m) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) {
      const CensorMark& c = ds.censor_marks[i * q + m];
      if (c.censored() && !std::isfinite(c.bound)) {
        throw ValidationError("censored cell without a finite bound");
      }
      col[i] = c.censored() ? c.bound : raw.continuous(static_cast<Eigen::Index>(i),
                                                       static_cast<Eigen::Index>(m));
      ds.raw_continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = col[i];
    }
    const bool log_flag = !raw.log_transform.empty() && raw.log_transform[m];
    StandardizedColumn s;
    try {
      s = standardize(col, log_flag);
    } catch (const ValidationError& e) {
      throw ValidationError("column '" + raw.continuous_names[m] + "': " + e.what());
    }
    ds.standardization.push_back(s.transform);
    for (std::size_t i = 0; i < n; ++i) {
      ds.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)) = s.values[i];
      CensorMark& c = ds.censor_marks[i * q + m];
      if (c.censored()) c.bound = s.values[i];
    }
  }
  const std::size_t nc = raw.categorical_tokens.size();
  ds.categorical.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nc));
  for (std::size_t c = 0; c < nc; ++c) {
    const auto& tokens = raw.categorical_tokens[c];
    if (tokens.size() != n) throw ValidationError("categorical column length mismatch");
    std::map<std::string, int> code;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = code.emplace(tokens[i], static_cast<int>(names.size()) + 1);
      if (inserted) names.push_back(tokens[i]);
      ds.categorical(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = it->second;
    }
    if (names.size() < 2) {
      throw ValidationError("categorical column '" + raw.categorical_names[c] +
                            "' has a single level");
    }
    ds.levels.push_back(static_cast<int>(names.size()));
    ds.level_names.push_back(std::move(names));
  }
  ds.column_names = raw.continuous_names;
  ds.column_names.insert(ds.column_names.end(), raw.categorical_names.begin(),
                         raw.categorical_names.end());
  return ds;
}

/// Recovers the raw table a dataset was built from.
inline RawTable to_raw_table(const MixedDataset& ds) {
  RawTable raw;
  const std::size_t q = ds.q();
  raw.continuous_names.assign(ds.column_names.begin(),
                              ds.column_names.begin() + static_cast<std::ptrdiff_t>(q));
  raw.categorical_names.assign(ds.column_names.begin() + static_cast<std::ptrdiff_t>(q),
                               ds.column_names.end());
  raw.continuous = ds.raw_continuous;
  raw.marks = ds.censor_marks;
  for (std::size_t k = 0; k < raw.marks.size(); ++k) {
    if (raw.marks[k].censored()) {
      raw.marks[k].bound = ds.raw_continuous(static_cast<Eigen::Index>(k / q),
                                             static_cast<Eigen::Index>(k % q));
    }
  }
  for (std::size_t c = 0; c < ds.num_categorical(); ++c) {
    std::vector<std::string> tokens(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
      tokens[i] = ds.level_names[c][static_cast<std::size_t>(
          ds.categorical(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) - 1)];
    }
    raw.categorical_tokens.push_back(std::move(tokens));
  }
  for (const auto& t : ds.standardization) raw.log_transform.push_back(t.log_transformed);
  return raw;
}

// ---------------------------------------------------------------------------
// Text I/O

enum class ColumnRole { continuous, categorical, ignore };

/// Where a dataset lives and how each column is interpreted.
struct IngestSpec {
  std::filesystem::path path;
  std::map<std::string, ColumnRole> roles;
  std::set<std::string> log_transform;
  char delimiter = ',';
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

/// Shortest round-trippable decimal representation.
inline std::string format_exact(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

/// Flat key = value file; '#' starts a comment.
inline std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    kv[detail::trim(std::string_view(t).substr(0, eq))] =
        detail::trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

/// Reads a dataset-spec file. Recognized keys: data, delimiter, continuous,
/// categorical, ignore, log_transform (comma-separated column lists). A
/// relative `data` path is resolved against the spec file's directory.
inline IngestSpec load_ingest_spec(const std::filesystem::path& spec_path) {
  const auto kv = read_key_values(spec_path);
  IngestSpec spec;
  auto it = kv.find("data");
  if (it == kv.end()) throw ValidationError("dataset spec lacks a 'data' entry");
  spec.path = it->second;
  if (spec.path.is_relative()) spec.path = spec_path.parent_path() / spec.path;
  if (auto d = kv.find("delimiter"); d != kv.end()) {
    if (d->second == "tab" || d->second == "\\t") {
      spec.delimiter = '\t';
    } else if (d->second.size() == 1) {
      spec.delimiter = d->second[0];
    } else {
      throw ValidationError("delimiter must be a single character or 'tab'");
    }
  }
  auto add_roles = [&](const char* key, ColumnRole role) {
    if (auto r = kv.find(key); r != kv.end() && !r->second.empty()) {
      for (const auto& name : detail::split(r->second, ',')) {
        if (!name.empty()) spec.roles[name] = role;
      }
    }
  };
  add_roles("continuous", ColumnRole::continuous);
  add_roles("categorical", ColumnRole::categorical);
  add_roles("ignore", ColumnRole::ignore);
  if (auto r = kv.find("log_transform"); r != kv.end() && !r->second.empty()) {
    for (const auto& name : detail::split(r->second, ',')) {
      if (!name.empty()) spec.log_transform.insert(name);
    }
  }
  return spec;
}

/// Parses a CSV whose continuous cells are plain numbers, "<b" (left-censored
/// at b) or ">b" (right-censored at b).
inline MixedDataset ingest(const IngestSpec& spec) {
  std::ifstream in(spec.path);
  if (!in) throw IoError("cannot open " + spec.path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset is empty (no header)");
  const auto header = detail::split(line, spec.delimiter);

  std::vector<std::size_t> cont_idx, cat_idx;
  RawTable raw;
  for (std::size_t j = 0; j < header.size(); ++j) {
    auto it = spec.roles.find(header[j]);
    if (it == spec.roles.end()) {
      throw ValidationError("column '" + header[j] + "' has no declared role");
    }
    if (it->second == ColumnRole::continuous) {
      cont_idx.push_back(j);
      raw.continuous_names.push_back(header[j]);
      raw.log_transform.push_back(spec.log_transform.count(header[j]) > 0);
    } else if (it->second == ColumnRole::categorical) {
      cat_idx.push_back(j);
      raw.categorical_names.push_back(header[j]);
    }
  }
  for (const auto& [name, role] : spec.roles) {
    if (std::find(header.begin(), header.end(), name) == header.end()) {
      throw ValidationError("declared column '" + name + "' not found in header");
    }
  }
  if (cont_idx.empty()) throw ValidationError("no continuous columns declared");

  std::vector<std::vector<double>> values(cont_idx.size());
  std::vector<std::vector<CensorMark>> marks(cont_idx.size());
  raw.categorical_tokens.resize(cat_idx.size());
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split(line, spec.delimiter);
    if (cells.size() != header.size()) {
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < cont_idx.size(); ++k) {
      const std::string& tok = cells[cont_idx[k]];
      CensorMark mark;
      std::string_view num = tok;
      if (!tok.empty() && (tok[0] == '<' || tok[0] == '>')) {
        mark.kind = tok[0] == '<' ? CensorKind::left_censored : CensorKind::right_censored;
        num.remove_prefix(1);
      }
      double v = 0.0;
      if (!detail::parse_double(num, v)) {
        throw ParseError("row " + std::to_string(row) + ", column '" +
                         header[cont_idx[k]] + "': cannot parse '" + tok + "'");
      }
      if (mark.censored()) mark.bound = v;
      values[k].push_back(v);
      marks[k].push_back(mark);
    }
    for (std::size_t k = 0; k < cat_idx.size(); ++k) {
      const std::string& tok = cells[cat_idx[k]];
      if (tok.empty() || tok == "NA") {
        throw ParseError("row " + std::to_string(row) + ", column '" +
                         header[cat_idx[k]] + "': missing value");
      }
      raw.categorical_tokens[k].push_back(tok);
    }
  }
  if (row == 0) throw ValidationError("dataset is empty");
  const std::size_t q = cont_idx.size();
  raw.continuous.resize(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(q));
  raw.marks.resize(row * q);
  for (std::size_t i = 0; i < row; ++i) {
    for (std::size_t k = 0; k < q; ++k) {
      raw.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = values[k][i];
      raw.marks[i * q + k] = marks[k][i];
    }
  }
  return build_dataset(raw);
}

/// Writes the dataset in the ingest format, original units, continuous
/// columns first. Values use the shortest round-trip representation so
/// ingest(emit(ds)) reproduces ds exactly.
inline void emit_csv(const MixedDataset& ds, std::ostream& out, char delim = ',') {
  for (std::size_t j = 0; j < ds.column_names.size(); ++j) {
    if (j) out << delim;
    out << ds.column_names[j];
  }
  out << '\n';
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t m = 0; m < ds.q(); ++m) {
      if (m) out << delim;
      const CensorMark& c = ds.mark(i, m);
      if (c.kind == CensorKind::left_censored) out << '<';
      if (c.kind == CensorKind::right_censored) out << '>';
      out << detail::format_exact(
          ds.raw_continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m)));
    }
    for (std::size_t c = 0; c < ds.num_categorical(); ++c) {
      out << delim
          << ds.level_names[c][static_cast<std::size_t>(
                 ds.categorical(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) - 1)];
    }
    out << '\n';
  }
}

/// Writes a dataset-spec file describing a CSV produced by emit_csv.
inline void emit_ingest_spec(const MixedDataset& ds, const std::string& data_file,
                             std::ostream& out, char delim = ',') {
  auto join = [](auto first, auto last) {
    std::string s;
    for (auto it = first; it != last; ++it) {
      if (!s.empty()) s += ',';
      s += *it;
    }
    return s;
  };
  const auto q = static_cast<std::ptrdiff_t>(ds.q());
  out << "data = " << data_file << '\n';
  out << "delimiter = " << (delim == '\t' ? std::string("tab") : std::string(1, delim)) << '\n';
  out << "continuous = " << join(ds.column_names.begin(), ds.column_names.begin() + q) << '\n';
  out << "categorical = " << join(ds.column_names.begin() + q, ds.column_names.end()) << '\n';
  std::vector<std::string> logs;
  for (std::size_t m = 0; m < ds.q(); ++m) {
    if (ds.standardization[m].log_transformed) logs.push_back(ds.column_names[m]);
  }
  out << "log_transform = " << join(logs.begin(), logs.end()) << '\n';
}

}  // namespace bfmm
