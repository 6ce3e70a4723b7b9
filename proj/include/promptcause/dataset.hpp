#pragma once

// Records, variable schema and the observation matrix every analysis stage
// consumes. Records live in JSONL (one object per line); the matrix is a CSV
// whose header cells are `name:tier`.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "promptcause/error.hpp"
#include "promptcause/intention.hpp"
#include "promptcause/io.hpp"

namespace promptcause {

struct TestCase {
  std::string stdin_text;
  std::string expected_stdout;

  bool operator==(const TestCase&) const = default;
};

struct PromptRecord {
  std::string id;
  std::string question_text;
  std::string origin_id;  // == id for an un-rephrased question
  IntentionVector intention_vector;
  std::vector<std::string> solutions;
  std::vector<TestCase> test_cases;
  std::optional<std::string> difficulty;

  bool is_original() const { return origin_id == id; }
  bool operator==(const PromptRecord&) const = default;
};

enum class Tier { meta, linguistic, metric };

inline char tier_code(Tier t) {
  switch (t) {
    case Tier::meta: return 'M';
    case Tier::linguistic: return 'L';
    case Tier::metric: return 'C';
  }
  return '?';
}

inline Tier parse_tier(std::string_view s) {
  if (s == "M") return Tier::meta;
  if (s == "L") return Tier::linguistic;
  if (s == "C") return Tier::metric;
  throw Error("unknown tier '" + std::string(s) + "' (expected M, L or C)");
}

// Ordered variable names per tier. Column order is always M, then L, then C.
class VariableSchema {
 public:
  VariableSchema() = default;
  VariableSchema(std::vector<std::string> meta, std::vector<std::string> ling, std::vector<std::string> metric)
      : meta_(std::move(meta)), ling_(std::move(ling)), metric_(std::move(metric)) {
    rebuild_index();
  }

  const std::vector<std::string>& meta_names() const noexcept { return meta_; }
  const std::vector<std::string>& ling_names() const noexcept { return ling_; }
  const std::vector<std::string>& metric_names() const noexcept { return metric_; }

  std::size_t size() const noexcept { return meta_.size() + ling_.size() + metric_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> all = meta_;
    all.insert(all.end(), ling_.begin(), ling_.end());
    all.insert(all.end(), metric_.begin(), metric_.end());
    return all;
  }

  const std::string& name(std::size_t col) const {
    if (col < meta_.size()) return meta_[col];
    col -= meta_.size();
    if (col < ling_.size()) return ling_[col];
    return metric_.at(col - ling_.size());
  }

  Tier tier(std::size_t col) const {
    if (col < meta_.size()) return Tier::meta;
    if (col < meta_.size() + ling_.size()) return Tier::linguistic;
    if (col < size()) return Tier::metric;
    throw Error("column index out of range");
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownNode(name);
    return it->second;
  }

  bool operator==(const VariableSchema& o) const {
    return meta_ == o.meta_ && ling_ == o.ling_ && metric_ == o.metric_;
  }

 private:
  void rebuild_index() {
    index_.clear();
    std::size_t col = 0;
    for (const auto* tier : {&meta_, &ling_, &metric_}) {
      for (const auto& n : *tier) {
        if (n.empty()) throw Error("empty variable name in schema");
        if (!index_.emplace(n, col).second) throw Error("variable name '" + n + "' is not unique across tiers");
        ++col;
      }
    }
  }

  std::vector<std::string> meta_;
  std::vector<std::string> ling_;
  std::vector<std::string> metric_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Named values keyed by record id; what features and metrics look like before assembly.
struct KeyedRow {
  std::string id;
  std::vector<std::string> names;
  std::vector<double> values;
};

struct ColumnScaling {
  double mean = 0.0;
  double stddev = 1.0;
};

struct ObservationMatrix {
  VariableSchema schema;
  Eigen::MatrixXd rows;
  std::vector<std::string> row_ids;
  std::optional<std::vector<ColumnScaling>> scaling;
  std::vector<bool> constant;  // per column; excluded from discovery when set
  std::size_t dropped_rows = 0;

  std::size_t n() const { return static_cast<std::size_t>(rows.rows()); }
  Eigen::VectorXd column(const std::string& name) const {
    return rows.col(static_cast<Eigen::Index>(schema.index_of(name)));
  }
};

// ---------------------------------------------------------------------------
// JSONL records

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj, const char* field, std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw SchemaError(line, field, "missing");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_string()) throw SchemaError(line, field, "expected a string");
  return v.get<std::string>();
}

}  // namespace detail

inline PromptRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw SchemaError(line, "<record>", "expected a JSON object");
  PromptRecord r;
  r.id = detail::require_string(j, "id", line);
  if (r.id.empty()) throw SchemaError(line, "id", "empty");
  r.question_text = detail::require_string(j, "question_text", line);
  r.origin_id = j.contains("origin_id") && !j["origin_id"].is_null() ? detail::require_string(j, "origin_id", line) : r.id;
  try {
    r.intention_vector = IntentionVector::parse(detail::require_string(j, "intention_vector", line));
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(line, "intention_vector", e.what());
  }
  const auto& sols = detail::require(j, "solutions", line);
  if (!sols.is_array()) throw SchemaError(line, "solutions", "expected an array");
  for (const auto& s : sols) {
    if (!s.is_string()) throw SchemaError(line, "solutions", "expected an array of strings");
    r.solutions.push_back(s.get<std::string>());
  }
  const auto& tests = detail::require(j, "test_cases", line);
  if (!tests.is_array()) throw SchemaError(line, "test_cases", "expected an array");
  for (const auto& t : tests) {
    if (!t.is_object()) throw SchemaError(line, "test_cases", "expected objects");
    TestCase tc;
    tc.stdin_text = detail::require_string(t, "stdin", line);
    tc.expected_stdout = detail::require_string(t, "expected_stdout", line);
    r.test_cases.push_back(std::move(tc));
  }
  if (auto it = j.find("difficulty"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw SchemaError(line, "difficulty", "expected a string");
    r.difficulty = it->get<std::string>();
  }
  return r;
}

inline nlohmann::json record_to_json(const PromptRecord& r) {
  nlohmann::json tests = nlohmann::json::array();
  for (const auto& t : r.test_cases) tests.push_back({{"stdin", t.stdin_text}, {"expected_stdout", t.expected_stdout}});
  nlohmann::json j = {
      {"id", r.id},
      {"question_text", r.question_text},
      {"origin_id", r.origin_id},
      {"intention_vector", r.intention_vector.str()},
      {"solutions", r.solutions},
      {"test_cases", std::move(tests)},
  };
  j["difficulty"] = r.difficulty ? nlohmann::json(*r.difficulty) : nlohmann::json(nullptr);
  return j;
}

inline std::vector<PromptRecord> parse_dataset(std::string_view text) {
  std::vector<PromptRecord> records;
  std::vector<std::size_t> lines;
  std::size_t line_no = 0;
  for (const auto& line : io::split_lines(text)) {
    ++line_no;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(line_no, "<json>", e.what());
    }
    records.push_back(record_from_json(j, line_no));
    lines.push_back(line_no);
  }
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!ids.insert(records[i].id).second) throw SchemaError(lines[i], "id", "duplicate id '" + records[i].id + "'");
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!ids.count(records[i].origin_id))
      throw SchemaError(lines[i], "origin_id", "refers to unknown record '" + records[i].origin_id + "'");
  return records;
}

inline std::vector<PromptRecord> load_dataset(const std::filesystem::path& path) {
  return parse_dataset(io::read_file(path));
}

inline std::string serialize_dataset(const std::vector<PromptRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

inline void save_dataset(const std::filesystem::path& path, const std::vector<PromptRecord>& records) {
  io::write_file_atomic(path, serialize_dataset(records));
}

// ---------------------------------------------------------------------------
// Matrix assembly

// One row per record, columns in schema tier order. Meta columns come from the
// record's intention bits (schema meta_names are the registry ids, in order).
// Rows with a non-finite metric are dropped and counted.
inline ObservationMatrix assemble_matrix(const std::vector<PromptRecord>& records, const std::vector<KeyedRow>& features,
                                         const std::vector<KeyedRow>& metrics, const VariableSchema& schema) {
  auto index_rows = [](const std::vector<KeyedRow>& rows) {
    std::unordered_map<std::string, const KeyedRow*> by_id;
    for (const auto& r : rows) by_id.emplace(r.id, &r);
    return by_id;
  };
  const auto feat_by_id = index_rows(features);
  const auto met_by_id = index_rows(metrics);

  auto lookup = [](const KeyedRow& row, const std::vector<std::string>& wanted, const std::string& id) {
    std::unordered_map<std::string, double> by_name;
    for (std::size_t i = 0; i < row.names.size() && i < row.values.size(); ++i) by_name.emplace(row.names[i], row.values[i]);
    std::vector<double> out;
    out.reserve(wanted.size());
    for (const auto& w : wanted) {
      auto it = by_name.find(w);
      if (it == by_name.end()) throw AlignmentError(id + " (no value for '" + w + "')");
      out.push_back(it->second);
    }
    return out;
  };

  ObservationMatrix m;
  m.schema = schema;
  std::vector<std::vector<double>> kept;
  for (const auto& rec : records) {
    auto f = feat_by_id.find(rec.id);
    auto c = met_by_id.find(rec.id);
    if (f == feat_by_id.end() || c == met_by_id.end()) throw AlignmentError(rec.id);
    if (rec.intention_vector.size() != schema.meta_names().size())
      throw AlignmentError(rec.id + " (intention vector length " + std::to_string(rec.intention_vector.size()) +
                           " != meta variable count " + std::to_string(schema.meta_names().size()) + ")");
    std::vector<double> row;
    row.reserve(schema.size());
    for (std::size_t i = 0; i < rec.intention_vector.size(); ++i) row.push_back(rec.intention_vector[i] ? 1.0 : 0.0);
    for (double v : lookup(*f->second, schema.ling_names(), rec.id)) row.push_back(v);
    const auto metric_vals = lookup(*c->second, schema.metric_names(), rec.id);
    const bool finite = std::all_of(metric_vals.begin(), metric_vals.end(), [](double v) { return std::isfinite(v); });
    if (!finite) {
      ++m.dropped_rows;
      continue;
    }
    row.insert(row.end(), metric_vals.begin(), metric_vals.end());
    kept.push_back(std::move(row));
    m.row_ids.push_back(rec.id);
  }
  if (kept.empty()) throw EmptyMatrixError();
  m.rows.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(schema.size()));
  for (std::size_t r = 0; r < kept.size(); ++r)
    for (std::size_t c = 0; c < schema.size(); ++c) {
      const double v = kept[r][c];
      if (!std::isfinite(v)) throw Error("non-finite value in column '" + schema.name(c) + "' of record " + m.row_ids[r]);
      m.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  m.constant.assign(schema.size(), false);
  return m;
}

// ---------------------------------------------------------------------------
// Scaling and screening

inline bool column_is_constant(const Eigen::Ref<const Eigen::VectorXd>& col) {
  if (col.size() == 0) return true;
  const double first = col(0);
  return (col.array() == first).all();
}

// z-scores every non-meta column (population stddev). Meta columns and
// constant columns keep identity scaling; constant ones are flagged.
inline ObservationMatrix standardize(const ObservationMatrix& m) {
  ObservationMatrix out = m;
  const auto cols = static_cast<std::size_t>(m.rows.cols());
  std::vector<ColumnScaling> scaling(cols);
  out.constant.assign(cols, false);
  const double n = static_cast<double>(m.rows.rows());
  for (std::size_t c = 0; c < cols; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    Eigen::VectorXd col = m.rows.col(ci);
    if (m.constant.size() == cols && m.constant[c]) out.constant[c] = true;
    if (column_is_constant(col)) out.constant[c] = true;
    if (m.schema.tier(c) == Tier::meta || out.constant[c] || n == 0) continue;
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / n);
    if (!(sd > 0.0)) {
      out.constant[c] = true;
      continue;
    }
    scaling[c] = {mean, sd};
    out.rows.col(ci) = (col.array() - mean) / sd;
  }
  out.scaling = std::move(scaling);
  return out;
}

inline ObservationMatrix unstandardize(const ObservationMatrix& m) {
  ObservationMatrix out = m;
  if (!m.scaling) return out;
  for (std::size_t c = 0; c < m.scaling->size(); ++c) {
    const auto& s = (*m.scaling)[c];
    const auto ci = static_cast<Eigen::Index>(c);
    out.rows.col(ci) = m.rows.col(ci).array() * s.stddev + s.mean;
  }
  out.scaling.reset();
  return out;
}

inline double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (!(denom > 0.0)) return 0.0;
  return std::clamp((da * db).sum() / denom, -1.0, 1.0);
}

// Two-sided p-value of H0: rho = 0 via the t statistic with n-2 dof.
inline double correlation_p_value(double r, std::size_t n) {
  if (n < 3) return 1.0;
  const double dof = static_cast<double>(n - 2);
  if (std::abs(r) >= 1.0) return 0.0;
  const double t = std::abs(r) * std::sqrt(dof / (1.0 - r * r));
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

// Keeps a column subset, preserving order.
inline ObservationMatrix select_columns(const ObservationMatrix& m, const std::vector<std::size_t>& keep) {
  std::vector<std::string> meta, ling, metric;
  for (auto c : keep) {
    switch (m.schema.tier(c)) {
      case Tier::meta: meta.push_back(m.schema.name(c)); break;
      case Tier::linguistic: ling.push_back(m.schema.name(c)); break;
      case Tier::metric: metric.push_back(m.schema.name(c)); break;
    }
  }
  ObservationMatrix out;
  out.schema = VariableSchema(std::move(meta), std::move(ling), std::move(metric));
  out.rows.resize(m.rows.rows(), static_cast<Eigen::Index>(keep.size()));
  out.row_ids = m.row_ids;
  out.dropped_rows = m.dropped_rows;
  std::vector<ColumnScaling> scaling;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.rows.col(static_cast<Eigen::Index>(i)) = m.rows.col(static_cast<Eigen::Index>(keep[i]));
    out.constant.push_back(m.constant.size() > keep[i] && m.constant[keep[i]]);
    if (m.scaling) scaling.push_back((*m.scaling)[keep[i]]);
  }
  if (m.scaling) out.scaling = std::move(scaling);
  return out;
}

// Removes linguistic columns that show no significant correlation with any
// meta or metric column. The per-column family of tests is held at level
// alpha with a Sidak adjustment. Constant columns are left for the flag.
inline ObservationMatrix drop_uncorrelated(const ObservationMatrix& m, double alpha = 0.05) {
  const std::size_t n = m.n();
  if (n < 10) throw InsufficientData("correlation screen needs at least 10 rows, got " + std::to_string(n));
  const auto cols = static_cast<std::size_t>(m.rows.cols());
  auto is_constant = [&](std::size_t c) {
    return (m.constant.size() == cols && m.constant[c]) || column_is_constant(m.rows.col(static_cast<Eigen::Index>(c)));
  };
  std::vector<std::size_t> partners;
  for (std::size_t c = 0; c < cols; ++c)
    if (m.schema.tier(c) != Tier::linguistic && !is_constant(c)) partners.push_back(c);

  const double k = static_cast<double>(std::max<std::size_t>(partners.size(), 1));
  const double per_test = 1.0 - std::pow(1.0 - std::clamp(alpha, 0.0, 1.0), 1.0 / k);

  std::vector<std::size_t> keep;
  for (std::size_t c = 0; c < cols; ++c) {
    if (m.schema.tier(c) != Tier::linguistic || is_constant(c)) {
      keep.push_back(c);
      continue;
    }
    bool correlated = false;
    for (auto p : partners) {
      const double r = pearson(m.rows.col(static_cast<Eigen::Index>(c)), m.rows.col(static_cast<Eigen::Index>(p)));
      if (correlation_p_value(r, n) <= per_test) {
        correlated = true;
        break;
      }
    }
    if (correlated) keep.push_back(c);
  }
  return select_columns(m, keep);
}

// Removes each linguistic column whose |Pearson r| with an earlier kept
// linguistic column reaches `max_abs_r`. Near-duplicate features otherwise
// split one effect into several sub-threshold edges. Values above 1 disable
// the screen.
inline ObservationMatrix drop_redundant(const ObservationMatrix& m, double max_abs_r = 0.95) {
  const auto cols = static_cast<std::size_t>(m.rows.cols());
  std::vector<std::size_t> keep, kept_ling;
  for (std::size_t c = 0; c < cols; ++c) {
    if (m.schema.tier(c) != Tier::linguistic || column_is_constant(m.rows.col(static_cast<Eigen::Index>(c)))) {
      keep.push_back(c);
      continue;
    }
    bool redundant = false;
    for (auto k : kept_ling)
      if (std::abs(pearson(m.rows.col(static_cast<Eigen::Index>(c)), m.rows.col(static_cast<Eigen::Index>(k)))) >= max_abs_r) {
        redundant = true;
        break;
      }
    if (!redundant) {
      keep.push_back(c);
      kept_ling.push_back(c);
    }
  }
  return select_columns(m, keep);
}

// ---------------------------------------------------------------------------
// Matrix CSV: header cells are `name:tier`, values in shortest round-trip form.

inline std::string serialize_matrix_csv(const ObservationMatrix& m) {
  std::vector<std::string> header;
  for (std::size_t c = 0; c < m.schema.size(); ++c)
    header.push_back(m.schema.name(c) + ":" + tier_code(m.schema.tier(c)));
  std::string out = io::csv_row(header);
  std::vector<std::string> fields(m.schema.size());
  for (Eigen::Index r = 0; r < m.rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.rows.cols(); ++c) fields[static_cast<std::size_t>(c)] = io::format_double(m.rows(r, c));
    out += io::csv_row(fields);
  }
  return out;
}

inline ObservationMatrix parse_matrix_csv(std::string_view text) {
  const auto table = io::parse_csv(text);
  if (table.header.empty()) throw SchemaError(1, "<header>", "empty matrix file");
  std::vector<std::string> meta, ling, metric;
  std::vector<Tier> tiers;
  Tier last = Tier::meta;
  for (const auto& cell : table.header) {
    const auto colon = cell.rfind(':');
    if (colon == std::string::npos) throw SchemaError(1, cell, "header cell must be name:tier");
    const std::string name = cell.substr(0, colon);
    Tier t;
    try {
      t = parse_tier(cell.substr(colon + 1));
    } catch (const Error& e) {
      throw SchemaError(1, cell, e.what());
    }
    if (static_cast<int>(t) < static_cast<int>(last)) throw SchemaError(1, cell, "columns must be ordered M, L, C");
    last = t;
    (t == Tier::meta ? meta : t == Tier::linguistic ? ling : metric).push_back(name);
  }
  ObservationMatrix m;
  try {
    m.schema = VariableSchema(std::move(meta), std::move(ling), std::move(metric));
  } catch (const Error& e) {
    throw SchemaError(1, "<header>", e.what());
  }
  const auto cols = m.schema.size();
  m.rows.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != cols) throw SchemaError(table.line_of_row[r], "<row>", "expected " + std::to_string(cols) + " fields");
    for (std::size_t c = 0; c < cols; ++c) {
      char* end = nullptr;
      const double v = std::strtod(row[c].c_str(), &end);
      if (row[c].empty() || end != row[c].c_str() + row[c].size() || !std::isfinite(v))
        throw SchemaError(table.line_of_row[r], m.schema.name(c), "not a finite number: '" + row[c] + "'");
      if (m.schema.tier(c) == Tier::meta && v != 0.0 && v != 1.0)
        throw SchemaError(table.line_of_row[r], m.schema.name(c), "meta-prompt columns must be 0 or 1");
      m.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
    m.row_ids.push_back(std::to_string(r));
  }
  m.constant.assign(cols, false);
  for (std::size_t c = 0; c < cols; ++c) m.constant[c] = column_is_constant(m.rows.col(static_cast<Eigen::Index>(c)));
  return m;
}

inline ObservationMatrix load_matrix_csv(const std::filesystem::path& path) { return parse_matrix_csv(io::read_file(path)); }

inline void save_matrix_csv(const std::filesystem::path& path, const ObservationMatrix& m) {
  io::write_file_atomic(path, serialize_matrix_csv(m));
}

// ---------------------------------------------------------------------------
// Keyed CSV (`id` + one column per name); used for the features and metrics stages.

inline std::string serialize_keyed_csv(const std::vector<KeyedRow>& rows) {
  std::vector<std::string> header{"id"};
  if (!rows.empty()) header.insert(header.end(), rows.front().names.begin(), rows.front().names.end());
  std::string out = io::csv_row(header);
  for (const auto& r : rows) {
    std::vector<std::string> fields{r.id};
    for (double v : r.values) fields.push_back(std::isfinite(v) ? io::format_double(v) : std::string("nan"));
    out += io::csv_row(fields);
  }
  return out;
}

inline std::vector<KeyedRow> parse_keyed_csv(std::string_view text) {
  const auto table = io::parse_csv(text);
  if (table.header.empty() || table.header.front() != "id") throw SchemaError(1, "id", "first column must be 'id'");
  std::vector<std::string> names(table.header.begin() + 1, table.header.end());
  std::vector<KeyedRow> rows;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.header.size())
      throw SchemaError(table.line_of_row[r], "<row>", "expected " + std::to_string(table.header.size()) + " fields");
    KeyedRow kr{row[0], names, {}};
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] == "nan") {
        kr.values.push_back(std::nan(""));
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(row[c].c_str(), &end);
      if (row[c].empty() || end != row[c].c_str() + row[c].size())
        throw SchemaError(table.line_of_row[r], names[c - 1], "not a number: '" + row[c] + "'");
      kr.values.push_back(v);
    }
    rows.push_back(std::move(kr));
  }
  return rows;
}

}  // namespace promptcause
