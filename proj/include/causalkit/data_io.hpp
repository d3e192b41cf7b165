#pragma once

#include "core.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace causalkit {

enum class ColumnRole {
  treatment,
  outcome,
  covariate,
  mediator,
  treatment_received,
  instrument,
  stratum,
  pair_id,
  running,
  weight
};

inline const char* role_name(ColumnRole r) {
  switch (r) {
    case ColumnRole::treatment: return "treatment";
    case ColumnRole::outcome: return "outcome";
    case ColumnRole::covariate: return "covariate";
    case ColumnRole::mediator: return "mediator";
    case ColumnRole::treatment_received: return "treatment_received";
    case ColumnRole::instrument: return "instrument";
    case ColumnRole::stratum: return "stratum";
    case ColumnRole::pair_id: return "pair_id";
    case ColumnRole::running: return "running";
    case ColumnRole::weight: return "weight";
  }
  return "?";
}

using RoleMap = std::vector<std::pair<std::string, ColumnRole>>;

struct Finding {
  std::string code;
  std::string column;
  IVec rows;
  std::string message;
  bool operator==(const Finding&) const = default;
};

class Dataset {
 public:
  Dataset() = default;

  std::size_t rows() const { return rows_; }
  const std::vector<std::string>& names() const { return names_; }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  void add_column(const std::string& name, std::vector<double> values, std::vector<bool> missing = {}) {
    if (has(name)) throw ValidationError("duplicate column: " + name);
    if (!names_.empty() && values.size() != rows_) throw ValidationError("column length mismatch: " + name);
    if (names_.empty()) rows_ = values.size();
    if (missing.empty()) missing.assign(values.size(), false);
    index_[name] = names_.size();
    names_.push_back(name);
    data_.push_back(std::move(values));
    missing_.push_back(std::move(missing));
  }

  const std::vector<double>& raw(const std::string& name) const { return data_.at(idx(name)); }
  const std::vector<bool>& missing(const std::string& name) const { return missing_.at(idx(name)); }

  bool any_missing(const std::string& name) const {
    const auto& m = missing(name);
    return std::find(m.begin(), m.end(), true) != m.end();
  }

  // Column as a vector; refuses columns with missing cells.
  Vec column(const std::string& name) const {
    if (any_missing(name)) throw ValidationError("column '" + name + "' has missing values; impute explicitly first");
    const auto& v = raw(name);
    return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  Mat columns(const std::vector<std::string>& cols) const {
    Mat m(rows_, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(j) = column(cols[j]);
    return m;
  }

  void set_role(const std::string& name, ColumnRole r) {
    if (!has(name)) throw ValidationError("role column '" + name + "' not found");
    roles_[name] = r;
  }

  std::optional<ColumnRole> role(const std::string& name) const {
    auto it = roles_.find(name);
    if (it == roles_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<std::string> with_role(ColumnRole r) const {
    std::vector<std::string> out;
    for (const auto& n : names_) {
      auto it = roles_.find(n);
      if (it != roles_.end() && it->second == r) out.push_back(n);
    }
    return out;
  }

  std::string single(ColumnRole r) const {
    auto v = with_role(r);
    if (v.size() != 1) throw ValidationError(std::string("expected exactly one ") + role_name(r) + " column");
    return v.front();
  }

  Vec role_column(ColumnRole r) const { return column(single(r)); }
  Mat covariates() const { return columns(with_role(ColumnRole::covariate)); }

  // Explicit mean imputation; the only sanctioned way to clear missing cells.
  void impute_mean(const std::string& name) {
    auto& v = data_.at(idx(name));
    auto& m = missing_.at(idx(name));
    double s = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!m[i]) {
        s += v[i];
        ++k;
      }
    if (k == 0) throw ValidationError("cannot impute column '" + name + "': all values missing");
    for (std::size_t i = 0; i < v.size(); ++i)
      if (m[i]) {
        v[i] = s / static_cast<double>(k);
        m[i] = false;
      }
  }

  bool operator==(const Dataset& o) const {
    if (rows_ != o.rows_ || names_ != o.names_ || missing_ != o.missing_) return false;
    for (std::size_t j = 0; j < data_.size(); ++j)
      for (std::size_t i = 0; i < rows_; ++i)
        if (!missing_[j][i] && data_[j][i] != o.data_[j][i]) return false;
    return true;
  }

 private:
  std::size_t idx(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError("column '" + name + "' not found");
    return it->second;
  }

  std::size_t rows_ = 0;
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<double>> data_;
  std::vector<std::vector<bool>> missing_;
  std::map<std::string, ColumnRole> roles_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_number(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) return std::nullopt;
  return v;
}

}  // namespace detail

inline Dataset parse_csv(std::istream& in, const RoleMap& roles = {}) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV: header row missing");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);
  std::vector<std::string> header = detail::split_csv_line(line);
  for (auto& h : header) h = detail::trim(h);
  {
    std::set<std::string> seen;
    for (const auto& h : header)
      if (!seen.insert(h).second) throw ValidationError("duplicate header: " + h);
  }
  std::set<std::string> label_cols;
  for (const auto& [name, role] : roles) {
    if (std::find(header.begin(), header.end(), name) == header.end())
      throw ValidationError("declared " + std::string(role_name(role)) + " column '" + name + "' not in header");
    if (role == ColumnRole::stratum || role == ColumnRole::pair_id) label_cols.insert(name);
  }
  const std::size_t p = header.size();
  std::vector<std::vector<double>> cols(p);
  std::vector<std::vector<bool>> miss(p);
  std::vector<std::map<std::string, double>> codes(p);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != p)
      throw ValidationError("row " + std::to_string(row + 1) + ": expected " + std::to_string(p) + " cells, got " +
                            std::to_string(cells.size()));
    for (std::size_t j = 0; j < p; ++j) {
      const std::string c = detail::trim(cells[j]);
      if (c.empty() || c == "NA") {
        cols[j].push_back(std::numeric_limits<double>::quiet_NaN());
        miss[j].push_back(true);
        continue;
      }
      auto v = detail::parse_number(c);
      if (!v) {
        if (label_cols.count(header[j])) {
          auto it = codes[j].find(c);
          const double code = it == codes[j].end() ? static_cast<double>(codes[j].size()) : it->second;
          codes[j].emplace(c, code);
          v = code;
        } else {
          throw ValidationError("unparseable cell at row " + std::to_string(row + 1) + ", column '" + header[j] +
                                "': \"" + c + "\"");
        }
      }
      cols[j].push_back(*v);
      miss[j].push_back(false);
    }
    ++row;
  }
  Dataset ds;
  for (std::size_t j = 0; j < p; ++j) ds.add_column(header[j], std::move(cols[j]), std::move(miss[j]));
  for (const auto& [name, role] : roles) ds.set_role(name, role);
  return ds;
}

inline Dataset load_csv(const std::string& path, const RoleMap& roles = {}) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  return parse_csv(in, roles);
}

inline void write_csv(const Dataset& ds, std::ostream& out) {
  const auto& names = ds.names();
  for (std::size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < ds.rows(); ++i) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (j) out << ",";
      if (ds.missing(names[j])[i]) {
        out << "NA";
      } else {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, ds.raw(names[j])[i]);
        out.write(buf, ptr - buf);
      }
    }
    out << "\n";
  }
}

inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  write_csv(ds, out);
}

// Checks role invariants; never throws for data problems.
inline std::vector<Finding> validate(const Dataset& ds) {
  std::vector<Finding> out;
  for (const auto& name : ds.names()) {
    auto role = ds.role(name);
    if (!role) continue;
    const auto& v = ds.raw(name);
    const auto& m = ds.missing(name);
    IVec miss_rows;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (m[i]) miss_rows.push_back(static_cast<int>(i));
    if (!miss_rows.empty())
      out.push_back({"missing", name, miss_rows, "missing values in " + std::string(role_name(*role)) + " column"});
    if (*role == ColumnRole::treatment) {
      IVec bad;
      for (std::size_t i = 0; i < v.size(); ++i)
        if (!m[i] && v[i] != 0.0 && v[i] != 1.0) bad.push_back(static_cast<int>(i));
      if (!bad.empty()) out.push_back({"non-binary treatment", name, bad, "treatment must be 0/1"});
    }
    if (*role == ColumnRole::pair_id) {
      std::map<double, IVec> groups;
      for (std::size_t i = 0; i < v.size(); ++i)
        if (!m[i]) groups[v[i]].push_back(static_cast<int>(i));
      IVec single;
      for (const auto& [k, rows] : groups)
        if (rows.size() < 2) single.insert(single.end(), rows.begin(), rows.end());
      if (!single.empty()) out.push_back({"singleton pair", name, single, "pair_id groups must have size >= 2"});
    }
  }
  return out;
}

// Maps arbitrary numeric labels to 0..K-1 in order of first appearance.
inline IVec encode_labels(const Vec& v) {
  std::map<double, int> code;
  IVec out(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    auto it = code.find(v[i]);
    if (it == code.end()) it = code.emplace(v[i], static_cast<int>(code.size())).first;
    out[i] = it->second;
  }
  return out;
}

}  // namespace causalkit
