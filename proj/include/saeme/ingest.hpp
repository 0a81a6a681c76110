#pragma once

#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "saeme/core.hpp"
#include "saeme/csv.hpp"
#include "saeme/config.hpp"

namespace saeme {

/// Variance from a 90% margin of error: (moe / 1.645)^2 by the standard
/// Census convention; the divisor is configurable for other conventions.
inline double moe_to_variance(double moe90, double divisor = 1.645) {
  if (!(moe90 >= 0.0) || !std::isfinite(moe90))
    throw std::invalid_argument("moe_to_variance: moe must be finite and >= 0");
  if (!(divisor > 0.0))
    throw std::invalid_argument("moe_to_variance: divisor must be > 0");
  const double sd = moe90 / divisor;
  return sd * sd;
}

/// One area-level record on the original (pre-log) scale. Exactly one of
/// (var, moe) is present per estimate.
struct RawAreaRecord {
  std::string area_id;
  double y_hat = 0;  ///< direct estimate, > 0
  std::optional<double> var_y;
  std::optional<double> moe_y;
  double w_hat = 0;  ///< covariate estimate, > 0
  std::optional<double> var_w;
  std::optional<double> moe_w;
  std::optional<double> x_exact;  ///< error-free covariate, original scale
  int source_row = 0;             ///< 1-based CSV line, for diagnostics
};

/// Delta-method (first-order Taylor) log transform:
///   z = log(y),  psi = var(y) / y^2,  W = log(w),  C = var(w) / w^2.
inline AreaObservation log_transform_record(const RawAreaRecord& rec,
                                            double moe_divisor = 1.645) {
  if (!(rec.y_hat > 0.0) || !std::isfinite(rec.y_hat))
    throw std::invalid_argument("log_transform: y_hat must be > 0 (area " +
                                rec.area_id + ")");
  if (!(rec.w_hat > 0.0) || !std::isfinite(rec.w_hat))
    throw std::invalid_argument("log_transform: w_hat must be > 0 (area " +
                                rec.area_id + ")");
  const double vy = rec.var_y ? *rec.var_y
                              : moe_to_variance(rec.moe_y.value_or(0.0), moe_divisor);
  const double vw = rec.var_w ? *rec.var_w
                              : moe_to_variance(rec.moe_w.value_or(0.0), moe_divisor);
  if (!(vy > 0.0))
    throw std::invalid_argument("log_transform: response variance must be > 0 (area " +
                                rec.area_id + ")");
  if (vw < 0.0)
    throw std::invalid_argument("log_transform: covariate variance must be >= 0");
  return AreaObservation(rec.area_id, std::log(rec.y_hat),
                         std::log(rec.w_hat), vy / (rec.y_hat * rec.y_hat),
                         vw / (rec.w_hat * rec.w_hat));
}

/// Which CSV columns carry which fields. CoG and SAIPE extracts name their
/// columns differently, so the mapping travels in a key=value config file:
///   area_id = geo, y_hat = emp2012, moe_y = emp2012_moe, ...
/// Per estimate, map exactly one of var / moe.
struct ColumnMapping {
  std::string area_id;
  std::string y_hat;
  std::optional<std::string> var_y, moe_y;
  std::string w_hat;
  std::optional<std::string> var_w, moe_w;
  std::optional<std::string> x_exact;
  double moe_divisor = 1.645;

  static ColumnMapping from_map(const std::map<std::string, std::string>& kv) {
    ColumnMapping m;
    auto get = [&](const char* k) -> std::optional<std::string> {
      auto it = kv.find(k);
      if (it == kv.end() || it->second.empty()) return std::nullopt;
      return it->second;
    };
    auto require = [&](const char* k) {
      auto v = get(k);
      if (!v) throw std::invalid_argument(std::string("column mapping: missing '") + k + "'");
      return *v;
    };
    m.area_id = require("area_id");
    m.y_hat = require("y_hat");
    m.var_y = get("var_y");
    m.moe_y = get("moe_y");
    m.w_hat = require("w_hat");
    m.var_w = get("var_w");
    m.moe_w = get("moe_w");
    m.x_exact = get("x_exact");
    if (auto d = get("moe_divisor")) m.moe_divisor = std::strtod(d->c_str(), nullptr);
    if (m.var_y.has_value() == m.moe_y.has_value())
      throw std::invalid_argument("column mapping: map exactly one of var_y / moe_y");
    if (m.var_w.has_value() == m.moe_w.has_value())
      throw std::invalid_argument("column mapping: map exactly one of var_w / moe_w");
    return m;
  }

  static ColumnMapping from_file(const std::string& path) {
    return from_map(read_config_file(path));
  }
};

struct IngestResult {
  std::vector<RawAreaRecord> records;
  std::vector<std::pair<int, std::string>> row_errors;  ///< (1-based row, message)
  int accepted = 0;
  int rejected = 0;
};

namespace detail {

inline std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0')) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads and validates area records. Rows failing validation are collected
/// with their row numbers; nothing is dropped silently. Missing mapped
/// columns are a configuration error, not a row error.
inline IngestResult read_records_csv(const std::string& path,
                                     const ColumnMapping& mapping) {
  const auto rows = parse_csv_file(path);
  IngestResult out;
  if (rows.empty()) return out;

  std::map<std::string, std::size_t> col;
  for (std::size_t j = 0; j < rows[0].size(); ++j) col[rows[0][j]] = j;
  auto col_of = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end())
      throw std::invalid_argument("ingest: column '" + name + "' not found in " + path);
    return it->second;
  };
  const std::size_t ci_id = col_of(mapping.area_id);
  const std::size_t ci_y = col_of(mapping.y_hat);
  const std::size_t ci_w = col_of(mapping.w_hat);
  const auto ci_vy = mapping.var_y ? std::optional(col_of(*mapping.var_y)) : std::nullopt;
  const auto ci_my = mapping.moe_y ? std::optional(col_of(*mapping.moe_y)) : std::nullopt;
  const auto ci_vw = mapping.var_w ? std::optional(col_of(*mapping.var_w)) : std::nullopt;
  const auto ci_mw = mapping.moe_w ? std::optional(col_of(*mapping.moe_w)) : std::nullopt;
  const auto ci_x = mapping.x_exact ? std::optional(col_of(*mapping.x_exact)) : std::nullopt;

  std::set<std::string> seen_ids;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const int row_no = static_cast<int>(r) + 1;
    auto fail = [&](const std::string& msg) {
      out.row_errors.emplace_back(row_no, msg);
      ++out.rejected;
    };
    auto cell = [&](std::size_t j) -> std::string {
      return j < cells.size() ? cells[j] : std::string();
    };
    RawAreaRecord rec;
    rec.source_row = row_no;
    rec.area_id = cell(ci_id);
    if (rec.area_id.empty()) {
      fail("empty area_id");
      continue;
    }
    if (!seen_ids.insert(rec.area_id).second) {
      fail("duplicate area_id '" + rec.area_id + "'");
      continue;
    }
    auto num = [&](std::size_t j, const char* what,
                   std::optional<double>& dst) -> bool {
      const auto v = detail::parse_number(cell(j));
      if (!v) {
        fail(std::string("unparseable ") + what + " '" + cell(j) + "'");
        return false;
      }
      dst = v;
      return true;
    };
    std::optional<double> y, w;
    if (!num(ci_y, "y_hat", y) || !num(ci_w, "w_hat", w)) continue;
    rec.y_hat = *y;
    rec.w_hat = *w;
    if (!(rec.y_hat > 0.0)) {
      fail("y_hat must be > 0");
      continue;
    }
    if (!(rec.w_hat > 0.0)) {
      fail("w_hat must be > 0");
      continue;
    }
    bool ok = true;
    if (ci_vy) ok = ok && num(*ci_vy, "var_y", rec.var_y);
    if (ci_my) ok = ok && num(*ci_my, "moe_y", rec.moe_y);
    if (ci_vw) ok = ok && num(*ci_vw, "var_w", rec.var_w);
    if (ci_mw) ok = ok && num(*ci_mw, "moe_w", rec.moe_w);
    if (!ok) continue;
    auto nonneg = [&](const std::optional<double>& v, const char* what) {
      if (v && *v < 0.0) {
        fail(std::string(what) + " must be >= 0");
        return false;
      }
      return true;
    };
    if (!nonneg(rec.var_y, "var_y") || !nonneg(rec.moe_y, "moe_y") ||
        !nonneg(rec.var_w, "var_w") || !nonneg(rec.moe_w, "moe_w"))
      continue;
    if (ci_x && !cell(*ci_x).empty()) {
      if (!num(*ci_x, "x_exact", rec.x_exact)) continue;
    }
    out.records.push_back(std::move(rec));
    ++out.accepted;
  }
  return out;
}

/// Canonical-header writer; paired with the canonical mapping below it
/// round-trips records exactly (full-precision doubles).
inline void write_records_csv(const std::string& path,
                              std::span<const RawAreaRecord> records) {
  Table t;
  t.header = {"area_id", "y_hat", "var_y", "moe_y", "w_hat", "var_w", "moe_w", "x_exact"};
  auto opt = [](const std::optional<double>& v) {
    return v ? fmt_full(*v) : std::string();
  };
  for (const auto& r : records) {
    t.rows.push_back({r.area_id, fmt_full(r.y_hat), opt(r.var_y), opt(r.moe_y),
                      fmt_full(r.w_hat), opt(r.var_w), opt(r.moe_w), opt(r.x_exact)});
  }
  t.write(path);
}

inline ColumnMapping canonical_mapping(bool use_moe = false) {
  ColumnMapping m;
  m.area_id = "area_id";
  m.y_hat = "y_hat";
  m.w_hat = "w_hat";
  if (use_moe) {
    m.moe_y = "moe_y";
    m.moe_w = "moe_w";
  } else {
    m.var_y = "var_y";
    m.var_w = "var_w";
  }
  m.x_exact = "x_exact";
  return m;
}

}  // namespace saeme
