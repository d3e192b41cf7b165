#pragma once

#include "bias_demo.hpp"
#include "contingency.hpp"
#include "core.hpp"
#include "iv.hpp"
#include "mediation.hpp"
#include "randomization.hpp"
#include "rdd.hpp"
#include "sensitivity.hpp"

#include <cstdio>

#include "json.hpp"

namespace causalkit {

using Json = nlohmann::ordered_json;

namespace detail {

inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json num(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s(buf);
  // keep a marker that the value is real
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline void dump_rec(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += pad;
        out += Json(it.key()).dump();
        out += indent > 0 ? ": " : ":";
        dump_rec(it.value(), out, indent, depth + 1);
      }
      out += close;
      out += '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ',';
        first = false;
        out += pad;
        dump_rec(v, out, indent, depth + 1);
      }
      out += close;
      out += ']';
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? fmt17(v) : "null";
      return;
    }
    default: out += j.dump();
  }
}

}  // namespace detail

// Serializer with every real number at 17 significant digits; non-finite values become null.
inline std::string dump_json(const Json& j, int indent = 2) {
  std::string out;
  detail::dump_rec(j, out, indent, 0);
  return out;
}

inline Json interval_json(const Interval& i) { return Json::array({detail::num(i.lo), detail::num(i.hi)}); }

inline Json to_json(const EstimateReport& r) {
  Json j;
  j["method"] = r.method;
  j["estimand"] = r.estimand;
  j["estimate"] = detail::num(r.estimate);
  j["se"] = detail::num(r.se);
  j["ci"] = Json::array({detail::num(r.ci_lo), detail::num(r.ci_hi)});
  if (r.p_value) j["p_value"] = detail::num(*r.p_value);
  j["n"] = r.n;
  Json d = Json::object();
  for (const auto& [k, v] : r.diagnostics) d[k] = detail::num(v);
  j["diagnostics"] = d;
  if (!r.notes.empty()) j["notes"] = r.notes;
  return j;
}

inline Json to_json(const RiskMeasures& m) {
  Json j;
  j["rd"] = detail::num(m.rd);
  j["rr"] = detail::num(m.rr);
  j["or"] = detail::num(m.or_);
  j["se_rd"] = detail::num(m.se_rd);
  j["se_log_rr"] = detail::num(m.se_log_rr);
  j["se_log_or"] = detail::num(m.se_log_or);
  j["ci_rd"] = interval_json(m.ci_rd);
  j["ci_rr"] = interval_json(m.ci_rr);
  j["ci_or"] = interval_json(m.ci_or);
  j["flags"] = m.flags;
  return j;
}

inline Json to_json(const SimpsonReport& s) {
  Json j;
  j["pooled"] = to_json(s.pooled);
  Json st = Json::array();
  for (const auto& m : s.strata) st.push_back(to_json(m));
  j["strata"] = st;
  j["simpson_flip"] = s.flip;
  j["stratum_flips"] = s.stratum_flips;
  return j;
}

inline Json to_json(const RandInferenceResult& r) {
  Json j;
  j["statistic"] = r.statistic;
  j["observed"] = detail::num(r.observed);
  j["exact"] = r.exact;
  j["count"] = r.count;
  j["p_hat"] = detail::num(r.p_hat);
  j["p_valid"] = detail::num(r.p_valid);
  j["mc_se"] = detail::num(r.mc_se);
  j["two_sided"] = r.two_sided;
  return j;
}

inline Json to_json(const BoundsReport& b) {
  Json j;
  j["lower"] = detail::num(b.lower);
  j["upper"] = detail::num(b.upper);
  j["se_lower"] = detail::num(b.se_lower);
  j["se_upper"] = detail::num(b.se_upper);
  j["ci"] = b.ci ? interval_json(*b.ci) : Json(nullptr);
  Json d = Json::object();
  for (const auto& [k, v] : b.diagnostics) d[k] = detail::num(v);
  j["diagnostics"] = d;
  return j;
}

inline Json to_json(const SensitivityCurve& c) {
  Json j;
  j["gamma_star"] = detail::num(c.gamma_star);
  j["gamma_star_grid"] = detail::num(c.gamma_star_grid);
  j["grid_points"] = c.grid.size();
  return j;
}

inline Json to_json(const FarSet& f) {
  Json j;
  j["shape"] = far_shape_name(f.shape);
  Json s = Json::array();
  for (const auto& i : f.set) s.push_back(interval_json(i));
  j["set"] = s;
  j["touches_grid_edge"] = f.touches_grid_edge;
  j["point"] = detail::num(f.point);
  j["grid_points"] = f.grid.size();
  return j;
}

inline Json to_json(const IvBinarySummary& s) {
  Json j;
  j["pi_c"] = detail::num(s.pi_c);
  j["pi_n"] = detail::num(s.pi_n);
  j["pi_a"] = detail::num(s.pi_a);
  j["mu_c1"] = detail::num(s.mu_c1);
  j["mu_c0"] = detail::num(s.mu_c0);
  j["mu_n1"] = detail::num(s.mu_n1);
  j["mu_n0"] = detail::num(s.mu_n0);
  j["mu_a1"] = detail::num(s.mu_a1);
  j["mu_a0"] = detail::num(s.mu_a0);
  j["tau_c"] = detail::num(s.tau_c);
  j["violation"] = s.violation;
  j["warnings"] = s.warnings;
  return j;
}

inline Json to_json(const IvInequality& q) {
  Json j;
  j["q"] = q.q;
  j["estimate"] = detail::num(q.estimate);
  j["se"] = detail::num(q.se);
  j["negative"] = q.negative;
  return j;
}

inline Json to_json(const BiasDemoReport& r) {
  auto coef = [](const CoefEstimate& c) {
    Json j;
    j["estimate"] = detail::num(c.estimate);
    j["mc_se"] = detail::num(c.se);
    j["target"] = detail::num(c.target);
    return j;
  };
  Json j;
  j["kind"] = r.kind == BiasKind::m_bias ? "m_bias" : "z_bias";
  j["params"] = {{"a", r.params.a}, {"b", r.params.b}, {"c", r.params.c}, {"d", r.params.d}, {"tau", r.params.tau}};
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["unadjusted"] = coef(r.unadjusted);
  j["adjusted"] = coef(r.adjusted);
  return j;
}

// Top-level document: {command, results: [EstimateReport...], details: {...}}.
inline Json envelope(const std::string& command, const std::vector<EstimateReport>& results,
                     Json details = Json::object()) {
  Json j;
  j["command"] = command;
  Json rs = Json::array();
  for (const auto& r : results) rs.push_back(to_json(r));
  j["results"] = rs;
  j["details"] = std::move(details);
  return j;
}

}  // namespace causalkit
