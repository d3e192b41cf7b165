#pragma once

#include "core.hpp"
#include "iv.hpp"
#include "numerics.hpp"

namespace causalkit {

struct RddSpec {
  double cutoff = 0.0;
  double h = std::numeric_limits<double>::infinity();
  int min_per_side = 4;
};

struct RddWindow {
  IVec rows;
  Vec z, r, l;
  int left = 0, right = 0;
};

// Units with |x - x0| <= h; Z = 1(x >= x0) is derived here.
inline RddWindow rdd_window(const Vec& x, const RddSpec& s) {
  if (!(s.h > 0)) throw ValidationError("bandwidth must be positive");
  RddWindow w;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw ValidationError("running variable must be finite");
    if (std::abs(x[i] - s.cutoff) <= s.h) w.rows.push_back(static_cast<int>(i));
  }
  const Eigen::Index m = static_cast<Eigen::Index>(w.rows.size());
  w.z.resize(m);
  w.r.resize(m);
  w.l.resize(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double c = x[w.rows[k]] - s.cutoff;
    w.z[k] = c >= 0 ? 1.0 : 0.0;
    w.r[k] = std::max(c, 0.0);
    w.l[k] = std::min(c, 0.0);
    (c >= 0 ? w.right : w.left)++;
  }
  if (w.left < s.min_per_side || w.right < s.min_per_side)
    throw ValidationError("window needs at least " + std::to_string(s.min_per_side) + " points on each side of the cutoff (left " +
                          std::to_string(w.left) + ", right " + std::to_string(w.right) + ")");
  return w;
}

inline EstimateReport sharp_rdd(const Vec& x, const Vec& y, const RddSpec& s, double alpha = 0.05, HC hc = HC::HC0) {
  require_same_length(x.size(), y.size(), "running variable vs outcome");
  const RddWindow w = rdd_window(x, s);
  const Eigen::Index m = w.z.size();
  const Mat design = hcat({Mat::Ones(m, 1), Mat(w.z), Mat(w.r), Mat(w.l)});
  const LinearFit f = ols(design, subset(y, w.rows));
  auto r = wald_report("sharp_rdd", "tau(x0)", f.coefficients[1], robust_se(f, hc, 1), alpha, static_cast<long>(m));
  r.diagnostics["h"] = s.h;
  r.diagnostics["cutoff"] = s.cutoff;
  r.diagnostics["n_left"] = w.left;
  r.diagnostics["n_right"] = w.right;
  return r;
}

inline EstimateReport fuzzy_rdd(const Vec& x, const Vec& d, const Vec& y, const RddSpec& s, double alpha = 0.05) {
  require_same_length(x.size(), y.size(), "running variable vs outcome");
  require_same_length(x.size(), d.size(), "running variable vs treatment received");
  const RddWindow w = rdd_window(x, s);
  const Eigen::Index m = w.z.size();
  const Vec dw = subset(d, w.rows), yw = subset(y, w.rows);
  const Mat exog = hcat({Mat(w.r), Mat(w.l)});
  const Mat inst = hcat({Mat::Ones(m, 1), Mat(w.z), exog});
  const double jump_d = ols(inst, dw).coefficients[1];
  if (std::abs(jump_d) < kWeakIvThreshold)
    throw WeakInstrumentError("no first-stage jump in treatment received at the cutoff");
  const TslsFit f = tsls_fit(yw, Mat(dw), Mat(w.z), exog);
  auto r = wald_report("fuzzy_rdd", "tau_c(x0)", f.coefficients[1], std::sqrt(f.cov(1, 1)), alpha, static_cast<long>(m));
  r.diagnostics["h"] = s.h;
  r.diagnostics["cutoff"] = s.cutoff;
  r.diagnostics["first_stage_jump"] = jump_d;
  r.diagnostics["n_left"] = w.left;
  r.diagnostics["n_right"] = w.right;
  return r;
}

struct SweepPoint {
  double h = 0;
  std::optional<EstimateReport> report;
  std::string error;
};

// One report per bandwidth; failures are recorded and the sweep continues.
inline std::vector<SweepPoint> bandwidth_sweep(const Vec& x, const Vec& y, const std::optional<Vec>& d, double cutoff,
                                               const std::vector<double>& grid, double alpha = 0.05) {
  if (grid.empty()) throw ValidationError("empty bandwidth grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("bandwidth grid must be strictly increasing");
  std::vector<SweepPoint> out(grid.size());
  parallel_for(grid.size(), [&](std::size_t k) {
    out[k].h = grid[k];
    try {
      const RddSpec s{cutoff, grid[k]};
      out[k].report = d ? fuzzy_rdd(x, *d, y, s, alpha) : sharp_rdd(x, y, s, alpha);
    } catch (const Error& e) {
      out[k].error = e.what();
    }
  });
  return out;
}

// lo, lo + step, ..., up to hi inclusive (with rounding slack).
inline std::vector<double> step_grid(double lo, double hi, double step) {
  if (!(step > 0) || !(hi >= lo)) throw ValidationError("grid needs lo <= hi and step > 0");
  std::vector<double> g;
  const long k = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  for (long i = 0; i <= k; ++i) g.push_back(lo + static_cast<double>(i) * step);
  return g;
}

}  // namespace causalkit
