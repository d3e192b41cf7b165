#pragma once

#include "../causalkit.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

namespace causalkit::cli {

struct RunConfig {
  std::string subcommand;
  std::string data;
  std::string treatment, outcome, strata, pair_id, mediator, received, instrument, running;
  std::vector<std::string> covariates, impute;
  std::optional<std::uint64_t> seed;
  int reps = 10000;
  int boot = 0;
  double alpha = 0.05;
  std::string output;
  std::string curve;
  int threads = 0;
};

namespace detail {

using causalkit::detail::fmt17;
using causalkit::detail::num;
using causalkit::detail::parse_number;
using causalkit::detail::trim;

inline std::vector<double> parse_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto v = parse_number(trim(tok));
    if (!v) throw ValidationError(std::string("cannot parse ") + what + ": '" + tok + "'");
    out.push_back(*v);
  }
  if (out.empty()) throw ValidationError(std::string("empty ") + what);
  return out;
}

// "lo,hi,step" -> inclusive grid
inline std::vector<double> parse_step_grid(const std::string& s, const char* what) {
  const auto v = parse_list(s, what);
  if (v.size() != 3) throw ValidationError(std::string(what) + " must be lo,hi,step");
  return step_grid(v[0], v[1], v[2]);
}

inline std::string require_flag(const std::string& v, const char* flag) {
  if (v.empty()) throw ValidationError(std::string(flag) + " is required for this command");
  return v;
}

class Context {
 public:
  Context(const RunConfig& c, std::ostream& out, std::ostream& err) : cfg(c), out_(out), err_(err) {}

  const RunConfig& cfg;

  const Dataset& data() {
    if (!ds_) {
      RoleMap roles;
      auto add = [&](const std::string& col, ColumnRole r) {
        if (!col.empty()) roles.emplace_back(col, r);
      };
      add(cfg.treatment, ColumnRole::treatment);
      add(cfg.outcome, ColumnRole::outcome);
      add(cfg.strata, ColumnRole::stratum);
      add(cfg.pair_id, ColumnRole::pair_id);
      add(cfg.mediator, ColumnRole::mediator);
      add(cfg.received, ColumnRole::treatment_received);
      add(cfg.instrument, ColumnRole::instrument);
      add(cfg.running, ColumnRole::running);
      for (const auto& c : cfg.covariates) add(c, ColumnRole::covariate);
      Dataset ds = load_csv(require_flag(cfg.data, "--data"), roles);
      for (const auto& c : cfg.impute) ds.impute_mean(c);
      const auto findings = validate(ds);
      if (!findings.empty()) {
        std::string msg = "data validation failed:";
        for (const auto& f : findings) {
          msg += " [" + f.code + "] column '" + f.column + "' rows";
          for (std::size_t k = 0; k < f.rows.size() && k < 5; ++k) msg += " " + std::to_string(f.rows[k] + 1);
          if (f.rows.size() > 5) msg += " ...";
          msg += ";";
        }
        throw ValidationError(msg);
      }
      ds_ = std::move(ds);
    }
    return *ds_;
  }

  Vec col(const std::string& name, const char* flag) { return data().column(require_flag(name, flag)); }
  Vec z() { return col(cfg.treatment, "--treatment"); }
  Vec y() { return col(cfg.outcome, "--outcome"); }
  Mat x() {
    const auto& d = data();
    return cfg.covariates.empty() ? Mat(static_cast<Eigen::Index>(d.rows()), 0) : d.columns(cfg.covariates);
  }
  IVec strata() { return encode_labels(col(cfg.strata, "--strata")); }
  BootSpec boot() const { return {cfg.boot, cfg.seed}; }

  // Within-pair differences: from unit rows with --pair-id, else the outcome column holds differences.
  std::pair<Vec, Mat> pair_diffs() {
    if (!cfg.pair_id.empty()) {
      const FrtData d = FrtData::pairs_from_units(encode_labels(col(cfg.pair_id, "--pair-id")), z(), y(), x());
      return {d.diff, d.xdiff};
    }
    return {y(), x()};
  }

  void emit(const Json& doc, const std::vector<EstimateReport>& table = {}) {
    const std::string s = dump_json(doc) + "\n";
    if (cfg.output.empty()) {
      out_ << s;
    } else {
      std::ofstream f(cfg.output, std::ios::binary);
      if (!f) throw ValidationError("cannot open output file: " + cfg.output);
      f << s;
    }
    print_table(table);
  }

  void print_table(const std::vector<EstimateReport>& rs) {
    if (rs.empty()) return;
    err_ << std::left << std::setw(24) << "method" << std::setw(16) << "estimand" << std::right << std::setw(13)
         << "estimate" << std::setw(13) << "se" << std::setw(27) << "ci" << "\n";
    for (const auto& r : rs) {
      std::ostringstream ci;
      ci << std::setprecision(5) << "[" << r.ci_lo << ", " << r.ci_hi << "]";
      err_ << std::left << std::setw(24) << r.method << std::setw(16) << r.estimand << std::right
           << std::setprecision(6) << std::setw(13) << r.estimate << std::setw(13) << r.se << std::setw(27) << ci.str()
           << "\n";
      for (const auto& n : r.notes) err_ << "  note: " << n << "\n";
    }
  }

  void note(const std::string& s) { err_ << s << "\n"; }

  // Plot-ready CSV with a header row, written only when --curve is set.
  void curve(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    if (cfg.curve.empty()) return;
    std::ofstream f(cfg.curve, std::ios::binary);
    if (!f) throw ValidationError("cannot open curve file: " + cfg.curve);
    for (std::size_t j = 0; j < header.size(); ++j) f << (j ? "," : "") << header[j];
    f << "\n";
    for (const auto& r : rows) {
      for (std::size_t j = 0; j < r.size(); ++j) f << (j ? "," : "") << (std::isfinite(r[j]) ? fmt17(r[j]) : "NA");
      f << "\n";
    }
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::optional<Dataset> ds_;
};

inline Json config_json(const RunConfig& c) {
  Json j;
  j["alpha"] = c.alpha;
  if (c.seed) j["seed"] = *c.seed;
  if (!c.data.empty()) j["data"] = c.data;
  return j;
}

inline Json doc(const RunConfig& c, const std::vector<EstimateReport>& rs, Json details = Json::object()) {
  Json j = envelope(c.subcommand, rs, std::move(details));
  j["config"] = config_json(c);
  return j;
}

inline TwoByTwo table_of(const std::vector<double>& v) {
  if (v.size() != 4) throw ValidationError("a 2x2 table needs four counts n11,n10,n01,n00");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace detail

// Builds the parser; handlers run after a successful parse.
class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {
    app_.name("causalkit");
    app_.description("Causal inference toolkit: design-based estimators, randomization tests, weighting, matching, "
                     "sensitivity analysis, instrumental variables, discontinuity designs and mediation.");
    app_.require_subcommand(1);
    app_.add_option("--threads", cfg_.threads, "worker threads (default: CAUSALKIT_THREADS or hardware)")
        ->check(CLI::NonNegativeNumber);
    app_.fallthrough();
    build();
  }

  int run(const std::vector<std::string>& args) {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
      app_.parse(rev);
    } catch (const CLI::CallForHelp&) {
      out_ << app_.help();
      return 0;
    } catch (const CLI::CallForAllHelp&) {
      out_ << app_.help("", CLI::AppFormatMode::All);
      return 0;
    } catch (const CLI::ParseError& e) {
      return usage_error(e.what());
    }
    if (auto* s = active_subcommand()) cfg_.subcommand = s->get_name();
    if (cfg_.threads > 0) set_threads(static_cast<unsigned>(cfg_.threads));
    if (!(cfg_.alpha > 0 && cfg_.alpha < 1)) return usage_error("--alpha must lie in (0,1)");
    try {
      detail::Context ctx(cfg_, out_, err_);
      handler_(ctx);
      return 0;
    } catch (const ValidationError& e) {
      return fail("validation", e.what(), 1);
    } catch (const NumericError& e) {
      return fail("numeric", e.what(), 2);
    } catch (const Error& e) {
      return fail("validation", e.what(), 1);
    } catch (const std::exception& e) {
      return fail("numeric", e.what(), 2);
    }
  }

 private:
  int usage_error(const std::string& msg) {
    err_ << "error: " << msg << "\n\n";
    auto* sub = active_subcommand();
    err_ << (sub ? sub->help() : app_.help());
    Json j;
    j["error"] = {{"kind", "usage"}, {"message", msg}};
    out_ << dump_json(j) << "\n";
    return 1;
  }

  int fail(const std::string& kind, const std::string& msg, int code) {
    err_ << "error (" << kind << "): " << msg << "\n";
    Json j;
    j["error"] = {{"kind", kind}, {"message", msg}};
    if (!cfg_.subcommand.empty()) j["error"]["command"] = cfg_.subcommand;
    out_ << dump_json(j) << "\n";
    return code;
  }

  CLI::App* active_subcommand() {
    for (auto* s : app_.get_subcommands())
      if (s) return s;
    return nullptr;
  }

  CLI::App* sub(const std::string& name, const std::string& desc, bool needs_data) {
    auto* s = app_.add_subcommand(name, desc);
    s->add_option("--alpha", cfg_.alpha, "significance level for intervals")->capture_default_str();
    s->add_option("--output,-o", cfg_.output, "write JSON to this file instead of stdout");
    s->add_option("--seed", cfg_.seed, "64-bit seed; required by every Monte Carlo step");
    if (needs_data) {
      s->add_option("--data", cfg_.data, "CSV file with a header row")->check(CLI::ExistingFile);
      s->add_option("--treatment", cfg_.treatment, "binary treatment column");
      s->add_option("--outcome", cfg_.outcome, "outcome column");
      s->add_option("--covariates", cfg_.covariates, "covariate columns a,b,c")->delimiter(',');
      s->add_option("--strata", cfg_.strata, "stratum column");
      s->add_option("--pair-id", cfg_.pair_id, "pair identifier column");
      s->add_option("--mediator", cfg_.mediator, "mediator / intermediate variable column");
      s->add_option("--received", cfg_.received, "treatment received column");
      s->add_option("--instrument", cfg_.instrument, "instrument column");
      s->add_option("--running", cfg_.running, "running variable column");
      s->add_option("--impute-mean", cfg_.impute, "columns whose missing cells are replaced by the column mean")
          ->delimiter(',');
    }
    return s;
  }

  void build();

  RunConfig cfg_;
  CLI::App app_;
  std::function<void(detail::Context&)> handler_;
  std::ostream& out_;
  std::ostream& err_;

  // subcommand-specific settings
  std::vector<double> counts_;
  std::vector<std::string> stratum_tables_;
  std::string sided_ = "two";
  std::optional<double> rr_;
  std::vector<double> rr_ci_;
  std::string design_ = "cre", stat_ = "diff_means", base_stat_ = "diff_means", strat_ks_ = "sum";
  bool exact_ = false, monte_carlo_ = false, two_sided_ = false;
  double bern_p_ = 0.5, rem_a_ = std::numeric_limits<double>::infinity();
  int ve_variant_ = 1;
  std::string hist_;
  std::string method_;
  std::string population_ = "finite", hc_;
  std::string lag_;
  bool drop_small_ = false;
  std::optional<std::vector<double>> trunc_;
  int K_ = 5;
  std::string family_ = "linear", ipw_kind_ = "hajek", target_ = "ate";
  double att_upper_ = 1.0;
  std::string treatment2_;
  std::vector<std::string> covariates2_;
  std::vector<int> path_ = {1, 1};
  int M_ = 1;
  std::string metric_ = "mahalanobis";
  bool bias_correct_ = false;
  std::optional<double> ymin_, ymax_;
  std::string gamma_grid_ = "1,3,0.01", rstat_ = "pair_t_abs";
  std::string eps1_grid_, eps0_grid_;
  double eps1_ = 1, eps0_ = 1;
  std::string estimator_ = "dr";
  std::string se_method_ = "delta";
  std::string far_mode_ = "cre";
  std::string b_grid_;
  std::string gamma_col_, se_gamma_col_, Gamma_col_, se_Gamma_col_, weight_col_;
  std::string mr_variant_ = "full";
  bool no_intercept_ = false;
  double cutoff_ = 0;
  std::optional<double> h_;
  std::string h_grid_;
  bool fuzzy_ = false;
  int min_side_ = 4;
  bool interaction_ = false;
  double m_level_ = 0;
  std::string kind_ = "z_bias";
  BiasParams bp_;
  long n_ = 1000000;
};

inline void Runner::build() {
  using namespace detail;

  // ---------------------------------------------------------------- twobytwo
  {
    auto* s = sub("twobytwo", "risk difference, risk ratio, odds ratio and Fisher exact test for a 2x2 table", false);
    s->add_option("counts", counts_, "n11 n10 n01 n00 (rows treatment 1/0, columns outcome 1/0)")
        ->expected(4)
        ->required();
    s->add_option("--stratum", stratum_tables_, "stratum table n11,n10,n01,n00 (repeat for Simpson decomposition)");
    s->add_option("--sided", sided_, "exact test alternative")->check(CLI::IsMember({"two", "upper", "lower"}));
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        const TwoByTwo t = table_of(counts_);
        const RiskMeasures m = risk_measures(t, cfg_.alpha);
        const Sided sd = sided_ == "upper" ? Sided::upper : sided_ == "lower" ? Sided::lower : Sided::two;
        const double p = hypergeom_exact(t, sd);
        EstimateReport r;
        r.method = "two_by_two";
        r.estimand = "rd";
        r.estimate = m.rd;
        r.se = m.se_rd;
        r.ci_lo = m.ci_rd.lo;
        r.ci_hi = m.ci_rd.hi;
        r.p_value = p;
        r.n = static_cast<long>(t.n());
        r.notes = m.flags;
        Json det;
        det["measures"] = to_json(m);
        det["exact_test"] = {{"sided", sided_}, {"p_value", p}};
        if (!stratum_tables_.empty()) {
          std::vector<TwoByTwo> st;
          for (const auto& s : stratum_tables_) st.push_back(table_of(parse_list(s, "stratum table")));
          det["simpson"] = to_json(simpson_decompose(st, cfg_.alpha));
        }
        ctx.emit(doc(cfg_, {r}, det), {r});
      };
    });
  }

  // ------------------------------------------------------------------ evalue
  {
    auto* s = sub("evalue", "E-values from four counts or from a risk ratio and its confidence interval", false);
    s->add_option("counts", counts_, "n11 n10 n01 n00")->expected(4);
    s->add_option("--rr", rr_, "risk ratio point estimate");
    s->add_option("--ci", rr_ci_, "risk ratio confidence limits lo,hi")->delimiter(',')->expected(2);
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        double rr = 0, lo = 0, hi = 0;
        if (!counts_.empty()) {
          if (rr_) throw ValidationError("give either four counts or --rr, not both");
          const RiskMeasures m = risk_measures(table_of(counts_), cfg_.alpha);
          rr = m.rr;
          lo = m.ci_rr.lo;
          hi = m.ci_rr.hi;
        } else {
          if (!rr_ || rr_ci_.size() != 2) throw ValidationError("give four counts, or --rr with --ci lo,hi");
          rr = *rr_;
          lo = rr_ci_[0];
          hi = rr_ci_[1];
          if (!(lo <= rr && rr <= hi)) throw ValidationError("risk ratio must lie inside its confidence interval");
        }
        const double bound = rr >= 1 ? lo : hi;
        const auto [ep, ec] = evalue_report(rr, bound);
        Json det;
        det["rr"] = rr;
        det["ci_rr"] = Json::array({num(lo), num(hi)});
        det["evalue_point"] = ep;
        det["evalue_ci"] = ec;
        ctx.emit(doc(cfg_, {}, det));
        ctx.note("RR " + std::to_string(rr) + "  E-value " + std::to_string(ep) + "  (CI limit " + std::to_string(ec) +
                 ")");
      };
    });
  }

  // --------------------------------------------------------------------- frt
  {
    auto* s = sub("frt", "Fisher randomization test of the sharp null", true);
    s->add_option("--design", design_, "assignment mechanism")
        ->check(CLI::IsMember({"cre", "bernoulli", "sre", "mpe", "rem"}));
    s->add_option("--stat", stat_, "test statistic");
    s->add_option("--base-stat", base_stat_, "statistic applied to residuals for pseudo_outcome");
    s->add_option("--strat-ks", strat_ks_, "stratified KS combination")->check(CLI::IsMember({"sum", "max", "pooled"}));
    s->add_option("--van-elteren-variant", ve_variant_, "1: 1/(n1 n0) weights, 2: 1/(n+1)")->check(CLI::Range(1, 2));
    s->add_option("--reps", cfg_.reps, "Monte Carlo draws")->check(CLI::PositiveNumber);
    s->add_flag("--exact", exact_, "enumerate the full assignment support");
    s->add_flag("--monte-carlo", monte_carlo_, "force Monte Carlo");
    s->add_flag("--two-sided", two_sided_, "two-sided p-value around the null center");
    s->add_option("--p", bern_p_, "Bernoulli assignment probability");
    s->add_option("--rem-a", rem_a_, "rerandomization Mahalanobis threshold");
    s->add_option("--hist", hist_, "write replicate statistics to this CSV");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        if (exact_ && monte_carlo_) throw ValidationError("--exact and --monte-carlo are exclusive");
        StatSpec spec;
        spec.id = parse_stat(stat_);
        spec.base = parse_stat(base_stat_);
        spec.van_elteren_variant = ve_variant_;
        spec.strat_ks = strat_ks_ == "max" ? StratKs::max : strat_ks_ == "pooled" ? StratKs::pooled : StratKs::sum;
        FrtData d;
        Vec zobs;
        AssignmentDesign des;
        if (design_ == "mpe") {
          auto [diff, xd] = ctx.pair_diffs();
          d = FrtData::pairs(diff, xd);
          if (d.size() == 0) throw ValidationError("all within-pair differences are zero");
          zobs = Vec::Ones(d.size());
          des = AssignmentDesign::mpe(static_cast<int>(d.size()));
        } else {
          const Vec z = ctx.z();
          const Vec y = ctx.y();
          const Mat x = ctx.x();
          require_binary(z, "treatment");
          const int n1 = static_cast<int>(z.sum()), n0 = static_cast<int>(z.size()) - n1;
          IVec st;
          if (!cfg_.strata.empty()) st = ctx.strata();
          d = FrtData::units(y, x, st);
          zobs = z;
          if (design_ == "cre") des = AssignmentDesign::cre(n1, n0);
          else if (design_ == "bernoulli") des = AssignmentDesign::bernoulli(static_cast<int>(z.size()), bern_p_);
          else if (design_ == "sre") {
            if (st.empty()) throw ValidationError("--design sre needs --strata");
            des = AssignmentDesign::sre_from(st, z);
          } else {
            if (x.cols() == 0) throw ValidationError("--design rem needs --covariates");
            des = AssignmentDesign::rem(n1, n0, x, rem_a_);
          }
        }
        FrtOptions o;
        o.mode = exact_ ? FrtMode::exact : monte_carlo_ ? FrtMode::monte_carlo : FrtMode::automatic;
        o.reps = cfg_.reps;
        o.seed = cfg_.seed;
        o.two_sided = two_sided_;
        o.keep_replicates = !hist_.empty() || !cfg_.curve.empty();
        const RandInferenceResult r = frt(d, zobs, des, spec, o);
        Json det;
        det["design"] = design_;
        det["randomization_test"] = to_json(r);
        ctx.emit(doc(cfg_, {}, det));
        ctx.note(std::string("FRT ") + r.statistic + " observed " + std::to_string(r.observed) + " p " +
                 std::to_string(r.p_hat) + (r.exact ? " (exact, " : " (Monte Carlo, ") + std::to_string(r.count) +
                 " assignments)");
        if (o.keep_replicates) {
          std::vector<std::vector<double>> rows;
          rows.reserve(r.replicates.size());
          for (double v : r.replicates) rows.push_back({v});
          RunConfig c2 = cfg_;
          if (!hist_.empty()) c2.curve = hist_;
          Context(c2, out_, err_).curve({"statistic"}, rows);
        }
      };
    });
  }

  // ---------------------------------------------------------------- estimate
  {
    auto* s = sub("estimate", "design-based estimators for randomized experiments", true);
    s->add_option("--method", method_, "estimator")
        ->required()
        ->check(CLI::IsMember({"neyman", "stratified", "lin", "gain", "mpe"}));
    s->add_option("--population", population_, "variance target for lin")->check(CLI::IsMember({"finite", "super"}));
    s->add_option("--hc", hc_, "robust covariance variant for lin (default HC2)");
    s->add_option("--lag", lag_, "lagged outcome column for gain scores");
    s->add_flag("--drop-small-strata", drop_small_, "drop strata with fewer than 2 units per arm");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        std::vector<EstimateReport> rs;
        if (method_ == "neyman") {
          rs.push_back(neyman_cre(ctx.z(), ctx.y(), cfg_.alpha));
        } else if (method_ == "stratified") {
          rs.push_back(stratified(ctx.z(), ctx.y(), ctx.strata(), cfg_.alpha,
                                  drop_small_ ? SmallStratum::drop : SmallStratum::error));
        } else if (method_ == "lin") {
          const HC hc = hc_.empty() ? HC::HC2 : parse_hc(hc_);
          if (!cfg_.strata.empty()) rs.push_back(lin_sre(ctx.z(), ctx.y(), ctx.x(), ctx.strata(), cfg_.alpha, hc));
          else
            rs.push_back(lin_adjust(ctx.z(), ctx.y(), ctx.x(),
                                    population_ == "super" ? Population::super : Population::finite, cfg_.alpha, hc));
        } else if (method_ == "gain") {
          rs.push_back(gain_score(ctx.z(), ctx.y(), ctx.col(lag_, "--lag"), cfg_.alpha));
        } else {
          auto [diff, xd] = ctx.pair_diffs();
          rs.push_back(mpe(diff, xd, cfg_.alpha));
        }
        ctx.emit(doc(cfg_, rs), rs);
      };
    });
  }

  // --------------------------------------------------------------------- obs
  {
    auto* s = sub("obs", "observational-study estimators based on the propensity score", true);
    s->add_option("--method", method_, "estimator")
        ->required()
        ->check(CLI::IsMember({"stratify", "ipw", "dr", "att", "overlap", "hajek-wls", "balance", "seq-ipw"}));
    s->add_option("--trunc", trunc_, "propensity truncation lo,hi")->delimiter(',')->expected(2);
    s->add_option("--boot", cfg_.boot, "bootstrap replicates (0: point estimates only)")->check(CLI::NonNegativeNumber);
    s->add_option("--K", K_, "number of propensity strata")->check(CLI::PositiveNumber);
    s->add_option("--family", family_, "outcome model family")->check(CLI::IsMember({"linear", "logistic"}));
    s->add_option("--ipw-kind", ipw_kind_, "weighting estimator")->check(CLI::IsMember({"ht", "hajek"}));
    s->add_option("--target", target_, "estimand for hajek-wls and balance")->check(CLI::IsMember({"ate", "att"}));
    s->add_option("--att-upper", att_upper_, "upper truncation of scores for ATT");
    s->add_option("--treatment2", treatment2_, "second-period treatment column (seq-ipw)");
    s->add_option("--covariates2", covariates2_, "second-period covariate columns (seq-ipw)")->delimiter(',');
    s->add_option("--path", path_, "treatment path a1,a2 (seq-ipw)")->delimiter(',')->expected(2);
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        const Vec z = ctx.z(), y = ctx.y();
        const Mat x = ctx.x();
        const Trunc tr = trunc_ ? parse_trunc((*trunc_)[0], (*trunc_)[1]) : Trunc{};
        const OutcomeFamily fam = family_ == "logistic" ? OutcomeFamily::logistic : OutcomeFamily::linear;
        const IpwKind kind = ipw_kind_ == "ht" ? IpwKind::ht : IpwKind::hajek;
        std::vector<EstimateReport> rs;
        if (method_ == "stratify") {
          const Vec e = fit_pscore(x, z, tr.active() ? std::optional<Trunc>(tr) : std::nullopt).scores;
          rs.push_back(ps_stratify(e, z, y, K_, cfg_.alpha));
        } else if (method_ == "ipw") {
          rs.push_back(ipw(z, y, x, kind, tr, ctx.boot(), cfg_.alpha));
        } else if (method_ == "dr") {
          rs = ate_estimators(z, y, x, fam, tr, ctx.boot(), cfg_.alpha);
        } else if (method_ == "att") {
          rs = att_estimators(z, y, x, fam, att_upper_, ctx.boot(), cfg_.alpha);
        } else if (method_ == "overlap") {
          rs.push_back(overlap_weight_tau_O(z, y, x, ctx.boot(), cfg_.alpha));
        } else if (method_ == "hajek-wls") {
          rs.push_back(hajek_wls(z, y, x, target_ == "att" ? Target::att : Target::ate, ctx.boot(), cfg_.alpha));
        } else if (method_ == "balance") {
          const Vec e = fit_pscore(x, z, tr.active() ? std::optional<Trunc>(tr) : std::nullopt).scores;
          const BalanceMethod bm = ipw_kind_ == "hajek" && K_ <= 1 ? BalanceMethod::hajek : BalanceMethod::stratified;
          for (auto& row : balance_check(e, z, x, cfg_.covariates, bm, K_, cfg_.alpha)) {
            row.report.estimand = row.covariate;
            rs.push_back(row.report);
          }
        } else {
          const Vec z2 = ctx.col(treatment2_, "--treatment2");
          const Mat x1 = covariates2_.empty() ? Mat(z.size(), 0) : ctx.data().columns(covariates2_);
          for (int a : path_)
            if (a != 0 && a != 1) throw ValidationError("--path entries must be 0 or 1");
          rs.push_back(sequential_ipw(z, z2, y, x, x1, {path_[0], path_[1]}, kind, ctx.boot(), cfg_.alpha));
        }
        ctx.emit(doc(cfg_, rs), rs);
      };
    });
  }

  // ------------------------------------------------------------------- match
  {
    auto* s = sub("match", "nearest-neighbour matching with replacement", true);
    s->add_option("--M", M_, "matches per unit")->check(CLI::PositiveNumber);
    s->add_option("--metric", metric_, "distance")->check(CLI::IsMember({"euclidean", "mahalanobis"}));
    s->add_option("--target", target_, "estimand")->check(CLI::IsMember({"ate", "att"}));
    s->add_flag("--bias-correct", bias_correct_, "regression bias correction");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        const Mat x = ctx.x();
        if (x.cols() == 0) throw ValidationError("matching needs --covariates");
        auto r = matching_estimate(x, ctx.z(), ctx.y(), M_, parse_metric(metric_),
                                   target_ == "att" ? MatchTarget::att : MatchTarget::ate, bias_correct_, cfg_.alpha);
        ctx.emit(doc(cfg_, {r}), {r});
      };
    });
  }

  // -------------------------------------------------------------------- sens
  {
    auto* s = sub("sens", "bounds and sensitivity analysis", true);
    s->add_option("--method", method_, "analysis")
        ->required()
        ->check(CLI::IsMember({"manski", "survivor", "gamma", "epsilon"}));
    s->add_option("--ymin", ymin_, "outcome lower bound (manski)");
    s->add_option("--ymax", ymax_, "outcome upper bound (manski)");
    s->add_option("--counts", counts_,
                  "survivor counts z1m1y1,z1m1y0,z1m0,z0m1y1,z0m1y0,z0m0 (instead of --data)")
        ->delimiter(',')
        ->expected(6);
    s->add_option("--boot", cfg_.boot, "bootstrap replicates")->check(CLI::NonNegativeNumber);
    s->add_option("--gamma-grid", gamma_grid_, "Gamma grid lo,hi,step");
    s->add_option("--rstat", rstat_, "Rosenbaum statistic")
        ->check(CLI::IsMember({"pair_t_abs", "signed_rank", "sign"}));
    s->add_option("--eps1", eps1_, "epsilon_1 for a single estimate");
    s->add_option("--eps0", eps0_, "epsilon_0 for a single estimate");
    s->add_option("--eps1-grid", eps1_grid_, "epsilon_1 values a,b,c");
    s->add_option("--eps0-grid", eps0_grid_, "epsilon_0 values a,b,c");
    s->add_option("--estimator", estimator_, "estimator under epsilon")->check(CLI::IsMember({"reg", "ht", "hajek", "dr"}));
    s->add_option("--curve", cfg_.curve, "write the sensitivity curve to this CSV");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        if (method_ == "manski") {
          if (!ymin_ || !ymax_) throw ValidationError("manski bounds need --ymin and --ymax");
          const BoundsReport b = manski_bounds(ctx.z(), ctx.y(), *ymin_, *ymax_);
          ctx.emit(doc(cfg_, {}, Json{{"bounds", to_json(b)}}));
          ctx.note("Manski bounds [" + std::to_string(b.lower) + ", " + std::to_string(b.upper) + "]");
        } else if (method_ == "survivor") {
          SurvivorCounts c;
          if (!counts_.empty()) {
            c = {counts_[0], counts_[1], counts_[2], counts_[3], counts_[4], counts_[5]};
          } else {
            const Vec z = ctx.z(), m = ctx.col(cfg_.mediator, "--mediator"), y = ctx.y();
            require_binary(z, "treatment");
            require_binary(m, "survival indicator");
            for (Eigen::Index i = 0; i < z.size(); ++i) {
              const bool t = z[i] == 1.0;
              if (m[i] == 0.0) (t ? c.z1_m0 : c.z0_m0) += 1;
              else if (y[i] == 1.0) (t ? c.z1_m1_y1 : c.z0_m1_y1) += 1;
              else if (y[i] == 0.0) (t ? c.z1_m1_y0 : c.z0_m1_y0) += 1;
              else throw ValidationError("survivor bounds need a binary outcome among survivors");
            }
          }
          const BoundsReport b = survivor_bounds(c, cfg_.alpha, cfg_.boot, cfg_.seed);
          ctx.emit(doc(cfg_, {}, Json{{"bounds", to_json(b)}}));
          ctx.note("survivor average causal effect bounds [" + std::to_string(b.lower) + ", " +
                   std::to_string(b.upper) + "]");
        } else if (method_ == "gamma") {
          auto [diff, xd] = ctx.pair_diffs();
          const auto grid = parse_step_grid(gamma_grid_, "--gamma-grid");
          const SensitivityCurve c = gamma_curve(diff, grid, parse_rosenbaum_stat(rstat_), cfg_.alpha);
          std::vector<std::vector<double>> rows;
          for (std::size_t k = 0; k < c.grid.size(); ++k) rows.push_back({c.grid[k], c.values[k]});
          ctx.curve({"gamma", "p_value"}, rows);
          ctx.emit(doc(cfg_, {}, Json{{"curve", to_json(c)}}));
          if (c.gamma_star) ctx.note("Gamma* = " + std::to_string(*c.gamma_star));
        } else {
          const Vec z = ctx.z(), y = ctx.y();
          const Mat x = ctx.x();
          const EpsEstimator est = parse_eps_estimator(estimator_);
          if (!eps1_grid_.empty() || !eps0_grid_.empty()) {
            const auto g1 = parse_list(require_flag(eps1_grid_, "--eps1-grid"), "--eps1-grid");
            const auto g0 = parse_list(require_flag(eps0_grid_, "--eps0-grid"), "--eps0-grid");
            const Mat tab = epsilon_grid(z, y, x, g1, g0, est);
            std::vector<std::vector<double>> rows;
            Json cells = Json::array();
            for (std::size_t a = 0; a < g1.size(); ++a)
              for (std::size_t b = 0; b < g0.size(); ++b) {
                rows.push_back({g1[a], g0[b], tab(a, b)});
                cells.push_back({{"eps1", g1[a]}, {"eps0", g0[b]}, {"estimate", num(tab(a, b))}});
              }
            ctx.curve({"eps1", "eps0", "estimate"}, rows);
            ctx.emit(doc(cfg_, {}, Json{{"estimator", estimator_}, {"grid", cells}}));
          } else {
            auto r = epsilon_sensitivity(z, y, x, eps1_, eps0_, est, ctx.boot(), cfg_.alpha);
            ctx.emit(doc(cfg_, {r}), {r});
          }
        }
      };
    });
  }

  // ---------------------------------------------------------------------- iv
  {
    auto* s = sub("iv", "instrumental variables", true);
    s->add_option("--method", method_, "analysis")
        ->required()
        ->check(CLI::IsMember({"wald", "binary", "ineq", "tsls", "far", "mr-fe", "mr-egger"}));
    s->add_option("--counts", counts_, "binary IV counts n111,n110,n101,n100,n011,n010,n001,n000 (z,d,y)")
        ->delimiter(',')
        ->expected(8);
    s->add_option("--se", se_method_, "Wald standard error")->check(CLI::IsMember({"delta", "bootstrap"}));
    s->add_option("--boot", cfg_.boot, "bootstrap replicates")->check(CLI::NonNegativeNumber);
    s->add_option("--far-mode", far_mode_, "FAR test")->check(CLI::IsMember({"cre", "cre_covariates", "linear_iv"}));
    s->add_option("--b-grid", b_grid_, "FAR grid lo,hi,step (default Wald +/- 10 SE)");
    s->add_option("--hc", hc_, "robust covariance for regression-based FAR tests (default HC3)");
    s->add_option("--curve", cfg_.curve, "write the FAR p-value curve to this CSV");
    s->add_option("--gamma", gamma_col_, "column of SNP-exposure coefficients (mr)");
    s->add_option("--se-gamma", se_gamma_col_, "their standard errors");
    s->add_option("--Gamma", Gamma_col_, "column of SNP-outcome coefficients");
    s->add_option("--se-Gamma", se_Gamma_col_, "their standard errors");
    s->add_option("--weights", weight_col_, "Egger weights column (default 1/se_Gamma^2)");
    s->add_option("--mr-variant", mr_variant_, "fixed-effect weights")->check(CLI::IsMember({"full", "outcome_se_only"}));
    s->add_flag("--no-intercept", no_intercept_, "Egger regression through the origin");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        auto iv_counts = [&] {
          IvCounts c;
          if (!counts_.empty()) {
            for (int k = 0; k < 8; ++k) c.n[k] = counts_[k];
            return c;
          }
          const Vec z = ctx.col(cfg_.instrument, "--instrument"), d = ctx.col(cfg_.received, "--received"), y = ctx.y();
          require_binary(z, "instrument");
          require_binary(d, "treatment received");
          require_binary(y, "outcome");
          for (Eigen::Index i = 0; i < z.size(); ++i)
            c.n[(1 - static_cast<int>(z[i])) * 4 + (1 - static_cast<int>(d[i])) * 2 + (1 - static_cast<int>(y[i]))] += 1;
          return c;
        };
        std::vector<EstimateReport> rs;
        Json det = Json::object();
        if (method_ == "wald") {
          const Vec z = ctx.col(cfg_.instrument, "--instrument"), d = ctx.col(cfg_.received, "--received"), y = ctx.y();
          const Mat x = ctx.x();
          if (x.cols() > 0) rs.push_back(wald_adjusted(z, d, y, x, cfg_.alpha, cfg_.boot, cfg_.seed));
          else
            rs.push_back(wald(z, d, y, se_method_ == "bootstrap" ? WaldSe::bootstrap : WaldSe::delta, cfg_.alpha,
                              cfg_.boot, cfg_.seed));
        } else if (method_ == "binary") {
          det["decomposition"] = to_json(binary_iv_decompose(iv_counts()));
        } else if (method_ == "ineq") {
          Json a = Json::array();
          bool any = false;
          for (const auto& q : iv_inequalities(iv_counts())) {
            a.push_back(to_json(q));
            any = any || q.negative;
          }
          det["inequalities"] = a;
          det["violation"] = any;
        } else if (method_ == "tsls") {
          const auto& ds = ctx.data();
          auto split = [&](const std::string& s, const char* flag) {
            std::vector<std::string> v;
            std::stringstream ss(require_flag(s, flag));
            std::string t;
            while (std::getline(ss, t, ',')) v.push_back(trim(t));
            return v;
          };
          const auto dn = split(cfg_.received, "--received"), zn = split(cfg_.instrument, "--instrument");
          const Mat D = ds.columns(dn), Z = ds.columns(zn);
          rs = tsls(ctx.y(), D, Z, ctx.x(), cfg_.alpha, dn);
        } else if (method_ == "far") {
          const Vec z = ctx.col(cfg_.instrument, "--instrument"), d = ctx.col(cfg_.received, "--received"), y = ctx.y();
          const FarMode mode = far_mode_ == "linear_iv"        ? FarMode::linear_iv
                               : far_mode_ == "cre_covariates" ? FarMode::cre_covariates
                                                               : FarMode::cre;
          const auto grid = b_grid_.empty() ? far_default_grid(z, d, y) : parse_step_grid(b_grid_, "--b-grid");
          const FarSet f = far_confidence_set(z, d, y, ctx.x(), grid, cfg_.alpha, mode, hc_.empty() ? HC::HC3 : parse_hc(hc_));
          std::vector<std::vector<double>> rows;
          for (std::size_t k = 0; k < f.grid.size(); ++k) rows.push_back({f.grid[k], f.p_values[k]});
          ctx.curve({"b", "p_value"}, rows);
          det["far"] = to_json(f);
        } else {
          const Vec g = ctx.col(gamma_col_, "--gamma"), G = ctx.col(Gamma_col_, "--Gamma");
          const Vec sG = ctx.col(se_Gamma_col_, "--se-Gamma");
          if (method_ == "mr-fe") {
            const Vec sg = ctx.col(se_gamma_col_, "--se-gamma");
            rs.push_back(mr_fixed_effect(g, sg, G, sG,
                                         mr_variant_ == "full" ? MrVariant::full : MrVariant::outcome_se_only,
                                         cfg_.alpha));
          } else {
            const Vec w = weight_col_.empty() ? Vec(sG.array().square().inverse().matrix()) : ctx.col(weight_col_, "--weights");
            const EggerReport e = mr_egger(g, G, w, !no_intercept_, cfg_.alpha);
            rs.push_back(e.slope);
            if (e.intercept) rs.push_back(*e.intercept);
          }
        }
        ctx.emit(doc(cfg_, rs, det), rs);
        if (det.contains("decomposition")) ctx.note(dump_json(det["decomposition"]));
        if (det.contains("far")) ctx.note(dump_json(det["far"]));
      };
    });
  }

  // --------------------------------------------------------------------- rdd
  {
    auto* s = sub("rdd", "sharp and fuzzy regression discontinuity", true);
    s->set_help_flag("--help", "Print this help message and exit");
    s->add_option("--cutoff", cutoff_, "cutoff x0")->required();
    s->add_option("--h", h_, "bandwidth (default: all data)");
    s->add_option("--h-grid", h_grid_, "bandwidth sweep lo,hi,step");
    s->add_flag("--fuzzy", fuzzy_, "fuzzy design; needs --received");
    s->add_option("--min-per-side", min_side_, "minimum points on each side")->check(CLI::PositiveNumber);
    s->add_option("--curve", cfg_.curve, "write the bandwidth sweep to this CSV");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        const Vec x = ctx.col(cfg_.running, "--running"), y = ctx.y();
        std::optional<Vec> d;
        if (fuzzy_) d = ctx.col(cfg_.received, "--received");
        if (h_ && !h_grid_.empty()) throw ValidationError("--h and --h-grid are exclusive");
        if (h_grid_.empty()) {
          RddSpec spec{cutoff_, h_.value_or(std::numeric_limits<double>::infinity()), min_side_};
          auto r = d ? fuzzy_rdd(x, *d, y, spec, cfg_.alpha) : sharp_rdd(x, y, spec, cfg_.alpha);
          ctx.emit(doc(cfg_, {r}), {r});
          return;
        }
        const auto grid = parse_step_grid(h_grid_, "--h-grid");
        const auto sweep = bandwidth_sweep(x, y, d, cutoff_, grid, cfg_.alpha);
        std::vector<EstimateReport> rs;
        Json failures = Json::array();
        std::vector<std::vector<double>> rows;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        for (const auto& p : sweep) {
          if (p.report) {
            rs.push_back(*p.report);
            rows.push_back({p.h, p.report->estimate, p.report->se, p.report->ci_lo, p.report->ci_hi});
          } else {
            failures.push_back({{"h", p.h}, {"error", p.error}});
            rows.push_back({p.h, nan, nan, nan, nan});
          }
        }
        ctx.curve({"h", "estimate", "se", "ci_lo", "ci_hi"}, rows);
        ctx.emit(doc(cfg_, rs, Json{{"skipped_bandwidths", failures}}), rs);
      };
    });
  }

  // ----------------------------------------------------------------- mediate
  {
    auto* s = sub("mediate", "mediation and principal stratification", true);
    s->add_option("--method", method_, "analysis")->required()->check(CLI::IsMember({"bk", "formula", "pscore", "cde"}));
    s->add_flag("--interaction", interaction_, "treatment-mediator interaction in the outcome model (bk)");
    s->add_option("--hc", hc_, "robust covariance for bk (default HC3)");
    s->add_option("--m-level", m_level_, "mediator level for the controlled direct effect");
    s->add_option("--estimator", estimator_, "cde estimator")->check(CLI::IsMember({"reg", "ht", "hajek", "dr"}));
    s->add_option("--boot", cfg_.boot, "bootstrap replicates")->check(CLI::NonNegativeNumber);
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        const Vec z = ctx.z(), m = ctx.col(cfg_.mediator, "--mediator"), y = ctx.y();
        const Mat x = ctx.x();
        std::vector<EstimateReport> rs;
        Json det = Json::object();
        auto add = [&](const MediationReport& r) {
          rs.push_back(r.nde);
          rs.push_back(r.nie);
          for (const auto& [k, v] : r.diagnostics) det[k] = num(v);
        };
        if (method_ == "bk") {
          if (interaction_) add(baron_kenny_interaction(z, m, y, x, ctx.boot(), cfg_.alpha));
          else add(baron_kenny(z, m, y, x, cfg_.alpha, hc_.empty() ? HC::HC3 : parse_hc(hc_)));
        } else if (method_ == "formula") {
          add(mediation_formula_binary_m(z, m, y, x, ctx.boot(), cfg_.alpha));
        } else if (method_ == "pscore") {
          rs = principal_score_weighting(z, m, y, x, ctx.boot(), cfg_.alpha);
        } else {
          rs.push_back(cde_estimators(z, m, y, x, m_level_, parse_eps_estimator(estimator_), ctx.boot(), cfg_.alpha));
        }
        ctx.emit(doc(cfg_, rs, det), rs);
      };
    });
  }

  // --------------------------------------------------------------- bias-demo
  {
    auto* s = sub("bias-demo", "simulated M-bias and Z-bias against closed forms", false);
    s->add_option("--kind", kind_, "demo")->check(CLI::IsMember({"m_bias", "z_bias"}));
    s->add_option("--a", bp_.a, "coefficient a");
    s->add_option("--b", bp_.b, "coefficient b");
    s->add_option("--c", bp_.c, "coefficient c");
    s->add_option("--d", bp_.d, "coefficient d (m_bias)");
    s->add_option("--tau", bp_.tau, "true effect (z_bias)");
    s->add_option("--n", n_, "sample size (>= 10000)");
    s->final_callback([this] {
      handler_ = [this](Context& ctx) {
        if (!cfg_.seed) throw ValidationError("bias-demo is a simulation and requires --seed");
        const BiasDemoReport r = bias_demo(parse_bias_kind(kind_), bp_, n_, *cfg_.seed);
        ctx.emit(doc(cfg_, {}, Json{{"bias_demo", to_json(r)}}));
        std::ostringstream os;
        os << std::setprecision(6) << "unadjusted " << r.unadjusted.estimate << " (target " << r.unadjusted.target
           << ")  adjusted " << r.adjusted.estimate << " (target " << r.adjusted.target << ")";
        ctx.note(os.str());
      };
    });
  }
}

// Entry point shared by the executable and the tests. args excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Runner r(out, err);
  return r.run(args);
}

}  // namespace causalkit::cli
