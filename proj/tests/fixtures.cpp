// Checks against published analyses of external datasets. Runs only when
// CAUSALKIT_FIXTURE_DIR names a directory holding some of the files below;
// otherwise exits 77 so ctest reports the test as skipped.
//
//   lalonde.csv       treat, re78 (Matching::lalonde exported to CSV)
//   jobsdata.csv      treat, comply, job_seek
//   mr_bmisbp.csv     beta.exposure, se.exposure, beta.outcome, se.outcome
//   penn46.csv        treatment, duration, quarter
//   nhanes_bmi.csv    row index, School_meal, BMI, covariates...
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "causalkit.hpp"

using namespace causalkit;

namespace {

int ran = 0, failed = 0;

void expect(const char* fixture, const char* what, double got, double want, double tol) {
  const bool ok = std::abs(got - want) <= tol;
  std::printf("%s %s %s: %.8g (want %.8g +/- %.3g)\n", ok ? "PASS" : "FAIL", fixture, what, got, want, tol);
  if (!ok) ++failed;
}

void fixture(const std::string& dir, const char* file, const std::function<void(const Dataset&)>& body) {
  const auto path = std::filesystem::path(dir) / file;
  if (!std::filesystem::exists(path)) {
    std::printf("SKIP %s (not found)\n", file);
    return;
  }
  ++ran;
  try {
    body(load_csv(path.string()));
  } catch (const std::exception& e) {
    std::printf("FAIL %s: %s\n", file, e.what());
    ++failed;
  }
}

}  // namespace

int main() {
  const char* env = std::getenv("CAUSALKIT_FIXTURE_DIR");
  if (!env || !*env) {
    std::printf("CAUSALKIT_FIXTURE_DIR not set; skipping external fixtures\n");
    return 77;
  }
  const std::string dir = env;

  fixture(dir, "lalonde.csv", [](const Dataset& d) {
    const auto r = neyman_cre(d.column("treat"), d.column("re78"));
    expect("lalonde", "neyman", r.estimate, 1794.343, 1794.343e-2);
    expect("lalonde", "neyman_se", r.se, 670.9967, 670.9967e-2);
  });

  fixture(dir, "jobsdata.csv", [](const Dataset& d) {
    const auto r = wald(d.column("treat"), d.column("comply"), d.column("job_seek"));
    expect("jobs", "wald", r.estimate, 0.109, 0.109e-2 + 5e-4);
    expect("jobs", "wald_se", r.se, 0.081, 0.081e-2 + 5e-4);
  });

  fixture(dir, "mr_bmisbp.csv", [](const Dataset& d) {
    const Vec g = d.column("beta.exposure"), sg = d.column("se.exposure");
    const Vec G = d.column("beta.outcome"), sG = d.column("se.outcome");
    const auto a = mr_fixed_effect(g, sg, G, sG, MrVariant::outcome_se_only);
    const auto b = mr_fixed_effect(g, sg, G, sG, MrVariant::full);
    expect("mr", "fisher0", a.estimate, 0.31727680, 0.3173e-2);
    expect("mr", "fisher0_se", a.se, 0.05388827, 0.0539e-2);
    expect("mr", "fisher1", b.estimate, 0.31576007, 0.3158e-2);
    expect("mr", "fisher1_se", b.se, 0.05893783, 0.0589e-2);
    const Vec w = sG.array().square().inverse().matrix();
    expect("mr", "egger_slope", mr_egger(g, G, w, false).slope.estimate, 0.3173, 0.3173e-2);
  });

  fixture(dir, "penn46.csv", [](const Dataset& d) {
    const Vec y = d.column("duration").array().log().matrix();
    const auto r = stratified(d.column("treatment"), y, encode_labels(d.column("quarter")));
    expect("penn", "stratified", r.estimate, -0.08990646, 0.0899e-2);
    expect("penn", "stratified_se", r.se, 0.03079775, 0.0308e-2);
  });

  fixture(dir, "nhanes_bmi.csv", [](const Dataset& d) {
    std::vector<std::string> cov(d.names().begin() + 3, d.names().end());
    const Vec p = ate_point(d.column("School_meal"), d.column("BMI"), d.columns(cov));
    // printed to three decimals
    expect("nhanes", "reg", p[0], -0.017, 5e-4);
    expect("nhanes", "dr", p[3], -0.019, 5e-4);
  });

  std::printf("%d fixture files run, %d checks failed\n", ran, failed);
  if (ran == 0) return 77;
  return failed == 0 ? 0 : 1;
}
