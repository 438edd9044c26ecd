#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pinning/capacity.hpp"

using namespace pinning;

namespace {

HodographField synthetic(int d, double L, const std::function<double(double, double)>& v) {
  HodographField f;
  f.d = d;
  f.xs = stretched_nodes(0.125, 2.0, L, 1.08);
  if (d == 2) {
    std::vector<double> neg;
    for (auto it = f.xs.rbegin(); it != f.xs.rend(); ++it)
      if (*it > 0.0) neg.push_back(-*it);
    neg.insert(neg.end(), f.xs.begin(), f.xs.end());
    f.xs = neg;
  }
  f.zs = stretched_nodes(0.125, 2.0, L, 1.08);
  f.v.resize(f.nx() * f.nz());
  for (int j = 0; j < f.nz(); ++j)
    for (int i = 0; i < f.nx(); ++i) f.v(i + f.nx() * j) = v(f.xs[i], f.zs[j]);
  return f;
}

// Image sum for the Dirichlet top at y_d = H.
double strip_image(double x, double z, double H) {
  double s = 0.0;
  for (int n = -2000; n <= 2000; ++n) s += (n % 2 ? -1.0 : 1.0) / std::hypot(x, z - 2.0 * n * H);
  return s;
}

}  // namespace

TEST_CASE("log ansatz round trip") {
  HodographField f = synthetic(2, 60.0, [](double x, double z) { return 3.0 * std::log(std::hypot(x, z)); });
  CapacityRecord c = fit_capacity(f, 4.0, 16.0);
  CHECK(c.k == doctest::Approx(-3.0).epsilon(1e-12));
  CHECK(std::abs(c.s) < 1e-10);
  CHECK(c.residual < 1e-10);
  CHECK(c.convention == "physical");
}

TEST_CASE("inverse-distance ansatz round trip") {
  HodographField f = synthetic(3, 60.0, [](double x, double z) { return 2.0 + 0.7 / std::hypot(x, z); });
  CapacityRecord c = fit_capacity(f, 4.0, 16.0);
  CHECK(c.s == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(c.k == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(c.residual < 1e-10);
}

TEST_CASE("strip ansatz round trip") {
  const double H = 20.0;
  HodographField f = synthetic(3, H, [H](double x, double z) { return -0.3 + 0.05 * strip_image(x, z, H); });
  CapacityRecord c = fit_strip_capacity(f, H, 3.0, 10.0);
  CHECK(c.k == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(c.s == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("fit rejects fields without a flat expansion") {
  HodographField f = synthetic(2, 60.0, [](double x, double z) { return 0.1 * std::sin(x) * z; });
  CHECK_THROWS_AS(fit_capacity(f, 4.0, 16.0), NumericError);
  CHECK_THROWS_AS(fit_capacity(f, 1.0, 16.0), ConfigError);
  CHECK_THROWS_AS(fit_capacity(f, 4.0, 100.0), ConfigError);
}

TEST_CASE("single site with no defect has zero capacity") {
  SingleSiteOptions o;
  o.L = 40.0;
  for (int d : {2, 3}) {
    SingleSiteResult r = single_site(canonical_bump(d, 0.0), 0.3, o);
    CHECK(std::abs(r.cap.k) < 1e-12);
    CHECK(r.cap.s == doctest::Approx(0.3));
  }
}

TEST_CASE("single site capacity sign and O(sigma^2) refinement") {
  SingleSiteOptions o;
  std::vector<double> ratio;
  for (double sg : {0.02, 0.01, 0.005}) {
    double k = single_site(canonical_bump(2, sg), 0.0, o).cap.k;
    CHECK(k > 0.0);
    ratio.push_back(k / sg);
  }
  CHECK(std::abs(ratio[1] - ratio[0]) <= 4.0 * 0.02);
  CHECK(std::abs(ratio[2] - ratio[1]) <= 4.0 * 0.01);
  // increments halve with sigma
  CHECK(std::abs(ratio[2] - ratio[1]) < 0.75 * std::abs(ratio[1] - ratio[0]));
}

TEST_CASE("trivial defect sweeps give zero") {
  SweepOptions o;
  for (Direction dir : {Direction::Advancing, Direction::Receding}) {
    PinningSweepResult r = sweep_kappa_R(canonical_bump(2, 0.0), 20.0, dir, o);
    CHECK(r.kappa_R == 0.0);
    CHECK(r.bound_violation <= 1e-8);
    for (int p : r.pinned) CHECK(p == 0);
  }
}

TEST_CASE("sweep preconditions") {
  CHECK_THROWS_AS(sweep_kappa_R(canonical_bump(3, 0.1), 50.0, Direction::Advancing), ConfigError);
  CHECK_THROWS_AS(sweep_kappa_R(canonical_bump(2, 0.1), 10.0, Direction::Advancing), ConfigError);
  CHECK_THROWS_AS(strip_solve(canonical_bump(2, 0.1), 0.0, 20.0), ConfigError);
  CHECK_THROWS_AS(strip_solve(canonical_bump(3, 0.1), -30.0, 20.0), ConfigError);
}

TEST_CASE("positive bump sweep at R = 50") {
  const double R = 50.0;
  DefectProfile q = canonical_bump(2, 0.2);
  SweepOptions o;
  PinningSweepResult adv = sweep_kappa_R(q, R, Direction::Advancing, o);
  CHECK(adv.kappa_R > 0.0);
  CHECK(adv.monotone);
  CHECK(adv.bound_violation <= 1e-8);
  PinningSweepResult rec = sweep_kappa_R(q, R, Direction::Receding, o);
  CHECK(rec.kappa_R <= 0.0);
  CHECK(rec.bound_violation <= 1e-8);
  CHECK(rec.monotone);

  // Capacitory lower bound: u >= x_d + k log|x| - C on far-field nodes with one C.
  HodographDomain dom;
  dom.L = R;
  dom.H = R;
  dom.closure = OuterClosure::Dirichlet;
  dom.dirichlet_value = -adv.kappa_R * std::log(R);
  HodographField f = solve_hodograph(dom, q);
  double C = -INFINITY;
  for (int j = 0; j < f.nz(); ++j)
    for (int i = 0; i < f.nx(); ++i) {
      double xd = f.zs[j] + f.at(i, j);
      double r = std::hypot(f.xs[i], xd);
      if (r < 4.0) continue;
      C = std::max(C, xd + adv.kappa_R * std::log(r) - f.zs[j]);
    }
  CHECK(C <= 1.0);
}

TEST_CASE("strip: trivial defect and compact support") {
  StripOptions o;
  CHECK(std::abs(strip_solve(canonical_bump(3, 0.0), 0.0, 20.0, o).cap.k) < 1e-10);
  for (double s : {-2.5, -2.0, 2.0, 2.5}) {
    StripResult r = strip_solve(canonical_bump(3, 0.05), s, 20.0, o);
    CHECK(std::abs(r.cap.k) < 1e-4);
    CHECK(r.bound_violation <= 1e-8);
  }
  StripResult mid = strip_solve(canonical_bump(3, 0.05), 0.0, 20.0, o);
  CHECK(mid.cap.k > 0.0);
  CHECK(mid.bound_violation <= 1e-8);
}

TEST_CASE("extremal capacities") {
  KappaCurve zero;
  zero.s = {-1.0, 0.0, 1.0};
  zero.kappa_adv = zero.kappa_rec = {0.0, 0.0, 0.0};
  Extremal e0 = extremal_capacities(zero);
  CHECK(e0.k_adv == 0.0);
  CHECK(e0.k_rec == 0.0);

  KappaCurve c = kappa_curve(canonical_bump(3, 0.05), {-0.4, -0.2, 0.0, 0.2, 0.4}, 20.0);
  Extremal e = extremal_capacities(c);
  CHECK(e.k_adv > 0.0);
  CHECK(std::abs(e.k_rec) < 1e-4);
  CHECK(std::abs(e.s_adv) < 0.2);
}

TEST_CASE("log-radius extrapolation recovers an exact model") {
  std::vector<double> R = {50.0, 100.0, 200.0}, k;
  for (double r : R) k.push_back(0.07 - 0.3 / std::log(r));
  double slope = 0.0;
  CHECK(extrapolate_kappa(R, k, &slope) == doctest::Approx(0.07).epsilon(1e-12));
  CHECK(slope == doctest::Approx(0.3).epsilon(1e-12));
}
