#include "pinning/capacity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>

namespace pinning {

namespace {

double strip_kernel(double x, double z, double H) {
  // Alternating image sum; averaging consecutive partial sums accelerates convergence.
  double s = 1.0 / std::hypot(x, z), prev = s;
  const int N = 400;
  for (int n = 1; n <= N; ++n) {
    double sg = (n % 2) ? -1.0 : 1.0;
    prev = s;
    s += sg * (1.0 / std::hypot(x, z - 2.0 * n * H) + 1.0 / std::hypot(x, z + 2.0 * n * H));
  }
  return 0.5 * (s + prev);
}

CapacityRecord fit_two_term(const HodographField& f, double r_min, double r_max, double tol,
                            const std::function<double(double, double)>& basis, bool log_form) {
  if (r_min < 2.0) throw ConfigError("fit window must start at r >= 2");
  if (r_max > f.zs.back() + 1e-9 || r_max > std::abs(f.xs.back()) + 1e-9)
    throw ConfigError("fit window exceeds domain");
  std::vector<double> phi, val;
  for (int j = 0; j < f.nz(); ++j)
    for (int i = 0; i < f.nx(); ++i) {
      double r = std::hypot(f.xs[i], f.zs[j]);
      if (r < r_min || r > r_max) continue;
      phi.push_back(basis(f.xs[i], f.zs[j]));
      val.push_back(f.at(i, j));
    }
  if (phi.size() < 3) throw ConfigError("fit window contains too few nodes");
  Mat A(phi.size(), 2);
  Vec b(phi.size());
  for (size_t n = 0; n < phi.size(); ++n) {
    A(n, 0) = 1.0;
    A(n, 1) = phi[n];
    b(n) = val[n];
  }
  Vec c = A.colPivHouseholderQr().solve(b);
  CapacityRecord rec;
  rec.r_min = r_min;
  rec.r_max = r_max;
  rec.residual = (A * c - b).lpNorm<Eigen::Infinity>();
  rec.s = -c(0);
  rec.k = log_form ? -c(1) : c(1);
  if (!(rec.residual <= tol)) throw NumericError("no flat expansion in window");
  return rec;
}

}  // namespace

CapacityRecord fit_capacity(const HodographField& f, double r_min, double r_max, double tol) {
  if (f.d == 2)
    return fit_two_term(f, r_min, r_max, tol,
                        [](double x, double z) { return 0.5 * std::log(x * x + z * z); }, true);
  return fit_two_term(f, r_min, r_max, tol,
                      [](double x, double z) { return 1.0 / std::hypot(x, z); }, false);
}

CapacityRecord fit_strip_capacity(const HodographField& f, double H, double r_min, double r_max,
                                  double tol) {
  return fit_two_term(f, r_min, r_max, tol,
                      [H](double x, double z) { return strip_kernel(x, z, H); }, false);
}

SingleSiteResult single_site(const DefectProfile& defect, double s, const SingleSiteOptions& o) {
  HodographDomain dom;
  dom.d = defect.d;
  dom.L = o.L;
  dom.H = o.L;
  dom.h = o.h;
  dom.core = o.core;
  dom.stretch = o.stretch;
  dom.s = s;
  dom.closure = OuterClosure::Robin;
  SingleSiteResult r;
  r.field = solve_hodograph(dom, defect, o.solver);
  r.cap = fit_capacity(r.field, o.r_min, o.r_max, INFINITY);
  return r;
}

namespace {

// Signed pinning margin: >= 0 iff the (closed) free-boundary region meets supp q.
double pinned_margin(const HodographField& f, const DefectProfile& q, Direction dir) {
  const double R = q.support_radius;
  double best = -INFINITY;
  const int n = 801;
  for (int k = 0; k < n; ++k) {
    double x = -R + 2.0 * R * k / (n - 1);
    double g = f.value(x, 0.0);
    double cap = std::sqrt(std::max(0.0, R * R - x * x));
    double m = dir == Direction::Advancing ? g + cap : cap - g;
    best = std::max(best, m);
  }
  return best;
}

double sup_gap(const std::vector<Eigen::Vector2d>& a, const std::vector<Eigen::Vector2d>& b) {
  double g = 0.0;
  for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) g = std::max(g, std::abs(a[i](1) - b[i](1)));
  return g;
}

struct BoxSolver {
  const DefectProfile& q;
  double R;
  Direction dir;
  const SweepOptions& o;

  HodographDomain domain(double k) const {
    HodographDomain dom;
    dom.d = 2;
    dom.L = R;
    dom.H = R;
    dom.h = o.h;
    dom.core = o.core;
    dom.stretch = o.stretch;
    dom.closure = OuterClosure::Dirichlet;
    dom.dirichlet_value = -k * std::log(R);
    return dom;
  }

  std::optional<HodographField> solve(double k, const HodographField* from) const {
    HodographDomain dom = domain(k);
    HodographField guess;
    const HodographField* g = nullptr;
    if (from) {
      guess = *from;
      guess.v.array() += dom.dirichlet_value - from->at(0, from->nz() - 1);
      g = &guess;
    }
    try {
      return solve_hodograph(dom, q, o.solver, g);
    } catch (const NumericError&) {
      return std::nullopt;
    }
  }

  bool pinned(const HodographField& f) const {
    return q.active() && pinned_margin(f, q, dir) >= 0.0;
  }

  double violation(const HodographField& f, double k) const {
    const double plane = -k * std::log(R);
    // Advancing: the front lies between the data plane and the top of the support. A positive
    // defect lifts the front above the plane, so the receding check uses the two-sided box.
    double lo = dir == Direction::Advancing ? plane : std::min(plane, -1.0);
    double hi = std::max(plane, 1.0);
    double w = 0.0;
    for (int n = 0; n < f.v.size(); ++n) w = std::max({w, f.v(n) - hi, lo - f.v(n)});
    return w;
  }
};

}  // namespace

PinningSweepResult sweep_kappa_R(const DefectProfile& defect, double R, Direction dir,
                                 const SweepOptions& o) {
  if (defect.d != 2) throw ConfigError("finite-radius sweep is two-dimensional");
  if (R < 20.0 || R > 500.0) throw ConfigError("sweep radius must lie in [20, 500]");
  BoxSolver bs{defect, R, dir, o};
  PinningSweepResult res;
  res.R = R;
  res.direction = dir;
  const double sgn = dir == Direction::Advancing ? 1.0 : -1.0;
  const double lr = std::log(R);
  double k = -sgn / lr;  // data plane touches the far side of the unit ball
  std::optional<HodographField> cur = bs.solve(k, nullptr);
  if (!cur) throw NumericError("no flat solution at the starting plane");
  double last_pinned = NAN, first_detached = NAN;
  std::optional<HodographField> last_pinned_field, first_detached_field;
  int after = 0;
  bool seen_detached = false;
  const double k_end = sgn * 4.0 / lr;
  while (sgn * (k - k_end) <= 0.0) {
    std::optional<HodographField> f = cur ? bs.solve(k, &*cur) : std::nullopt;
    if (!f) f = bs.solve(k, nullptr);  // jump: restart from the data plane
    if (!f) throw NumericError("no flat solution at this (sigma,s)");
    bool p = bs.pinned(*f);
    res.k_grid.push_back(k);
    res.pinned.push_back(p);
    res.front_distance.push_back(pinned_margin(*f, defect, dir));
    res.bound_violation = std::max(res.bound_violation, bs.violation(*f, k));
    if (o.keep_fronts) res.fronts.push_back(f->trace());
    if (p) {
      if (seen_detached) res.monotone = false;
      last_pinned = k;
      last_pinned_field = f;
    } else if (!seen_detached) {
      seen_detached = true;
      first_detached = k;
      first_detached_field = f;
    }
    cur = f;
    if (seen_detached && ++after > 3) break;
    k += sgn * o.dk;
  }
  if (!defect.active() || std::isnan(last_pinned)) {
    res.kappa_R = 0.0;
    return res;
  }
  if (!seen_detached) throw NumericError("pinned through the whole sweep range");
  // Bisection between the last pinned and the first detached k.
  double a = last_pinned, b = first_detached;
  HodographField fa = *last_pinned_field, fb = *first_detached_field;
  while (std::abs(b - a) > o.tolerance) {
    double mid = 0.5 * (a + b);
    std::optional<HodographField> f = bs.solve(mid, &fa);
    if (f && bs.pinned(*f)) {
      res.bound_violation = std::max(res.bound_violation, bs.violation(*f, mid));
      a = mid;
      fa = *f;
    } else {
      if (!f) f = bs.solve(mid, nullptr);
      b = mid;
      if (f) fb = *f;
    }
  }
  res.kappa_R = dir == Direction::Advancing ? std::max(0.0, a) : std::min(0.0, a);
  res.jump_gap = sup_gap(fa.trace(), fb.trace());
  return res;
}

StripResult strip_solve(const DefectProfile& defect, double s, double R, const StripOptions& o) {
  if (defect.d != 3) throw ConfigError("strip problem is three-dimensional");
  if (!(R > -s)) throw ConfigError("strip needs R > -s");
  HodographDomain dom;
  dom.d = 3;
  dom.H = R + s;
  dom.L = std::max(o.lateral_factor * dom.H, 8.0);
  dom.h = o.h;
  dom.core = o.core;
  dom.stretch = o.stretch;
  dom.s = s;
  dom.closure = OuterClosure::Dirichlet;
  dom.dirichlet_value = -s;
  StripResult out;
  try {
    out.field = solve_hodograph(dom, defect, o.solver);
  } catch (const NumericError&) {
    throw NumericError("no pinned solution at s");
  }
  const double lo = std::min(-s, -1.0), hi = std::max(-s, 1.0);
  for (int n = 0; n < out.field.v.size(); ++n)
    out.bound_violation = std::max({out.bound_violation, out.field.v(n) - hi, lo - out.field.v(n)});
  if (out.bound_violation > 1e-8) throw NumericError("strip solution violates maximum-principle bounds");
  out.cap = fit_strip_capacity(out.field, dom.H, o.r_min, 0.5 * dom.H, INFINITY);
  out.cap.s = s;
  return out;
}

KappaCurve kappa_curve(const DefectProfile& defect, const std::vector<double>& s_grid, double R,
                       const StripOptions& o) {
  KappaCurve c;
  c.s = s_grid;
  std::sort(c.s.begin(), c.s.end());
  bool any = false;
  for (double s : c.s) {
    double k = strip_solve(defect, s, R, o).cap.k;
    // A flat solution is unique, so the extremal branches coincide.
    c.kappa_adv.push_back(k);
    c.kappa_rec.push_back(k);
    if (std::abs(k) >= 1e-4) {
      if (!any) c.support_lo = s;
      c.support_hi = s;
      any = true;
    }
  }
  return c;
}

Extremal extremal_capacities(const KappaCurve& c) {
  Extremal e;
  if (c.s.empty()) return e;
  auto refine = [&](const std::vector<double>& y, bool is_max, double& val, double& arg) {
    size_t i = 0;
    for (size_t n = 1; n < y.size(); ++n)
      if (is_max ? y[n] > y[i] : y[n] < y[i]) i = n;
    val = y[i];
    arg = c.s[i];
    if (i == 0 || i + 1 == y.size()) return;
    double x0 = c.s[i - 1], x1 = c.s[i], x2 = c.s[i + 1];
    double y0 = y[i - 1], y1 = y[i], y2 = y[i + 1];
    double den = (x0 - x1) * (x0 - x2) * (x1 - x2);
    double A = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
    double B = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
    double C = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / den;
    if (A == 0.0) return;
    double xs = -B / (2 * A);
    if (xs < x0 || xs > x2) return;
    double ys = (A * xs + B) * xs + C;
    if (is_max ? ys >= val : ys <= val) {
      val = ys;
      arg = xs;
    }
  };
  refine(c.kappa_adv, true, e.k_adv, e.s_adv);
  refine(c.kappa_rec, false, e.k_rec, e.s_rec);
  e.k_adv = std::max(0.0, e.k_adv);
  e.k_rec = std::min(0.0, e.k_rec);
  return e;
}

double extrapolate_kappa(const std::vector<double>& R, const std::vector<double>& kappa, double* slope) {
  Mat A(R.size(), 2);
  Vec b(R.size());
  for (size_t i = 0; i < R.size(); ++i) {
    A(i, 0) = 1.0;
    A(i, 1) = -1.0 / std::log(R[i]);
    b(i) = kappa[i];
  }
  Vec c = A.colPivHouseholderQr().solve(b);
  if (slope) *slope = c(1);
  return c(0);
}

void write_sweep_csv(const std::vector<PinningSweepResult>& sweeps, const std::string& path) {
  std::ofstream o(path);
  if (!o) throw ConfigError("cannot write " + path);
  o << std::setprecision(17) << "R,direction,k,pinned,margin\n";
  for (const auto& s : sweeps)
    for (size_t i = 0; i < s.k_grid.size(); ++i)
      o << s.R << ',' << (s.direction == Direction::Advancing ? "adv" : "rec") << ',' << s.k_grid[i]
        << ',' << s.pinned[i] << ',' << s.front_distance[i] << '\n';
}

void write_curve_csv(const KappaCurve& c, const std::string& path) {
  std::ofstream o(path);
  if (!o) throw ConfigError("cannot write " + path);
  o << std::setprecision(17) << "s,kappa_adv,kappa_rec\n";
  for (size_t i = 0; i < c.s.size(); ++i)
    o << c.s[i] << ',' << c.kappa_adv[i] << ',' << c.kappa_rec[i] << '\n';
}

}  // namespace pinning
