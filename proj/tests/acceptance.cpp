// One line per acceptance criterion. Exit status is nonzero only for failures outside the
// documented known-failure set (see README, "Known failures").
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pinning/barriers.hpp"
#include "pinning/capacity.hpp"
#include "pinning/cell.hpp"
#include "pinning/hodograph.hpp"
#include "pinning/linearized.hpp"

using namespace pinning;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... a) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

// Worst maximum-principle violation over every strip and ball solve in this run.
double g_violation = 0.0;
int g_solves = 0;

void record(double v) {
  g_violation = std::max(g_violation, v);
  ++g_solves;
}

Vec ball_sample(int i, int d, double rad) {
  Vec u = halton(i, d + 1);
  Vec p(d);
  for (int k = 0; k < d; ++k) p(k) = 2.0 * u(k) - 1.0;
  double n = p.norm();
  if (n == 0.0) return p;
  return p / n * rad * std::pow(u(d), 1.0 / d);
}

Outcome operator_identities() {
  bool ok = true;
  double C = 0.0, CN = 0.0;
  for (int d : {2, 3}) {
    ok = ok && a_matrix(Vec::Zero(d)) == Mat::Identity(d, d);
    for (int i = 1; i <= 10000; ++i) {
      Vec p = ball_sample(i, d, 0.5);
      if (p.norm() == 0.0) continue;
      C = std::max(C, (a_matrix(p) - Mat::Identity(d, d)).operatorNorm() / p.norm());
      Vec pp = p.head(d - 1);
      if (pp.norm() > 0.0) CN = std::max(CN, std::abs(neumann_N(pp)) / pp.squaredNorm());
    }
  }
  // Closed-form constant: sup over |p| <= 1/2 of |A(p) - I| / |p| is 6, attained at p = -e_d/2.
  ok = ok && C <= 6.0 && CN <= 1.0;
  return {ok, fmt("A(0)=I, sampled C=%.4f (closed-form sup 6), sup |N|/|p'|^2=%.4f", C, CN)};
}

Outcome capacity_round_trip() {
  auto field = [](int d, auto v) {
    HodographField f;
    f.d = d;
    f.xs = stretched_nodes(0.125, 2.0, 60.0, 1.08);
    f.zs = f.xs;
    f.v.resize(f.nx() * f.nz());
    for (int j = 0; j < f.nz(); ++j)
      for (int i = 0; i < f.nx(); ++i) f.v(i + f.nx() * j) = v(f.xs[i], f.zs[j]);
    return f;
  };
  CapacityRecord c2 = fit_capacity(field(2, [](double x, double z) { return 3.0 * std::log(std::hypot(x, z)); }), 4, 16);
  CapacityRecord c3 = fit_capacity(field(3, [](double x, double z) { return 2.0 + 0.7 / std::hypot(x, z); }), 4, 16);
  bool ok = std::abs(c2.k + 3.0) < 1e-10 && c2.residual < 1e-10 && std::abs(c3.s + 2.0) < 1e-10 &&
            std::abs(c3.k - 0.7) < 1e-10 && c3.residual < 1e-10;
  return {ok, fmt("d=2 k=%.12f res=%.1e; d=3 (s,k)=(%.12f, %.12f) res=%.1e", c2.k, c2.residual, c3.s, c3.k,
                  c3.residual)};
}

Outcome linearization() {
  Calibration c = calibrate(2, {0.02, 0.01, 0.005});
  const double I0 = 16.0 / 15.0;
  bool cauchy = true, stable = true;
  for (size_t i = 0; i < c.sigmas.size(); ++i) {
    double r = c.k_over_sigma[i] / I0;
    double other = c.c_cal == 1.0 ? 1.0 / M_PI : 1.0;
    stable = stable && std::abs(r - c.c_cal) < std::abs(r - other);
    if (i > 0) cauchy = cauchy && std::abs(c.k_over_sigma[i] - c.k_over_sigma[i - 1]) <= 4.0 * c.sigmas[i - 1];
  }
  double rel = std::abs(c.limit_ratio / c.c_cal - 1.0);
  bool ok = cauchy && stable && rel < 0.02;
  return {ok, fmt("k/sigma = %.5f, %.5f, %.5f; limit = %.5f*I(0); c_cal = %s (rel %.2e)", c.k_over_sigma[0],
                  c.k_over_sigma[1], c.k_over_sigma[2], c.limit_ratio, c.c_cal == 1.0 ? "1" : "1/pi", rel)};
}

Outcome trivial_defect() {
  bool ok = true;
  double kmax = 0.0, res = 0.0;
  for (Direction dir : {Direction::Advancing, Direction::Receding}) {
    PinningSweepResult r = sweep_kappa_R(canonical_bump(2, 0.0), 50.0, dir);
    record(r.bound_violation);
    kmax = std::max(kmax, std::abs(r.kappa_R));
  }
  for (int d : {2, 3})
    for (double s : {-0.5, 0.0, 0.5}) {
      HodographDomain dom;
      dom.d = d;
      dom.L = dom.H = 50.0;
      dom.s = s;
      HodographField f = solve_hodograph(dom, canonical_bump(d, 0.0));
      res = std::max(res, hodograph_residual(dom, canonical_bump(d, 0.0), f));
      ok = ok && (f.v.array() + s).abs().maxCoeff() < 1e-8;
    }
  ok = ok && kmax == 0.0 && res < 1e-8;
  return {ok, fmt("kappa_adv = kappa_rec = %.1e at R=50; planar residual %.1e", kmax, res)};
}

Outcome convergence() {
  std::vector<double> R = {50.0, 100.0, 200.0}, k;
  for (double r : R) {
    PinningSweepResult s = sweep_kappa_R(canonical_bump(2, 0.2), r, Direction::Advancing);
    record(s.bound_violation);
    k.push_back(s.kappa_R);
  }
  double inc = std::abs(k[2] - k[1]) / k[2];
  bool nondecreasing = k[1] >= k[0] - 1e-3 && k[2] >= k[1] - 1e-3;
  bool ok = inc < 0.05 && nondecreasing;
  return {ok, fmt("kappa^R = %.5f, %.5f, %.5f (1/log R = %.5f, %.5f, %.5f); last increment %.1f%%, %s", k[0], k[1],
                  k[2], 1 / std::log(R[0]), 1 / std::log(R[1]), 1 / std::log(R[2]), 100 * inc,
                  nondecreasing ? "nondecreasing" : "decreasing")};
}

Outcome cell_problem() {
  bool ok = true;
  std::string d;
  for (IVec xi : {IVec{{0, 1}}, IVec{{1, 1}}, IVec{{1, 1, 0}}}) {
    CStarReport r = cell_diagnostics(solve_cell(build_lattice(xi), 32));
    ok = ok && r.rel_err_face < 0.01 && r.rel_err_singular < 0.02 && r.cell_average_max < 1e-8 && r.tail_pass;
    d += fmt("[c*=%.6f sing=%.6f/%.6f avg=%.0e tail=%.3f/%.3f] ", r.face_flux_c, r.singular_coefficient,
             r.singular_target, r.cell_average_max, r.tail_rate, r.tail_rate_target);
  }
  return {ok, d};
}

Outcome barrier_suite() {
  PointSource p = barrier_point_source(2.0, 3);
  bool roots = std::abs(p.s0 - (-3 + std::sqrt(5.0)) / 2) < 1e-12 && std::abs(p.s1 - (-3 - std::sqrt(5.0)) / 2) < 1e-12 &&
               std::abs(p.s2 - (-3 - std::sqrt(13.0)) / 2) < 1e-12;
  VerificationReport pv = verify_barrier(p.barrier, 500);
  double z5 = line_sink_depth(5.0) - 5.0;
  double rmax = 0.0;
  for (double R : {4.0, 6.0, 8.0}) rmax = std::max(rmax, (line_sink_depth(R) - R) / (R * std::exp(-R)));
  double cap = line_sink_capacity(5.0);
  SearchResult vs = search_varsigma0(true, 300);
  bool lh = vs.value > 0.0 && verify_barrier(barrier_log_hodograph(vs.value, BarrierRole::Sub), 300).pass &&
            verify_barrier(barrier_log_hodograph(vs.value, BarrierRole::Super), 300).pass;
  SearchResult s3 = search_sigma0(3, 200), s2 = search_sigma0(2, 100);
  bool ss = s3.value > 0.0 && s2.value > 0.0 && verify_barrier(barrier_small_sigma(small_sigma_cap(3), 3), 200).pass &&
            verify_barrier(barrier_small_sigma(small_sigma_cap(2), 2), 100).pass &&
            verify_barrier(barrier_small_sigma(-small_sigma_cap(2), 2), 100).pass;
  bool ok = roots && pv.pass && pv.margin >= 0.0 && z5 > 0.05 && z5 < 0.08 && rmax < 3.0 &&
            std::abs(cap / 10.0 - 1.0) < 0.02 && lh && ss;
  return {ok, fmt("roots %s; point-source margin %.3f; z(5)-5 = %.4f; max ratio %.3f; capacity %.4f; "
                  "varsigma0 = %.4f; sigma0(3) = %.4f, sigma0(2) = %.4f",
                  roots ? "ok" : "bad", pv.margin, z5, rmax, cap, vs.value, s3.value, s2.value)};
}

Outcome expansion() {
  std::vector<QBoundRow> rows =
      estimate_Q_bound({0.2, 0.1, 0.05}, canonical_bump(2, 0.05), build_lattice(IVec{{0, 1}}), Direction::Advancing);
  bool ok = true;
  std::string d;
  for (size_t i = 0; i < rows.size(); ++i) {
    ok = ok && rows[i].ok && rows[i].verified;
    if (i > 0) ok = ok && rows[i].normalized_bound > rows[i - 1].normalized_bound;
    d += fmt("delta=%.2f: %.5f/%.5f ", rows[i].delta, rows[i].normalized_bound, rows[i].prediction);
  }
  double ratio = rows.back().normalized_bound / rows.back().prediction;
  ok = ok && std::abs(ratio - 1.0) <= 0.2;
  return {ok, d + fmt("(ratio %.3f at delta=0.05)", ratio)};
}

Outcome compact_support() {
  bool ok = true;
  double kout = 0.0, kin = INFINITY;
  for (double sg : {0.05, 0.2}) {
    for (double s : {-3.0, -2.5, -2.0, 2.0, 2.5, 3.0}) {
      StripResult r = strip_solve(canonical_bump(3, sg), s, 20.0);
      record(r.bound_violation);
      kout = std::max(kout, std::abs(r.cap.k));
    }
    StripResult c = strip_solve(canonical_bump(3, sg), 0.0, 20.0);
    record(c.bound_violation);
    kin = std::min(kin, c.cap.k);
  }
  ok = kout < 1e-4 && kin > 1e-4;
  return {ok, fmt("max |kappa(s)| for |s| >= 2: %.1e; kappa(0) >= %.4f", kout, kin)};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  const std::set<int> known = {5};
  struct Criterion {
    int id;
    const char* name;
    double limit_s;  // runtime limit, 0 for none
    std::function<Outcome()> run;
  };
  std::vector<Criterion> cs = {
      {1, "operator identities", 1.0, operator_identities},
      {2, "capacity-fit round trip", 1.0, capacity_round_trip},
      {3, "linearization consistency", 0.0, linearization},
      {4, "trivial defect", 0.0, trivial_defect},
      {5, "finite-radius convergence", 0.0, convergence},
      {6, "cell problem", 60.0, cell_problem},
      {7, "barrier suite", 120.0, barrier_suite},
      {8, "expansion trend", 0.0, expansion},
      {10, "compact support", 0.0, compact_support},
  };
  std::map<int, std::string> lines;
  int unexpected = 0;
  auto report = [&](int id, const char* name, Outcome o, double secs) {
    bool k = known.count(id) > 0;
    lines[id] = fmt("criterion %2d %-27s %s  %s  [%.1fs]", id, name,
                    o.pass ? "PASS" : (k ? "FAIL (known)" : "FAIL"), o.detail.c_str(), secs);
    if (!o.pass && !k) ++unexpected;
  };
  for (const Criterion& c : cs) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0.0 && secs > c.limit_s) {
      o.pass = false;
      o.detail += fmt(" (runtime above %.0fs)", c.limit_s);
    }
    report(c.id, c.name, o, secs);
  }
  report(9, "maximum-principle bounds",
         {g_violation <= 1e-8, fmt("worst violation %.1e over %d strip/ball solves", g_violation, g_solves)}, 0.0);
  for (const auto& [id, line] : lines) std::printf("%s\n", line.c_str());
  return unexpected == 0 ? 0 : 1;
}
