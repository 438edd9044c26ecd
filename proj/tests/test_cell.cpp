#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pinning/cell.hpp"

using namespace pinning;

namespace {

IVec iv(std::initializer_list<int> l) {
  IVec v(int(l.size()));
  int i = 0;
  for (int x : l) v(i++) = x;
  return v;
}

Vec vec(std::initializer_list<double> l) {
  Vec v(int(l.size()));
  int i = 0;
  for (double x : l) v(i++) = x;
  return v;
}

const InnerProfile& bump_inner() {
  static const InnerProfile p = flat_branch_inner(canonical_bump(2, 0.05), {-0.2, -0.1, 0.0, 0.1, 0.2});
  return p;
}

}  // namespace

TEST_CASE("c_* equals |xi|") {
  for (IVec xi : {iv({0, 1}), iv({1, 1}), iv({1, 1, 0})}) {
    CellSolution c = solve_cell(build_lattice(xi), 32);
    CStarReport r = cell_diagnostics(c);
    INFO("xi = " << xi.transpose());
    CHECK(check_c_star(c) < 0.01);
    CHECK(r.face_flux_c == doctest::Approx(xi.cast<double>().norm()).epsilon(0.01));
    CHECK(r.rel_err_hemisphere < 0.01);
    CHECK(r.rel_err_singular < 0.02);
    CHECK(r.singular_target == doctest::Approx(xi.cast<double>().norm() / gamma_d(c.d)));
    CHECK(r.cell_average_max < 1e-8);
    CHECK(r.tail_pass);
    CHECK(r.odd_part_max < 1e-6);
  }
}

TEST_CASE("singular coefficient for the axis lattice") {
  CellSolution c = solve_cell(build_lattice(iv({0, 1})), 32);
  CHECK(c.singular_coefficient == doctest::Approx(1.0 / M_PI).epsilon(0.02));
}

TEST_CASE("truncation independence") {
  LatticeSpec L = build_lattice(iv({0, 1}));
  CellSolution a = solve_cell(L, 64), b = solve_cell(L, 128);
  CHECK(std::abs(a.value(vec({0.5, 0.5})) - b.value(vec({0.5, 0.5}))) < 1e-8);
  CHECK_THROWS_AS(solve_cell(L, 16), ConfigError);
  CHECK_THROWS_AS(solve_cell(L, 32, 0.0), ConfigError);
}

TEST_CASE("normalization constant for the axis lattice") {
  // omega = -(1/2pi) log(4 sinh^2(t/2) + 4 sin^2(x/2)) up to x_d and c0; its boundary minimum sits at x = 1/2.
  CellSolution c = solve_cell(build_lattice(iv({0, 1})), 32);
  CHECK(c.c0 == doctest::Approx(std::log(2.0) / M_PI).epsilon(1e-9));
}

TEST_CASE("boundary minimum is zero and omega is periodic") {
  for (IVec xi : {iv({1, 1}), iv({1, 1, 0})}) {
    LatticeSpec L = build_lattice(xi);
    CellSolution c = solve_cell(L, 32);
    const int d = c.d;
    double m = INFINITY;
    for (int i = 1; i <= 400; ++i) {
      Vec u = halton(i, d - 1), x = Vec::Zero(d);
      for (int k = 0; k < d - 1; ++k) x += (u(k) - 0.5) * L.basis[k];
      if (x.norm() < 0.05) continue;
      m = std::min(m, c.value(x));
    }
    CHECK(m >= -1e-9);
    CHECK(m < 0.01);
    for (int i = 1; i <= 20; ++i) {
      Vec x = halton(i, d);
      x(d - 1) = 0.1 + 0.5 * x(d - 1);
      for (const Vec& z : L.basis) CHECK(c.value(x + z) == doctest::Approx(c.value(x)).epsilon(1e-10));
    }
  }
}

TEST_CASE("spectral and near-field forms agree") {
  for (IVec xi : {iv({1, 1}), iv({1, 1, 0})}) {
    CellSolution c = solve_cell(build_lattice(xi), 32);
    for (int i = 1; i <= 20; ++i) {
      Vec x = halton(i, c.d) * 0.7;
      x(c.d - 1) = c.switch_height * (1.0 + x(c.d - 1));
      CHECK(c.spectral_value(x) == doctest::Approx(c.near_value(x)).epsilon(1e-10));
      CHECK((c.spectral_gradient(x) - c.near_gradient(x)).norm() < 1e-9);
    }
  }
}

TEST_CASE("linearity in the Neumann data") {
  for (IVec xi : {iv({0, 1}), iv({1, 1, 0})}) {
    LatticeSpec L = build_lattice(xi);
    CellSolution one = solve_cell(L, 32), two = solve_cell(L, 32, 2.0);
    for (int i = 1; i <= 10; ++i) {
      Vec x = halton(i, one.d);
      x(one.d - 1) = 0.05 + x(one.d - 1);
      CHECK(two.value(x) - two.c0 == doctest::Approx(2.0 * (one.value(x) - one.c0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("gamma_3 normalization") {
  CHECK(gamma_d(3) == doctest::Approx(0.5 * 3 * 1 * unit_ball_volume(3)));
  CHECK(gamma_d(3) == doctest::Approx(2.0 * M_PI));
  CHECK(gamma_d(2) == doctest::Approx(M_PI));
}

TEST_CASE("trivial inner profile gives the tilted plane") {
  CellSolution c = solve_cell(build_lattice(iv({0, 1})), 32);
  PatchedBarrier p = assemble_patched_barrier(inner_plane(2), c, canonical_bump(2, 0.0), 0.1, 0.0);
  CHECK(p.k == 0.0);
  CHECK(p.a == 0.0);
  CHECK(p.slope == doctest::Approx(1.0 - p.alpha));
  CHECK(p.alpha == 0.0);
  CHECK(p.normalized_bound == 0.0);
  for (int i = 1; i <= 20; ++i) {
    Vec x = 2.0 * halton(i, 2) - Vec::Constant(2, 1.0);
    x(1) += 1.5;
    CHECK(p.outer(x) == doctest::Approx(x(1) + p.shift));
  }
}

TEST_CASE("assembly preconditions") {
  CellSolution c = solve_cell(build_lattice(iv({0, 1})), 32);
  const InnerProfile& in = bump_inner();
  DefectProfile q = canonical_bump(2, 0.05);
  CHECK_THROWS_AS(assemble_patched_barrier(in, c, q, 0.0, 0.5 * in.k), ConfigError);
  CHECK_THROWS_AS(assemble_patched_barrier(in, c, q, 0.7, 0.5 * in.k), ConfigError);
  CHECK_THROWS_AS(assemble_patched_barrier(in, c, q, 0.1, in.k), ConfigError);
  CHECK_THROWS_AS(estimate_Q_bound({0.1}, q, build_lattice(iv({0, 1})), Direction::Receding), ConfigError);
}

TEST_CASE("patched barrier at eps = k/2") {
  CellSolution c = solve_cell(build_lattice(iv({0, 1})), 32);
  const InnerProfile& in = bump_inner();
  CHECK(in.k > 0.0);
  DefectProfile q = canonical_bump(2, 0.05);
  const double delta = 0.05, eps = 0.5 * in.k;
  PatchedBarrier p = assemble_patched_barrier(in, c, q, delta, eps);
  CHECK(p.slope >= 1.0 + M_PI * (in.k - 2.0 * eps) * delta - 1e-12);
  CHECK(p.shift_lo <= p.shift);
  CHECK(p.shift <= p.shift_hi);
  Barrier b = p.barrier();
  CHECK(b.role == BarrierRole::Super);
  CHECK(verify_barrier(b, 300).pass);
}

TEST_CASE("assembly is monotone in eps") {
  CellSolution c = solve_cell(build_lattice(iv({0, 1})), 32);
  const InnerProfile& in = bump_inner();
  DefectProfile q = canonical_bump(2, 0.05);
  for (double delta : {0.2, 0.1}) {
    bool seen = false;
    for (int i = 0; i <= 9; ++i) {
      bool ok = true;
      try {
        assemble_patched_barrier(in, c, q, delta, 0.1 * i * in.k);
      } catch (const NumericError&) {
        ok = false;
      }
      if (seen) CHECK(ok);
      seen = seen || ok;
    }
    CHECK(seen);
  }
}
