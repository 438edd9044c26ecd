#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "pinning/geometry.hpp"

using namespace pinning;

namespace {

IVec iv(std::initializer_list<int> l) {
  IVec v(int(l.size()));
  int i = 0;
  for (int x : l) v(i++) = x;
  return v;
}

double halton(int i, int b) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= b;
    r += f * (i % b);
    i /= b;
  }
  return r;
}

}  // namespace

TEST_CASE("lattice for axis direction") {
  LatticeSpec L = build_lattice(iv({0, 1}));
  CHECK(L.cell_area == doctest::Approx(1.0));
  REQUIRE(L.basis.size() == 1);
  CHECK(std::abs(L.basis[0](0)) == doctest::Approx(1.0));
  CHECK(L.basis[0](1) == doctest::Approx(0.0));
  CHECK((L.rotation * Vec::Unit(2, 1)).isApprox(Vec::Unit(2, 1)));
  CHECK(L.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("lattice for diagonal direction") {
  LatticeSpec L = build_lattice(iv({1, 1}));
  CHECK(L.cell_area == doctest::Approx(std::sqrt(2.0)));
  CHECK(L.basis[0].norm() == doctest::Approx(std::sqrt(2.0)));
  Vec e = (L.rotation * Vec::Ones(2)) / std::sqrt(2.0);
  CHECK(e(0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(e(1) == doctest::Approx(1.0));
}

TEST_CASE("lattice (1,1,0) generates Z^3 cap xi-perp by enumeration") {
  IVec xi = iv({1, 1, 0});
  LatticeSpec L = build_lattice(xi);
  CHECK(L.cell_area == doctest::Approx(std::sqrt(2.0)));
  Mat B(3, 2);
  B.col(0) = L.integer_basis[0].cast<double>();
  B.col(1) = L.integer_basis[1].cast<double>();
  Mat G = B.transpose() * B;
  CHECK(std::sqrt(G.determinant()) == doctest::Approx(std::sqrt(2.0)));
  // every lattice point in a box has integer coordinates in the basis
  double shortest = INFINITY;
  for (int a = -4; a <= 4; ++a)
    for (int b = -4; b <= 4; ++b)
      for (int c = -4; c <= 4; ++c) {
        IVec v = iv({a, b, c});
        if (v.dot(xi) != 0 || v.cwiseAbs().maxCoeff() == 0) continue;
        shortest = std::min(shortest, v.cast<double>().norm());
        Vec coef = G.ldlt().solve(B.transpose() * v.cast<double>());
        CHECK((coef.array() - coef.array().round()).abs().maxCoeff() < 1e-12);
      }
  CHECK(L.integer_basis[0].cast<double>().norm() == doctest::Approx(shortest));
  for (const Vec& b : L.basis) CHECK(std::abs(b(2)) < 1e-14);
}

TEST_CASE("lattice errors") {
  CHECK_THROWS_AS(build_lattice(iv({2, 4})), ConfigError);
  CHECK_THROWS_AS(build_lattice(iv({0, 0})), ConfigError);
  CHECK_THROWS_WITH(build_lattice(iv({2, 2, 0})), "reducible direction");
}

TEST_CASE("lattice point density matches 1/|xi|") {
  for (IVec xi : {iv({1, 2}), iv({1, 1, 0}), iv({1, 2, 3})}) {
    LatticeSpec L = build_lattice(xi);
    const int d = L.d;
    const double side = 100.0;
    long count = 0;
    if (d == 2) {
      double len = L.basis[0].norm();
      count = long(std::floor(side / 2 / len)) * 2 + 1;
      CHECK(double(count) / side == doctest::Approx(1.0 / L.cell_area).epsilon(0.02));
    } else {
      Mat Bm(2, 2);
      Bm.col(0) = L.basis[0].head(2);
      Bm.col(1) = L.basis[1].head(2);
      Mat inv = Bm.inverse();
      int N = 200;
      for (int a = -N; a <= N; ++a)
        for (int b = -N; b <= N; ++b) {
          Eigen::Vector2d z = Bm * Eigen::Vector2d(a, b);
          if (std::abs(z(0)) <= side / 2 && std::abs(z(1)) <= side / 2) ++count;
        }
      (void)inv;
      CHECK(double(count) / (side * side) == doctest::Approx(1.0 / L.cell_area).epsilon(0.02));
    }
  }
}

TEST_CASE("eval_Q values and periodicity") {
  CoefficientField f{canonical_bump(2, 0.1), 0.1, build_lattice(iv({0, 1}))};
  Vec z(2);
  z << 3.0, 0.0;
  CHECK(eval_Q(f, z) == doctest::Approx(1.1));
  Vec far(2);
  far << 0.5, 0.3;
  CHECK(eval_Q(f, far) == 1.0);
  CoefficientField flat{canonical_bump(2, 0.0), 0.1, f.lattice};
  CHECK(eval_Q(flat, z) == 1.0);
  CoefficientField bad = f;
  bad.delta = 0.6;
  CHECK_THROWS_WITH(eval_Q(bad, z), "overlapping defects");

  for (IVec xi : {iv({1, 1}), iv({1, 1, 0}), iv({2, 1, 1})}) {
    LatticeSpec L = build_lattice(xi);
    CoefficientField g{canonical_bump(L.d, 0.3), 0.4, L};
    double worst = 0.0;
    for (int i = 1; i <= 300; ++i) {
      Vec x(L.d);
      x(0) = 6 * halton(i, 2) - 3;
      x(L.d - 1) = 0.8 * halton(i, 3) - 0.4;
      if (L.d == 3) x(1) = 6 * halton(i, 5) - 3;
      for (const Vec& b : L.basis) {
        double q = eval_Q(g, x + 3.0 * b) - eval_Q(g, x);
        worst = std::max(worst, std::abs(q));
        CHECK(eval_Q(g, x) >= 1.0);
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("slice integrals against closed forms") {
  DefectProfile b2 = canonical_bump(2, 0.1), b3 = canonical_bump(3, 0.1);
  CHECK(slice_integral(b2, 0.0) == doctest::Approx(16.0 / 15.0).epsilon(1e-10));
  CHECK(slice_integral(b3, 0.0) == doctest::Approx(M_PI / 3.0).epsilon(1e-10));
  for (double s : {0.1, 0.5, 0.9, -0.5}) {
    double c2 = 16.0 / 15.0 * std::pow(1 - s * s, 2.5);
    double c3 = M_PI / 3.0 * std::pow(1 - s * s, 3.0);
    CHECK(slice_integral(b2, s) == doctest::Approx(c2).epsilon(1e-9));
    CHECK(slice_integral(b3, s) == doctest::Approx(c3).epsilon(1e-9));
  }
  CHECK(slice_integral(b2, 0.5) == doctest::Approx(0.519).epsilon(1e-3));
  CHECK(slice_integral(b2, 1.0) == 0.0);
  CHECK(slice_integral(b3, -1.5) == 0.0);
  // continuity and evenness
  for (double s = 0.0; s < 1.2; s += 0.05) {
    CHECK(slice_integral(b2, s) == doctest::Approx(slice_integral(b2, -s)).epsilon(1e-12));
    CHECK(std::abs(slice_integral(b2, s + 1e-6) - slice_integral(b2, s)) < 1e-5);
  }
}

TEST_CASE("defect invariants") {
  DefectProfile b = canonical_bump(2, 0.2);
  for (int i = 0; i < 200; ++i) {
    double r = 2.0 * halton(i + 1, 2);
    if (r >= 1.0) CHECK(b.qt(r) == 0.0);
    CHECK(1.0 + b.sigma * b.qt(r) > 0.0);
  }
  CHECK_THROWS_AS(canonical_bump(2, -1.0), ConfigError);
  DefectProfile t = tabulated_radial(2, 0.5, {0.0, 0.5, 1.0}, {1.0, 0.5, 0.0});
  CHECK(t.qt(0.25) == doctest::Approx(0.75));
  CHECK(t.qt(1.0) == 0.0);
  CHECK(slice_integral(t, 0.0) == doctest::Approx(1.0).epsilon(1e-8));  // tent: 2*int_0^1 (1-r) dr
  CHECK_THROWS_AS(tabulated_radial(2, 0.5, {0.0, 1.5}, {1.0, 0.0}), ConfigError);
  CHECK(gamma_d(2) == doctest::Approx(M_PI));
  CHECK(gamma_d(3) == doctest::Approx(2 * M_PI));
}
