#include "pinning/cell.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <memory>
#include <optional>

namespace pinning {

namespace {

constexpr double kTail = 1e-13;
const double kSqrtPi = std::sqrt(M_PI);

double find_root(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw NumericError("root not bracketed");
  boost::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve(
      f, a, b, fa, fb, [](double l, double h) { return std::abs(h - l) <= 1e-15 * std::max(1.0, std::abs(l)); },
      it);
  return 0.5 * (r.first + r.second);
}

Mat basis_matrix(const LatticeSpec& L) {
  const int m = L.d - 1;
  Mat B(m, m);
  for (int j = 0; j < m; ++j) B.col(j) = L.basis[j].head(m);
  return B;
}

Mat dual_matrix(const LatticeSpec& L) {
  const int m = L.d - 1;
  Mat K(m, m);
  auto dual = L.dual_basis();
  for (int j = 0; j < m; ++j) K.col(j) = dual[j];
  return K;
}

double min_singular(const Mat& B) { return B.jacobiSvd().singularValues().minCoeff(); }

double tail_bound(const CellSolution& c, double t) {
  if (c.d == 2) {
    const double l = c.lattice.basis[0].norm(), w = 2.0 * M_PI / l;
    return (l / (M_PI * (c.K + 1))) * std::exp(-w * (c.K + 1) * t) / (-std::expm1(-w * t));
  }
  // Lattice-point count against the area integral, with a safety factor 4.
  const double A = c.lattice.cell_area, k = c.kappa_cut;
  return 4.0 * (A / (2.0 * M_PI)) * std::exp(-k * t) / t * (1.0 + 1.0 / (k * t));
}

// Unit-scale omega before the additive constant; g receives the gradient when non-null.
double raw_spectral(const CellSolution& c, const Vec& x, Vec* g) {
  const int d = c.d;
  const double t = x(d - 1);
  if (g) *g = Vec::Zero(d);
  double s = 0.0;
  if (d == 2) {
    const double l = c.lattice.basis[0].norm(), w = 2.0 * M_PI / l;
    for (int n = 1; n <= c.K; ++n) {
      double e = std::exp(-w * n * t), cs = std::cos(w * n * x(0));
      s += l / (M_PI * n) * cs * e;
      if (g) {
        (*g)(0) -= 2.0 * std::sin(w * n * x(0)) * e;
        (*g)(1) -= 2.0 * cs * e;
      }
    }
    return s;
  }
  for (const Vec& kv : c.dual) {
    double k = kv.norm(), ph = kv.dot(x.head(d - 1)), e = std::exp(-k * t);
    double cs = std::cos(ph);
    s += 2.0 * cs * e / k;
    if (g) {
      g->head(d - 1) -= 2.0 * std::sin(ph) * e / k * kv;
      (*g)(d - 1) -= 2.0 * cs * e;
    }
  }
  return s;
}

// d=2: -(l/pi) log|1 - e^{i w (x + i t)}|, exact for every t.
double closed_2d(const CellSolution& c, const Vec& x, Vec* g) {
  const double l = c.lattice.basis[0].norm(), w = 2.0 * M_PI / l;
  const double a = -w * x(1), b = w * x(0);
  const double ea = std::exp(a), em = std::expm1(a), sb = std::sin(0.5 * b);
  const double Q = em * em + 4.0 * ea * sb * sb;
  if (g) {
    *g = Vec(2);
    (*g)(0) = -2.0 * ea * std::sin(b) / Q;
    (*g)(1) = (2.0 * em * ea + 4.0 * ea * sb * sb) / Q;
  }
  return -(l / (2.0 * M_PI)) * std::log(Q);
}

// d=3 Ewald form of (|xi|/2 pi) sum_z |x - z|^{-1} (regularized), even in t.
double ewald_G(const CellSolution& c, const Vec& x, Vec* g) {
  const LatticeSpec& L = c.lattice;
  const double A = L.cell_area, al = c.ewald_alpha, t = x(2);
  const Vec xr = L.reduce(x);
  const Mat B = basis_matrix(L), Kd = dual_matrix(L);
  const double rc = 6.5 / al;
  const int M = int(std::ceil((rc + B.col(0).norm() + B.col(1).norm()) / min_singular(B))) + 1;
  double real = 0.0;
  Vec greal = Vec::Zero(3);
  for (int m1 = -M; m1 <= M; ++m1)
    for (int m2 = -M; m2 <= M; ++m2) {
      Vec z = m1 * B.col(0) + m2 * B.col(1);
      Eigen::Vector3d dx(xr(0) - z(0), xr(1) - z(1), t);
      double r = dx.norm();
      if (r > rc) continue;
      double ec = std::erfc(al * r);
      real += ec / r;
      if (g) greal -= (ec / (r * r) + 2.0 * al / kSqrtPi * std::exp(-al * al * r * r) / r) * dx / r;
    }
  const double pref = A / (2.0 * M_PI);
  double val = pref * real;
  if (g) *g = pref * greal;
  const double kmax = 2.0 * al * (6.5 + al * std::abs(t));
  const int N = int(std::ceil(kmax / min_singular(Kd))) + 1;
  for (int m1 = 0; m1 <= N; ++m1)
    for (int m2 = -N; m2 <= N; ++m2) {
      if (m1 == 0 && m2 <= 0) continue;
      Vec kv = m1 * Kd.col(0) + m2 * Kd.col(1);
      double k = kv.norm();
      if (k > kmax) continue;
      double u = k / (2.0 * al);
      double ep = std::exp(k * t) * std::erfc(u + al * t), en = std::exp(-k * t) * std::erfc(u - al * t);
      double ph = kv.dot(x.head(2)), cs = std::cos(ph);
      val += cs * (ep + en) / k;
      if (g) {
        g->head(2) -= std::sin(ph) * (ep + en) / k * kv;
        (*g)(2) += cs * (ep - en);
      }
    }
  val -= t * std::erf(al * t) + std::exp(-al * al * t * t) / (al * kSqrtPi);
  if (g) (*g)(2) -= std::erf(al * t);
  return val;
}

double raw_near(const CellSolution& c, const Vec& x, Vec* g) {
  if (c.d == 2) return closed_2d(c, x, g);
  double v = ewald_G(c, x, g) - c.ewald_offset + x(2);
  if (g) (*g)(2) += 1.0;
  return v;
}

double raw(const CellSolution& c, const Vec& x, Vec* g) {
  if (x(c.d - 1) >= c.switch_height) return raw_spectral(c, x, g);
  return raw_near(c, x, g);
}

double Phi(int d, double r) { return d == 2 ? -std::log(r) : std::pow(r, 2.0 - d); }

// Minimum of the unit-scale corrector over {x_d = 0}.
double boundary_min(const CellSolution& c) {
  const LatticeSpec& L = c.lattice;
  if (c.d == 2) {
    const double l = L.basis[0].norm();
    const int N = 1024;
    double best = INFINITY, xb = 0.0;
    for (int i = 0; i < N; ++i) {
      double x = l * (i + 0.5) / N;
      Vec p(2);
      p << x, 0.0;
      double v = raw_near(c, p, nullptr);
      if (v < best) best = v, xb = x;
    }
    auto f = [&](double x) {
      Vec p(2);
      p << x, 0.0;
      return raw_near(c, p, nullptr);
    };
    auto r = boost::math::tools::brent_find_minima(f, xb - l / N, xb + l / N, 52);
    return std::min(best, r.second);
  }
  const Mat B = basis_matrix(L);
  const int N = 96;
  double best = INFINITY;
  Eigen::Vector2d cb(0, 0);
  auto f = [&](const Eigen::Vector2d& u) {
    Vec p(3);
    p.head(2) = B * u;
    p(2) = 0.0;
    return raw_near(c, p, nullptr);
  };
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      Eigen::Vector2d u((i + 0.5) / N, (j + 0.5) / N);
      double v = f(u);
      if (v < best) best = v, cb = u;
    }
  // Compass search refinement.
  double h = 1.0 / N;
  const Eigen::Vector2d dirs[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  while (h > 1e-9) {
    bool moved = false;
    for (const auto& e : dirs) {
      double v = f(cb + h * e);
      if (v < best) {
        best = v;
        cb += h * e;
        moved = true;
        break;
      }
    }
    if (!moved) h *= 0.5;
  }
  return best;
}

std::vector<Vec> upper_directions(int d) {
  std::vector<Vec> out;
  if (d == 2) {
    for (int j = 1; j <= 5; ++j) {
      Vec e(2);
      e << std::cos(M_PI * j / 6.0), std::sin(M_PI * j / 6.0);
      out.push_back(e);
    }
    return out;
  }
  for (double th : {M_PI / 6.0, M_PI / 3.0, 0.45 * M_PI})
    for (int j = 0; j < 3; ++j) {
      double ph = 2.0 * M_PI * j / 3.0 + th;
      Vec e(3);
      e << std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th);
      out.push_back(e);
    }
  return out;
}

double singular_fit(const CellSolution& c) {
  std::vector<double> ph, val;
  for (const Vec& e : upper_directions(c.d))
    for (int j = 0; j <= 5; ++j) {
      double r = 1e-3 * std::pow(10.0, j / 5.0);
      Vec x = r * e;
      ph.push_back(Phi(c.d, r));
      val.push_back(raw(c, x, nullptr) - x(c.d - 1));
    }
  Mat A(ph.size(), 2);
  Vec b(ph.size());
  for (size_t i = 0; i < ph.size(); ++i) {
    A(i, 0) = ph[i];
    A(i, 1) = 1.0;
    b(i) = val[i];
  }
  Vec s = A.colPivHouseholderQr().solve(b);
  return s(0);
}

// Trapezoid average of f over the periodic face at height t.
double face_average(const CellSolution& c, double t, const std::function<double(const Vec&)>& f,
                    int N) {
  const LatticeSpec& L = c.lattice;
  double s = 0.0;
  if (c.d == 2) {
    const double l = L.basis[0].norm();
    for (int i = 0; i < N; ++i) {
      Vec p(2);
      p << l * i / N, t;
      s += f(p);
    }
    return s / N;
  }
  const Mat B = basis_matrix(L);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) {
      Vec p(3);
      p.head(2) = B * Eigen::Vector2d(double(i) / N, double(j) / N);
      p(2) = t;
      s += f(p);
    }
  return s / (double(N) * N);
}

}  // namespace

double CellSolution::value(const Vec& x) const { return scale * raw(*this, x, nullptr) + c0; }

Vec CellSolution::gradient(const Vec& x) const {
  Vec g;
  raw(*this, x, &g);
  return scale * g;
}

double CellSolution::spectral_value(const Vec& x) const {
  return scale * raw_spectral(*this, x, nullptr) + c0;
}

Vec CellSolution::spectral_gradient(const Vec& x) const {
  Vec g;
  raw_spectral(*this, x, &g);
  return scale * g;
}

double CellSolution::near_value(const Vec& x) const { return scale * raw_near(*this, x, nullptr) + c0; }

Vec CellSolution::near_gradient(const Vec& x) const {
  Vec g;
  raw_near(*this, x, &g);
  return scale * g;
}

CellSolution solve_cell(const LatticeSpec& lattice, int K, double scale) {
  if (lattice.d != 2 && lattice.d != 3) throw ConfigError("cell problem implemented for d = 2, 3");
  if (K < 32) throw ConfigError("need K >= 32 dual-lattice shells");
  if (!(scale > 0.0)) throw ConfigError("scale must be positive");
  CellSolution c;
  c.lattice = lattice;
  c.d = lattice.d;
  c.K = K;
  c.scale = scale;
  if (c.d == 2) {
    c.kappa_cut = 2.0 * M_PI * (K + 1) / lattice.basis[0].norm();
  } else {
    const Mat Kd = dual_matrix(lattice);
    c.kappa_cut = INFINITY;
    for (int m1 = -(K + 1); m1 <= K + 1; ++m1)
      for (int m2 = -(K + 1); m2 <= K + 1; ++m2) {
        int ring = std::max(std::abs(m1), std::abs(m2));
        if (ring == 0) continue;
        Vec kv = m1 * Kd.col(0) + m2 * Kd.col(1);
        if (ring == K + 1) c.kappa_cut = std::min(c.kappa_cut, kv.norm());
        else if (m1 > 0 || (m1 == 0 && m2 > 0)) c.dual.push_back(kv);
      }
    c.ewald_alpha = kSqrtPi / std::sqrt(lattice.cell_area);
  }
  c.switch_height = find_root([&](double t) { return std::log(tail_bound(c, t) / kTail); }, 1e-4, 2.0);
  if (c.switch_height > 0.25) throw NumericError("increase K");

  if (c.d == 3) {
    const Mat B = basis_matrix(lattice);
    Vec p(3), q(3);
    p.head(2) = B * Eigen::Vector2d(0.5, 0.5);
    p(2) = c.switch_height;
    c.ewald_offset = 0.0;
    c.ewald_offset = raw_near(c, p, nullptr) - raw_spectral(c, p, nullptr);
    q.head(2) = B * Eigen::Vector2d(0.25, 0.6);
    q(2) = 2.0 * c.switch_height;
    c.ewald_mismatch = std::abs(raw_near(c, q, nullptr) - raw_spectral(c, q, nullptr));
    if (c.ewald_mismatch > 1e-9) throw NumericError("Ewald and spectral forms disagree");
  }

  c.c0 = -scale * boundary_min(c);
  Vec top = Vec::Zero(c.d);
  top(c.d - 1) = 40.0 * lattice.longest_basis_length();
  c.far_field_constant = c.value(top);
  c.singular_coefficient = singular_fit(c);
  return c;
}

CStarReport cell_diagnostics(const CellSolution& c) {
  CStarReport r;
  const int d = c.d;
  const double A = c.lattice.cell_area;
  const int N = d == 2 ? 512 : 96;
  auto dd = [&](const Vec& x) { return c.gradient(x)(d - 1); };

  r.face_height = 0.5 * c.switch_height;
  r.face_flux_c = A - A * face_average(c, r.face_height, dd, N) / c.scale;

  const double eps = 0.5 * c.lattice.rho0;
  r.hemisphere_radius = eps;
  using GL = boost::math::quadrature::gauss<double, 40>;
  auto dr = [&](const Vec& x) { return c.gradient(x).dot(x) / x.norm(); };
  double flux;
  if (d == 2) {
    flux = GL::integrate(
        [&](double th) {
          Vec x(2);
          x << eps * std::cos(th), eps * std::sin(th);
          return dr(x) * eps;
        },
        0.0, M_PI);
    r.hemisphere_c = 2.0 * eps - flux / c.scale;
  } else {
    const int Np = 64;
    flux = GL::integrate(
        [&](double th) {
          double s = 0.0;
          for (int j = 0; j < Np; ++j) {
            double ph = 2.0 * M_PI * j / Np;
            Vec x(3);
            x << eps * std::sin(th) * std::cos(ph), eps * std::sin(th) * std::sin(ph), eps * std::cos(th);
            s += dr(x);
          }
          return s * (2.0 * M_PI / Np) * eps * eps * std::sin(th);
        },
        0.0, 0.5 * M_PI);
    r.hemisphere_c = M_PI * eps * eps - flux / c.scale;
  }

  for (double t : {0.5 * c.switch_height, 0.5, 1.0})
    r.cell_average_max = std::max(r.cell_average_max, std::abs(face_average(c, t, dd, N)));

  r.singular_coefficient = c.singular_coefficient;
  r.singular_target = A / gamma_d(d);

  // Tail: D(t) = max |omega - C| over a face grid at t = 1, 2, 3.
  const int Nt = d == 2 ? 64 : 16;
  Mat Afit(3, 2);
  Vec bfit(3);
  for (int j = 0; j < 3; ++j) {
    double t = j + 1.0, D = 0.0;
    face_average(c, t, [&](const Vec& x) {
      D = std::max(D, std::abs(c.value(x) - c.far_field_constant));
      return 0.0;
    }, Nt);
    Afit(j, 0) = 1.0;
    Afit(j, 1) = -t;
    bfit(j) = std::log(D);
  }
  Vec fit = Afit.colPivHouseholderQr().solve(bfit);
  r.tail_rate = fit(1);
  r.tail_prefactor = std::exp(fit(0));
  r.tail_rate_target = 2.0 * M_PI / c.lattice.longest_basis_length();
  r.tail_pass = r.tail_rate >= r.tail_rate_target * (1.0 - 0.02);

  // Odd part of omega - (c/gamma)Phi - x_d: series at +t against the continuation at -t.
  const LatticeSpec& L = c.lattice;
  for (double rho : {0.1, 0.2})
    for (double t : {0.2, 0.3})
      for (int j = 0; j < 4; ++j) {
        Vec x = Vec::Zero(d);
        if (d == 2) x(0) = (j % 2 ? -rho : rho);
        else x.head(2) = rho * (std::cos(M_PI * j / 2.0 + 0.3) * L.basis[0].head(2).normalized() +
                                std::sin(M_PI * j / 2.0 + 0.3) * L.basis[1].head(2).normalized());
        Vec xm = x;
        x(d - 1) = t;
        xm(d - 1) = -t;
        double up = (c.spectral_value(x) - c.c0) / c.scale - t;
        double dn = (c.near_value(xm) - c.c0) / c.scale + t;
        r.odd_part_max = std::max(r.odd_part_max, std::abs(up - dn));
      }

  r.rel_err_face = std::abs(r.face_flux_c - A) / A;
  r.rel_err_hemisphere = std::abs(r.hemisphere_c - A) / A;
  r.rel_err_singular = std::abs(r.singular_coefficient - r.singular_target) / r.singular_target;
  return r;
}

double check_c_star(const CellSolution& cell) { return cell_diagnostics(cell).rel_err_face; }

double InnerProfile::u(const Vec& x) const {
  const double X = x(d - 1);
  if (plane) return X + s;
  const double Xp = d == 2 ? x(0) : x.head(d - 1).norm();
  if (std::abs(Xp) > std::abs(field.xs.back())) throw NumericError("inner profile evaluated outside its box");
  const double v0 = field.value(Xp, 0.0);
  if (X <= v0) return (X - v0) / (1.0 + field.gradient(Xp, 0.0)(1));
  auto f = [&](double t) { return t + field.value(Xp, t) - X; };
  double hi = std::max(1.0, 2.0 * (X - v0));
  while (f(hi) <= 0.0) {
    hi *= 2.0;
    if (hi > field.zs.back()) throw NumericError("inner profile evaluated outside its box");
  }
  return find_root(f, 0.0, hi);
}

InnerProfile inner_plane(int d, double s) {
  InnerProfile p;
  p.d = d;
  p.s = s;
  return p;
}

InnerProfile inner_from_field(const HodographField& f, const CapacityRecord& cap) {
  InnerProfile p;
  p.d = f.d;
  p.k = cap.k;
  p.s = cap.s;
  p.plane = false;
  p.field = f;
  return p;
}

InnerProfile flat_branch_inner(const DefectProfile& defect, const std::vector<double>& s_grid,
                               const SingleSiteOptions& o) {
  if (!defect.active()) return inner_plane(defect.d, 0.0);
  if (s_grid.empty()) throw ConfigError("empty height grid");
  InnerProfile best;
  best.k = -INFINITY;
  for (double s : s_grid) {
    SingleSiteResult r = single_site(defect, s, o);
    if (r.cap.k > best.k) best = inner_from_field(r.field, r.cap);
  }
  return best;
}

double PatchedBarrier::outer(const Vec& x) const {
  Vec y = x;
  y(cell.d - 1) += shift;
  const double yd = y(cell.d - 1);
  return (1.0 - alpha) * yd + a * (yd - cell.value(y));
}

Vec PatchedBarrier::outer_gradient(const Vec& x) const {
  Vec y = x;
  y(cell.d - 1) += shift;
  Vec g = -a * cell.gradient(y);
  g(cell.d - 1) += 1.0 - alpha + a;
  return g;
}

double PatchedBarrier::inner_value(const Vec& x) const {
  return delta * inner.u(cell.lattice.reduce(x) / delta);
}

double PatchedBarrier::value(const Vec& x) const {
  const double rho = cell.lattice.reduce(x).norm();
  if (rho >= Lambda * r) return outer(x);
  if (rho <= r / Lambda) return inner_value(x);
  return std::min(outer(x), inner_value(x));
}

Barrier PatchedBarrier::barrier() const {
  Barrier b;
  b.kind = BarrierKind::patched_periodic;
  b.role = BarrierRole::Super;
  b.frame = BarrierFrame::Physical;
  b.d = cell.d;
  b.params = {{"delta", delta}, {"k", k},         {"eps", eps},     {"Lambda", Lambda},
              {"r", r},         {"alpha", alpha}, {"C0", C0},       {"shift", shift},
              {"a", a},         {"slope", slope}};
  auto self = std::make_shared<PatchedBarrier>(*this);
  b.value = [self](const Vec& x) { return self->value(x); };
  b.gradient = [self](const Vec& x) {
    if (self->cell.lattice.reduce(x).norm() >= self->Lambda * self->r) return self->outer_gradient(x);
    Vec g(x.size());
    const double h = 1e-7;
    for (int i = 0; i < x.size(); ++i) {
      Vec e = Vec::Zero(x.size());
      e(i) = h;
      g(i) = (self->value(x + e) - self->value(x - e)) / (2 * h);
    }
    return g;
  };
  b.Q = [self](const Vec& x) { return eval_Q(self->field, x); };
  const double ball = Lambda * r;
  b.r_min = ball;
  b.r_max = 1.5 * cell.lattice.longest_basis_length();
  b.fb_rho_min = 0.0;
  b.fb_rho_max = cell.lattice.longest_basis_length();
  b.fb_top = 1.0;
  b.fb_floor = -1.0;
  b.admissible = [self, ball](const Vec& x) {
    Vec y = self->cell.lattice.reduce(x);
    return (y - x).norm() < 1e-12 && y.norm() >= ball * (1 - 1e-12);
  };
  return b;
}

namespace {

std::vector<Vec> sphere_points(int d, double R, int n) {
  std::vector<Vec> out;
  for (int j = 0; j < n; ++j) {
    Vec x(d);
    if (d == 2) {
      double th = 2.0 * M_PI * (j + 0.5) / n;
      x << std::cos(th), std::sin(th);
    } else {
      double z = 1.0 - 2.0 * (j + 0.5) / n, s = std::sqrt(1.0 - z * z);
      double ph = M_PI * (3.0 - std::sqrt(5.0)) * j;
      x << s * std::cos(ph), s * std::sin(ph), z;
    }
    out.push_back(R * x);
  }
  return out;
}

// Largest x in [lo, hi] with pred true, given pred(lo) true and pred monotone decreasing.
double bisect_last_true(const std::function<bool(double)>& pred, double lo, double hi) {
  if (pred(hi)) return hi;
  for (int i = 0; i < 80 && hi - lo > 1e-15; ++i) {
    double m = 0.5 * (lo + hi);
    (pred(m) ? lo : hi) = m;
  }
  return lo;
}

// Free-boundary points of the unshifted outer profile in the cell, outside B_{rin}(sites).
bool outer_slope_ok(const CellSolution& cell, double alpha, double a, double rin, int n_fb) {
  const int d = cell.d;
  const LatticeSpec& L = cell.lattice;
  auto f = [&](const Vec& y) {
    return (1.0 - alpha) * y(d - 1) + a * (y(d - 1) - cell.value(y));
  };
  std::vector<Vec> cols;
  if (d == 2) {
    const double l = L.basis[0].norm();
    for (int i = 0; i < n_fb; ++i) {
      Vec y(2);
      y << l * ((i + 0.5) / n_fb - 0.5), 0.0;
      cols.push_back(y);
    }
  } else {
    const int m = std::max(4, int(std::sqrt(double(n_fb))));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        Vec y = Vec::Zero(3);
        y.head(2) = ((i + 0.5) / m - 0.5) * L.basis[0].head(2) + ((j + 0.5) / m - 0.5) * L.basis[1].head(2);
        cols.push_back(y);
      }
  }
  for (Vec y : cols) {
    auto g = [&](double t) {
      y(d - 1) = t;
      return f(y);
    };
    double top = 1.0;
    if (!(g(top) > 0.0)) return false;
    double lo = top - 0.02;
    while (lo > -1.0 && g(lo) > 0.0) top = lo, lo -= 0.02;
    if (g(lo) > 0.0) continue;
    y(d - 1) = find_root(g, lo, top);
    if (L.reduce(y).norm() < rin) continue;
    Vec grad = -a * cell.gradient(y);
    grad(d - 1) += 1.0 - alpha + a;
    if (grad.squaredNorm() > 1.0 + 1e-12) return false;
  }
  return true;
}

}  // namespace

PatchedBarrier assemble_patched_barrier(const InnerProfile& inner, const CellSolution& cell,
                                        const DefectProfile& defect, double delta, double eps,
                                        const PatchOptions& o) {
  const int d = cell.d;
  if (inner.d != d || defect.d != d) throw ConfigError("dimension mismatch");
  if (!(delta > 0.0 && delta <= 0.5)) throw ConfigError("need 0 < delta <= 1/2");
  const double k = inner.k;
  if (k < 0.0) throw ConfigError("advancing patch needs k >= 0");
  if (eps < 0.0 || (k > 0.0 && eps >= k) || (k == 0.0 && eps != 0.0))
    throw ConfigError("need 0 <= eps < k");
  PatchedBarrier P;
  P.cell = cell;
  P.inner = inner;
  P.field = CoefficientField{defect, delta, cell.lattice};
  P.delta = delta;
  P.k = k;
  P.eps = eps;
  P.Lambda = o.Lambda > 0.0 ? o.Lambda : (d == 2 ? 1.5 : 2.0);
  P.c = o.c;
  P.r = o.c / P.Lambda;
  const double A = cell.lattice.cell_area;
  P.a = gamma_d(d) / A * std::pow(delta, d - 1) * (k - eps);
  const double base = (k - eps) * (k - eps) * std::pow(P.Lambda, 2 * (d - 1)) *
                      std::pow(delta / P.r, 2 * (d - 1)) * std::pow(P.r, d - 2) * Phi(d, P.r);
  const double rin = P.r / P.Lambda, rout = P.Lambda * P.r;
  if (o.C0 >= 0.0) {
    P.C0 = o.C0;
    P.alpha = o.C0 * base;
  } else {
    auto ok = [&](double al) { return outer_slope_ok(cell, al, P.a, rin, o.n_fb); };
    if (ok(0.0)) {
      P.alpha = 0.0;
    } else {
      if (!ok(0.9)) throw NumericError("delta not small enough for (k, eps)");
      double lo = 0.0, hi = 0.9;
      for (int i = 0; i < 50; ++i) {
        double m = 0.5 * (lo + hi);
        (ok(m) ? hi : lo) = m;
      }
      P.alpha = hi;
    }
    P.C0 = base > 0.0 ? P.alpha / base : 0.0;
  }
  if (P.alpha >= 1.0) throw NumericError("delta not small enough for (k, eps)");

  const auto in_pts = sphere_points(d, rin, o.n_sphere), out_pts = sphere_points(d, rout, o.n_sphere);
  std::vector<double> u_in, u_out;
  for (const Vec& x : in_pts) u_in.push_back(P.inner_value(x));
  for (const Vec& x : out_pts) u_out.push_back(P.inner_value(x));
  constexpr double tol = 1e-13;
  // Outer sphere: the outer profile is selected wherever it is positive.
  auto pred_hi = [&](double D) {
    P.shift = D;
    for (size_t i = 0; i < out_pts.size(); ++i) {
      double w = P.outer(out_pts[i]);
      if (w > 0.0 && w > u_out[i] + tol) return false;
    }
    return true;
  };
  // Inner sphere: the inner profile is selected wherever it is positive.
  auto pred_lo = [&](double D) {
    P.shift = D;
    for (size_t i = 0; i < in_pts.size(); ++i)
      if (u_in[i] > 0.0 && u_in[i] > P.outer(in_pts[i]) + tol) return false;
    return true;
  };
  const double B = 0.5 * rin;
  if (!pred_hi(-B) || !pred_lo(B)) throw NumericError("delta not small enough for (k, eps)");
  P.shift_hi = bisect_last_true(pred_hi, -B, B);
  P.shift_lo = -bisect_last_true([&](double D) { return pred_lo(-D); }, -B, B);
  if (P.shift_lo > P.shift_hi) throw NumericError("delta not small enough for (k, eps)");
  P.shift = 0.5 * (P.shift_lo + P.shift_hi);

  P.s_delta = d == 2 ? eps * std::log(P.r) : -eps * std::pow(delta / P.r, d - 2);
  P.s_numeric = P.shift / delta - P.s_delta;
  P.s_reference = d == 2 ? inner.s + k * std::log(1.0 / delta) : inner.s;
  P.slope = 1.0 - P.alpha + P.a;
  P.normalized_bound = (P.slope - 1.0) / std::pow(delta, d - 1);
  return P;
}

QBoundRow best_patched_bound(const InnerProfile& inner, const CellSolution& cell,
                             const DefectProfile& defect, double delta,
                             const std::vector<double>& lambdas, const PatchOptions& o,
                             int verify_samples, double eps_tol) {
  QBoundRow row;
  row.delta = delta;
  row.prediction = gamma_d(cell.d) / cell.lattice.cell_area * inner.k;
  std::optional<PatchedBarrier> best;
  auto consider = [&](const PatchedBarrier& P) {
    if (!best || P.normalized_bound > best->normalized_bound) best = P;
  };
  for (double L : lambdas) {
    PatchOptions oo = o;
    oo.Lambda = L;
    auto attempt = [&](double f) -> std::optional<PatchedBarrier> {
      try {
        return assemble_patched_barrier(inner, cell, defect, delta, f * inner.k, oo);
      } catch (const NumericError&) {
        return std::nullopt;
      }
    };
    if (inner.k == 0.0) {
      if (auto P = attempt(0.0)) consider(*P);
      continue;
    }
    // Feasibility is monotone in eps and the bound decreases with eps: bisect for the smallest eps.
    auto P = attempt(0.0);
    if (P) {
      consider(*P);
      continue;
    }
    double lo = 0.0, hi = 0.95;
    P = attempt(hi);
    if (!P) continue;
    while (hi - lo > eps_tol) {
      double m = 0.5 * (lo + hi);
      if (auto Q = attempt(m)) {
        hi = m;
        P = Q;
      } else {
        lo = m;
      }
    }
    consider(*P);
  }
  if (!best) return row;
  row.ok = true;
  row.eps = best->eps;
  row.Lambda = best->Lambda;
  row.alpha = best->alpha;
  row.C0 = best->C0;
  row.shift = best->shift;
  row.slope = best->slope;
  row.normalized_bound = best->normalized_bound;
  if (verify_samples > 0) {
    VerificationReport rep = verify_barrier(best->barrier(), verify_samples);
    row.verified = rep.pass;
    row.verify_margin = std::min(rep.margin, rep.interior_margin);
    row.verify_budget = rep.fd_budget;
  }
  return row;
}

std::vector<QBoundRow> estimate_Q_bound(const std::vector<double>& deltas, const DefectProfile& defect,
                                        const LatticeSpec& lattice, Direction dir,
                                        const SingleSiteOptions& so, int K) {
  if (dir != Direction::Advancing) throw ConfigError("only the advancing lower bound is implemented");
  if (defect.d != lattice.d) throw ConfigError("dimension mismatch");
  CellSolution cell = solve_cell(lattice, K);
  InnerProfile inner = flat_branch_inner(defect, {-0.2, -0.1, 0.0, 0.1, 0.2}, so);
  const std::vector<double> lambdas = lattice.d == 2 ? std::vector<double>{1.2, 1.5, 2.0, 3.0}
                                                     : std::vector<double>{2.0};
  std::vector<QBoundRow> rows;
  for (double dl : deltas) rows.push_back(best_patched_bound(inner, cell, defect, dl, lambdas));
  return rows;
}

}  // namespace pinning
