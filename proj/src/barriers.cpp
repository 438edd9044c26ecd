#include "pinning/barriers.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <limits>

#include "pinning/hodograph.hpp"

namespace pinning {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double find_root(const std::function<double(double)>& f, double a, double b) {
  double fa = f(a), fb = f(b);
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  if ((fa > 0) == (fb > 0)) throw NumericError("root not bracketed");
  boost::uintmax_t it = 200;
  auto tol = [](double x, double y) { return std::abs(x - y) <= 4e-16 * std::max(1.0, std::abs(x)); };
  auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, it);
  return 0.5 * (r.first + r.second);
}

// Full Gauss-Legendre rule on [-1,1] assembled from Boost's half rule.
template <int N>
void gl_rule(std::vector<double>& x, std::vector<double>& w) {
  using G = boost::math::quadrature::gauss<double, N>;
  const auto& a = G::abscissa();
  const auto& ww = G::weights();
  x.clear();
  w.clear();
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      x.push_back(0.0);
      w.push_back(ww[i]);
    } else {
      x.push_back(a[i]);
      w.push_back(ww[i]);
      x.push_back(-a[i]);
      w.push_back(ww[i]);
    }
  }
}

Vec unit(int d, int i) {
  Vec e = Vec::Zero(d);
  e(i) = 1.0;
  return e;
}

// Direction on the unit sphere from two uniforms; upper hemisphere only when upper is set.
Vec direction(int d, double u, double v, bool upper) {
  Vec x(d);
  if (d == 2) {
    double t = upper ? M_PI * u : 2.0 * M_PI * u;
    x << std::cos(t), std::sin(t);
    return x;
  }
  double c = upper ? u : 2.0 * u - 1.0;
  double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  double p = 2.0 * M_PI * v;
  x << s * std::cos(p), s * std::sin(p), c;
  return x;
}

bool near_interface(const Barrier& b, const Vec& x) {
  const double r = x.norm();
  for (double ri : b.interface_radii)
    if (std::abs(r - ri) < 1e-3 * std::max(1.0, ri)) return true;
  return false;
}

bool in_domain(const Barrier& b, const Vec& x) {
  const double r = x.norm();
  if (r < b.r_min * (1 - 1e-12) || r > b.r_max * (1 + 1e-12)) return false;
  if (b.frame == BarrierFrame::Hodograph && x(b.d - 1) < -1e-14) return false;
  if (b.admissible && !b.admissible(x)) return false;
  return true;
}

struct Fd {
  Mat H;
  double budget = 0.0;
};

// Centered differences of the gradient; budget 10 h |D^3 v| from a 2h stencil plus roundoff.
Fd fd_hessian(const Barrier& b, const Vec& x) {
  const int d = b.d;
  const double h = 1e-5 * std::max(1.0, x.norm());
  Fd out;
  out.H = Mat::Zero(d, d);
  Vec g0 = b.gradient(x);
  double t3 = 0.0;
  for (int j = 0; j < d; ++j) {
    Vec e = unit(d, j);
    Vec gp = b.gradient(x + h * e), gm = b.gradient(x - h * e);
    Vec gp2 = b.gradient(x + 2 * h * e), gm2 = b.gradient(x - 2 * h * e);
    out.H.col(j) = (gp - gm) / (2 * h);
    t3 = std::max(t3, ((gp2 - 2 * g0 + gm2) / (4 * h * h)).cwiseAbs().maxCoeff());
  }
  out.H = 0.5 * (out.H + out.H.transpose());
  out.budget = d * (10.0 * h * t3 + 8.0 * kEps * (1.0 + g0.norm()) / h);
  return out;
}

}  // namespace

std::string to_string(BarrierKind k) {
  switch (k) {
    case BarrierKind::plane: return "plane";
    case BarrierKind::small_sigma_3d: return "small_sigma_3d";
    case BarrierKind::log_hodograph_2d: return "log_hodograph_2d";
    case BarrierKind::fundie: return "fundie";
    case BarrierKind::log_supersolution_2d: return "log_supersolution_2d";
    case BarrierKind::line_sink: return "line_sink";
    case BarrierKind::point_source: return "point_source";
    case BarrierKind::mollified_2d: return "mollified_2d";
    case BarrierKind::patched_periodic: return "patched_periodic";
  }
  return "?";
}

BarrierKind barrier_kind_from_string(const std::string& s) {
  for (int i = 0; i <= int(BarrierKind::patched_periodic); ++i)
    if (to_string(BarrierKind(i)) == s) return BarrierKind(i);
  throw ConfigError("unknown barrier kind '" + s + "'");
}

Vec halton(int index, int dim) {
  static const int primes[] = {2, 3, 5, 7, 11, 13};
  Vec u(dim);
  for (int k = 0; k < dim; ++k) {
    double f = 1.0, r = 0.0;
    int i = index + 1;
    while (i > 0) {
      f /= primes[k];
      r += f * (i % primes[k]);
      i /= primes[k];
    }
    u(k) = r;
  }
  return u;
}

std::vector<Vec> interior_samples(const Barrier& b, int n) {
  std::vector<Vec> out;
  const double rlo = std::max(b.r_min, 1e-2), rhi = b.r_max;
  for (int i = 0; int(out.size()) < n && i < 50 * n; ++i) {
    Vec u = halton(i, 3);
    double r = rlo * std::pow(rhi / rlo, u(0));
    Vec x = r * direction(b.d, u(1), u(2), b.frame == BarrierFrame::Hodograph);
    if (!in_domain(b, x) || near_interface(b, x)) continue;
    if (b.frame == BarrierFrame::Physical && !(b.value(x) > 1e-8)) continue;
    out.push_back(x);
  }
  return out;
}

std::vector<Vec> boundary_samples(const Barrier& b, int n) {
  std::vector<Vec> out;
  const int d = b.d;
  for (int i = 0; int(out.size()) < n && i < 50 * n; ++i) {
    Vec u = halton(i, 2);
    Vec x = Vec::Zero(d);
    if (b.frame == BarrierFrame::Hodograph) {
      const double rlo = std::max(b.r_min, 1e-2);
      double r = rlo * std::pow(b.r_max / rlo, u(0));
      if (d == 2) x(0) = u(1) < 0.5 ? r : -r;
      else x.head(2) << r * std::cos(2 * M_PI * u(1)), r * std::sin(2 * M_PI * u(1));
    } else {
      double rho = b.fb_rho_min + (b.fb_rho_max - b.fb_rho_min) * u(0);
      if (d == 2) x(0) = u(1) < 0.5 ? rho : -rho;
      else x.head(2) << rho * std::cos(2 * M_PI * u(1)), rho * std::sin(2 * M_PI * u(1));
      auto f = [&](double t) {
        Vec y = x;
        y(d - 1) = t;
        return b.value(y);
      };
      double top = b.fb_top;
      if (!(f(top) > 0.0)) continue;
      const double step = 0.02 * std::max(1.0, std::abs(b.fb_top - b.fb_floor) / 50.0);
      double lo = top - step;
      bool found = false;
      while (lo >= b.fb_floor) {
        if (!(f(lo) > 0.0)) {
          found = true;
          break;
        }
        top = lo;
        lo -= step;
      }
      if (!found) continue;
      double a = lo, c = top;
      for (int k = 0; k < 200 && c - a > 1e-15 * std::max(1.0, std::abs(c)); ++k) {
        double m = 0.5 * (a + c);
        (f(m) > 0.0 ? c : a) = m;
      }
      x(d - 1) = c;
    }
    if (!in_domain(b, x)) continue;
    out.push_back(x);
  }
  return out;
}

VerificationReport verify_barrier(const Barrier& b, const std::vector<Vec>& interior,
                                  const std::vector<Vec>& boundary) {
  VerificationReport rep;
  rep.pass = true;
  const double sgn = b.role == BarrierRole::Sub ? 1.0 : -1.0;
  const int d = b.d;
  auto record = [&](double slack, double budget, const Vec& x, const char* kind, double& worst) {
    if (slack < std::min(rep.margin, rep.interior_margin)) {
      rep.worst_point = x;
      rep.worst_kind = kind;
    }
    worst = std::min(worst, slack);
    rep.fd_budget = std::max(rep.fd_budget, budget);
    if (slack < -budget) rep.pass = false;
  };
  for (const Vec& x : interior) {
    if (!in_domain(b, x)) throw ConfigError("sample outside barrier domain");
    Fd fd = fd_hessian(b, x);
    double op;
    if (b.frame == BarrierFrame::Physical) {
      op = fd.H.trace();
    } else {
      Vec p = b.gradient(x);
      if (!(p(d - 1) > -1.0)) {
        // Transform degenerates: not a barrier at this amplitude.
        record(-INFINITY, fd.budget, x, "interior", rep.interior_margin);
        ++rep.n_interior;
        continue;
      }
      Mat A = a_matrix_signed(p);
      op = (A.cwiseProduct(fd.H)).sum();
      fd.budget *= A.cwiseAbs().maxCoeff();
    }
    record(sgn * op, fd.budget, x, "interior", rep.interior_margin);
    ++rep.n_interior;
  }
  for (const Vec& x : boundary) {
    if (!in_domain(b, x)) throw ConfigError("sample outside barrier domain");
    Vec g = b.gradient(x);
    double Q = b.Qat(x);
    double slack;
    if (b.frame == BarrierFrame::Physical) {
      slack = sgn * (g.squaredNorm() - Q * Q);
    } else {
      slack = sgn * (Q * (1.0 + g(d - 1)) - std::sqrt(1.0 + g.head(d - 1).squaredNorm()));
    }
    record(slack, 1e-12 * (1.0 + g.squaredNorm()), x, "boundary", rep.margin);
    ++rep.n_boundary;
  }
  return rep;
}

VerificationReport verify_barrier(const Barrier& b, int n) {
  return verify_barrier(b, interior_samples(b, n), boundary_samples(b, n));
}

InterfaceReport check_interface(const Barrier& b, int n) {
  InterfaceReport rep;
  if (!b.params.count("has_pieces")) return rep;
  const double sgn = b.role == BarrierRole::Sub ? 1.0 : -1.0;
  for (double R : b.interface_radii) {
    for (int i = 0; i < n; ++i) {
      Vec u = halton(i, 2);
      Vec nrm = direction(b.d, u(0), u(1), b.frame == BarrierFrame::Hodograph);
      Vec x = R * nrm;
      if (b.frame == BarrierFrame::Physical && !(b.value(x) > 0.0)) continue;
      // One-sided differences of the composite evaluator.
      const double h = 1e-6 * R;
      double v0 = b.value(x);
      double out_d = (b.value(x + h * nrm) - v0) / h;
      double in_d = (v0 - b.value(x - h * nrm)) / h;
      double jump = std::abs(b.value(x * (1 + 1e-13)) - b.value(x * (1 - 1e-13)));
      rep.max_value_jump = std::max(rep.max_value_jump, jump);
      rep.min_signed_normal_jump = std::min(rep.min_signed_normal_jump, sgn * (out_d - in_d));
      ++rep.n;
    }
  }
  return rep;
}

Barrier barrier_plane(int d) {
  Barrier b;
  b.kind = BarrierKind::plane;
  b.d = d;
  b.value = [d](const Vec& x) { return x(d - 1); };
  b.gradient = [d](const Vec&) { return unit(d, d - 1); };
  b.r_max = 10.0;
  return b;
}

Barrier barrier_log_hodograph(double varsigma, BarrierRole role, bool corrected) {
  Barrier b;
  b.kind = BarrierKind::log_hodograph_2d;
  b.frame = BarrierFrame::Hodograph;
  b.role = role;
  b.d = 2;
  b.params = {{"varsigma", varsigma}, {"corrected", corrected ? 1.0 : 0.0}};
  const double sd = role == BarrierRole::Sub ? 1.0 : -1.0;
  const double sl = corrected ? -sd : sd;
  b.value = [=](const Vec& y) {
    double r = y.norm(), L = std::log(r);
    return varsigma * (L + sl * std::log1p(L) + sd * y(1) / (r * r));
  };
  b.gradient = [=](const Vec& y) {
    double r2 = y.squaredNorm(), L = 0.5 * std::log(r2);
    Vec g = y / r2 * (1.0 + sl / (1.0 + L));
    g(1) += sd / r2;
    g -= sd * 2.0 * y(1) * y / (r2 * r2);
    return Vec(varsigma * g);
  };
  b.r_min = 1.0;
  b.r_max = 1000.0;
  return b;
}

Barrier barrier_fundie(int d, double delta_exp, double c, BarrierRole role) {
  if (d < 3) throw ConfigError("homogeneous barriers need d >= 3");
  if (!(delta_exp > 0.0 && delta_exp < d - 1)) throw ConfigError("need 0 < delta < d-1");
  if (std::abs(delta_exp - (d - 2)) < 1e-14) throw ConfigError("delta = d-2 leaves the sign undefined");
  Barrier b;
  b.kind = BarrierKind::fundie;
  b.frame = BarrierFrame::Hodograph;
  b.role = role;
  b.d = d;
  const double a = 2.0 - d + delta_exp;
  const double sh = (d - 2 - delta_exp) > 0 ? 1.0 : -1.0;
  b.params = {{"delta", delta_exp}, {"c", c}, {"exponent", a}, {"sign", sh}};
  const double pre = role == BarrierRole::Super ? sh * c : -sh * c;
  const double shift = role == BarrierRole::Super ? 0.0 : 0.5;
  b.value = [=](const Vec& y) {
    Vec z = y;
    z(d - 1) += shift;
    return pre * std::pow(z.norm(), a);
  };
  b.gradient = [=](const Vec& y) {
    Vec z = y;
    z(d - 1) += shift;
    return Vec(pre * a * std::pow(z.squaredNorm(), 0.5 * a - 1.0) * z);
  };
  b.r_min = 1.0;
  b.r_max = 100.0;
  return b;
}

namespace {

Barrier barrier_small_sigma_3d(double sigma, int d) {
  Barrier b;
  b.kind = BarrierKind::small_sigma_3d;
  b.d = d;
  b.role = sigma >= 0 ? BarrierRole::Sub : BarrierRole::Super;
  const double C = double(d) / (d - 2) + 1.0;
  b.params = {{"sigma", sigma}, {"C", C}, {"has_pieces", 1.0}};
  auto in_v = [=](const Vec& x) { return (1 + sigma) * x(d - 1) - C * sigma; };
  auto out_v = [=](const Vec& x) {
    double r = x.norm();
    return x(d - 1) - C * sigma * std::pow(r, 2.0 - d) + sigma * x(d - 1) / std::pow(r, d);
  };
  b.value = [=](const Vec& x) { return x.norm() < 1.0 ? in_v(x) : out_v(x); };
  b.gradient = [=](const Vec& x) {
    double r = x.norm();
    if (r < 1.0) return Vec((1 + sigma) * unit(d, d - 1));
    Vec g = C * (d - 2) * x / std::pow(r, d) - d * x(d - 1) * x / std::pow(r, d + 2);
    g(d - 1) += 1.0 / std::pow(r, d);
    return Vec(unit(d, d - 1) + sigma * g);
  };
  b.Q = [=](const Vec& x) { return x.head(d - 1).norm() < 1.0 ? 1.0 + sigma : 1.0; };
  b.interface_radii = {1.0};
  b.r_max = 10.0;
  b.fb_rho_max = 4.0;
  b.fb_top = 2.0;
  b.fb_floor = -2.0;
  return b;
}

// Unmollified d=2 hodograph patch: varsigma y_d in B_1, corrected log barrier outside.
double raw2d_value(double vs, const Vec& y) {
  double r = y.norm();
  if (r < 1.0) return vs * y(1);
  double L = std::log(r);
  return vs * (5.0 * L - 2.0 * std::log1p(L) + y(1) / (r * r));
}

Eigen::Vector2d raw2d_grad(double vs, double y0, double y1) {
  double r2 = y0 * y0 + y1 * y1;
  if (r2 < 1.0) return {0.0, vs};
  double L = 0.5 * std::log(r2);
  double f = (5.0 - 2.0 / (1.0 + L)) / r2;
  double g0 = f * y0 - 2.0 * y1 * y0 / (r2 * r2);
  double g1 = f * y1 + 1.0 / r2 - 2.0 * y1 * y1 / (r2 * r2);
  return {vs * g0, vs * g1};
}

struct Mollifier {
  double eps = 0.5;
  double norm = 0.0;  // 1 / integral of exp(-1/(1-|x|^2)) over B_1
  std::vector<double> gx, gw;
  Mollifier() {
    gl_rule<40>(gx, gw);
    double s = 0.0;
    for (size_t i = 0; i < gx.size(); ++i) {
      double r = 0.5 * (gx[i] + 1.0);
      s += 0.5 * gw[i] * std::exp(-1.0 / (1.0 - r * r)) * 2.0 * M_PI * r;
    }
    norm = 1.0 / s;
  }
  double eta(double rho) const {  // unit-mass mollifier in B_1 (unscaled)
    return rho < 1.0 ? norm * std::exp(-1.0 / (1.0 - rho * rho)) : 0.0;
  }
};

const Mollifier& mollifier() {
  static const Mollifier m;
  return m;
}

// (eta_eps * psi, eta_eps * grad psi) at y.
Eigen::Vector3d mollified(double vs, const Vec& y) {
  const Mollifier& M = mollifier();
  const double eps = M.eps, r = y.norm();
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  if (r + eps <= 1.0) return {vs * y(1), 0.0, vs};
  const auto& gx = M.gx;
  const auto& gw = M.gw;
  if (r - eps >= 1.0) {
    // Polar rule centered at y; the kink is outside the support.
    const int nt = 64;
    for (int it = 0; it < nt; ++it) {
      double t = 2 * M_PI * (it + 0.5) / nt, ct = std::cos(t), st = std::sin(t);
      for (size_t i = 0; i < gx.size(); ++i) {
        double rho = 0.5 * (gx[i] + 1.0);
        double w = 0.5 * gw[i] * (2 * M_PI / nt) * M.eta(rho) * rho;
        Vec z(2);
        z << y(0) + eps * rho * ct, y(1) + eps * rho * st;
        Eigen::Vector2d g = raw2d_grad(vs, z(0), z(1));
        acc += w * Eigen::Vector3d(raw2d_value(vs, z), g(0), g(1));
      }
    }
    return acc;
  }
  // Polar rule centered at the origin, split at the kink |z| = 1.
  const double th0 = std::atan2(y(1), y(0)), dth = std::asin(std::min(1.0, eps / r));
  for (size_t a = 0; a < gx.size(); ++a) {
    double th = th0 + dth * gx[a], wth = dth * gw[a];
    double c = std::cos(th), s = std::sin(th);
    double p = y(0) * c + y(1) * s, disc = p * p - r * r + eps * eps;
    if (disc <= 0.0) continue;
    double sq = std::sqrt(disc), R1 = std::max(0.0, p - sq), R2 = p + sq;
    double cuts[3] = {R1, std::clamp(1.0, R1, R2), R2};
    for (int piece = 0; piece < 2; ++piece) {
      double lo = cuts[piece], hi = cuts[piece + 1];
      if (hi - lo <= 0.0) continue;
      for (size_t i = 0; i < gx.size(); ++i) {
        double R = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gx[i];
        double z0 = R * c, z1 = R * s;
        double rho = std::hypot(y(0) - z0, y(1) - z1) / eps;
        double w = 0.5 * (hi - lo) * gw[i] * wth * R * M.eta(rho) / (eps * eps);
        if (w == 0.0) continue;
        Vec z(2);
        z << z0, z1;
        // Piece index decides the branch so the kink is never sampled ambiguously.
        double v = piece == 0 ? vs * z1 : raw2d_value(vs, z);
        Eigen::Vector2d g = piece == 0 ? Eigen::Vector2d(0.0, vs) : raw2d_grad(vs, z0, z1);
        acc += w * Eigen::Vector3d(v, g(0), g(1));
      }
    }
  }
  return acc;
}

}  // namespace

Barrier barrier_small_sigma_2d_raw(double sigma) {
  if (sigma <= -1.0) throw ConfigError("sigma must exceed -1");
  Barrier b;
  b.kind = BarrierKind::mollified_2d;
  b.frame = BarrierFrame::Hodograph;
  b.d = 2;
  const double vs = -sigma / (1.0 + sigma);
  b.role = vs >= 0 ? BarrierRole::Sub : BarrierRole::Super;
  b.params = {{"sigma", sigma}, {"varsigma", vs}, {"has_pieces", 1.0}, {"mollified", 0.0}};
  b.value = [vs](const Vec& y) { return raw2d_value(vs, y); };
  b.gradient = [vs](const Vec& y) {
    Eigen::Vector2d g = raw2d_grad(vs, y(0), y(1));
    return Vec(g);
  };
  b.Q = [sigma](const Vec& y) { return y.norm() < 0.5 ? 1.0 + sigma : 1.0; };
  b.interface_radii = {1.0};
  b.r_min = 0.5;
  b.r_max = 100.0;
  return b;
}

double small_sigma_cap(int d) { return d >= 3 ? 0.6 : 0.05; }

namespace {

Barrier small_sigma_unchecked(double sigma, int d) {
  if (d >= 3) return barrier_small_sigma_3d(sigma, d);
  Barrier b = barrier_small_sigma_2d_raw(sigma);
  const double vs = b.params["varsigma"];
  b.params["mollified"] = 1.0;
  b.params["eps"] = mollifier().eps;
  b.params.erase("has_pieces");
  b.value = [vs](const Vec& y) { return mollified(vs, y)(0); };
  b.gradient = [vs](const Vec& y) {
    Eigen::Vector3d m = mollified(vs, y);
    Vec g(2);
    g << m(1), m(2);
    return g;
  };
  b.interface_radii.clear();
  return b;
}

}  // namespace

Barrier barrier_small_sigma(double sigma, int d) {
  if (d < 2) throw ConfigError("dimension must be >= 2");
  if (std::abs(sigma) > small_sigma_cap(d)) throw ConfigError("|sigma| above verified sigma0");
  return small_sigma_unchecked(sigma, d);
}

double log_supersolution_slope2(double sigma, double s, double r) {
  return 1.0 - 2.0 / (r * r) * (sigma * sigma * std::log(r) + sigma * s - 0.5 * sigma * sigma);
}

Barrier barrier_log_supersolution(double sigma, double s) {
  if (sigma * s < 0.0) throw ConfigError("log supersolution needs sigma * s >= 0");
  Barrier b;
  b.kind = BarrierKind::log_supersolution_2d;
  b.role = BarrierRole::Super;
  b.d = 2;
  b.params = {{"sigma", sigma}, {"s", s}};
  b.value = [=](const Vec& x) { return x(1) + sigma * std::log(x.norm()) + s; };
  b.gradient = [=](const Vec& x) {
    Vec g = sigma * x / x.squaredNorm();
    g(1) += 1.0;
    return g;
  };
  b.r_min = 3.0;
  b.r_max = 200.0;
  b.fb_rho_min = 3.0;
  b.fb_rho_max = 100.0;
  b.fb_top = 2.0 + std::abs(sigma) * std::log(200.0) + std::abs(s);
  b.fb_floor = -b.fb_top;
  return b;
}

double line_potential(double R, const Vec& x) {
  const int d = int(x.size());
  double rho = x.head(d - 1).norm(), a = x(d - 1) + R, b = x(d - 1) - R;
  // log((a + sqrt(rho^2+a^2)) / (b + sqrt(rho^2+b^2))) with cancellation-free branches.
  auto f = [rho](double t) {
    double q = std::sqrt(rho * rho + t * t);
    return t >= 0 ? std::log(t + q) : std::log(rho * rho) - std::log(q - t);
  };
  return f(a) - f(b);
}

Vec line_potential_gradient(double R, const Vec& x) {
  const int d = int(x.size());
  Vec xp = x.head(d - 1);
  double rho = xp.norm(), a = x(d - 1) + R, b = x(d - 1) - R;
  double qa = std::sqrt(rho * rho + a * a), qb = std::sqrt(rho * rho + b * b);
  Vec g = Vec::Zero(d);
  g(d - 1) = 1.0 / qa - 1.0 / qb;
  if (rho > 0.0) {
    // -(1/rho)[a/qa - b/qb], rewritten when a and b share a sign.
    double bracket;
    if (a * b > 0.0) bracket = rho * rho * (a * a - b * b) / (qa * qb * (a * qb + b * qa));
    else bracket = a / qa - b / qb;
    g.head(d - 1) = -bracket / rho * xp / rho;
  }
  return g;
}

double line_sink_depth(double R) {
  if (R < 2.0) throw ConfigError("line sink needs R >= 2");
  auto f = [R](double t) { return R + t - std::log1p(2.0 * R / t); };
  double lo = 1e-12;
  while (f(lo) > 0.0) lo *= 1e-3;
  return R + find_root(f, lo, 1.0);
}

double line_sink_capacity(double R) {
  const int n = 400;
  Mat A(n, 2);
  Vec y(n);
  for (int i = 0; i < n; ++i) {
    Vec u = halton(i, 3);
    double r = 10 * R * std::pow(4.0, u(0));
    Vec x = r * direction(3, u(1), u(2), true);
    double c = x(2) / r;
    A(i, 0) = 1.0 / r;
    A(i, 1) = 0.5 * (3 * c * c - 1) / (r * r * r);
    y(i) = line_potential(R, x);
  }
  Vec coef = A.colPivHouseholderQr().solve(y);
  return coef(0);
}

LineSink barrier_line_sink(double R, double a) {
  LineSink L;
  L.R = R;
  L.depth = line_sink_depth(R);
  const double z = L.depth;
  L.a = a > 0.0 ? a : z - R;
  const double sc = L.a;
  Barrier& b = L.barrier;
  b.kind = BarrierKind::line_sink;
  b.role = BarrierRole::Sub;
  b.d = 3;
  auto X = [=](const Vec& x) {
    Vec y = sc * x;
    y(2) += z;
    return y;
  };
  b.value = [=](const Vec& x) {
    Vec y = X(x);
    return (y(2) - line_potential(R, y)) / sc;
  };
  b.gradient = [=](const Vec& x) {
    Vec g = -line_potential_gradient(R, X(x));
    g(2) += 1.0;
    return g;
  };
  b.r_max = 10.0;
  b.fb_rho_max = 3.0;
  b.fb_top = 1.0;
  b.fb_floor = -z / sc - 5.0;
  // sigma achieved: min slope - 1 over free-boundary points in the unit cylinder.
  b.Q = nullptr;
  // Axisymmetric, so a radial scan of the free boundary over 0 <= |x'| <= 1 suffices.
  double smin = INFINITY;
  for (int k = 0; k <= 400; ++k) {
    Vec x = Vec::Zero(3);
    x(0) = k / 400.0;
    auto f = [&](double t) {
      x(2) = t;
      return b.value(x);
    };
    double hi = b.fb_top, lo = hi;
    while (f(lo) > 0.0) lo -= 0.05;
    x(2) = find_root(f, lo, lo + 0.05);
    smin = std::min(smin, b.gradient(x).norm() - 1.0);
  }
  L.sigma_achieved = smin;
  const double sig = smin;
  b.Q = [sig](const Vec& x) { return x.head(2).norm() < 1.0 ? 1.0 + sig : 1.0; };
  b.params = {{"R", R}, {"z", z}, {"a", sc}, {"sigma_achieved", sig}};
  return L;
}

PointSource barrier_point_source(double r, int d) {
  if (d < 2) throw ConfigError("dimension must be >= 2");
  auto Phi = [d](double t) { return d == 2 ? -std::log(t) : 1.0 / ((d - 2) * std::pow(t, d - 2)); };
  if (r <= Phi(1.0)) throw ConfigError("no pinch: need r > Phi(1)");
  PointSource P;
  P.d = d;
  P.r = r;
  auto f = [&](double s) { return s + Phi(std::abs(s + r + 1)); };
  double hi = 0.0;
  while (f(hi) <= 0.0) hi = 2 * hi + 1;
  P.s0 = find_root(f, -r, hi);
  double e = 1e-300;
  P.s1 = find_root(f, -(r + 1) + std::max(e, 1e-14 * (r + 1)), -r);
  double lo = -(r + 2);
  while (f(lo) >= 0.0) lo = 2 * lo;
  P.s2 = find_root(f, lo, -(r + 1) - 1e-14 * (r + 1));
  P.slope_s0 = 1.0 - 1.0 / std::pow(P.s0 + r + 1, d - 1);

  Barrier& b = P.barrier;
  b.kind = BarrierKind::point_source;
  b.role = BarrierRole::Super;
  b.d = d;
  const double s0 = P.s0;
  auto psi0 = [=](const Vec& x) {
    Vec y = x;
    y(d - 1) += r + 1;
    return x(d - 1) + Phi(y.norm());
  };
  b.value = [=](const Vec& x) { return x(d - 1) >= s0 ? psi0(x) : std::min(psi0(x), 0.0); };
  b.gradient = [=](const Vec& x) {
    Vec y = x;
    y(d - 1) += r + 1;
    Vec g = -y / std::pow(y.norm(), d);
    g(d - 1) += 1.0;
    return g;
  };
  b.params = {{"r", r}, {"s0", P.s0}, {"s1", P.s1}, {"s2", P.s2}};
  b.r_max = 10.0;
  b.fb_rho_max = 6.0;
  b.fb_top = d == 2 ? std::log(r + 10.0) + 2.0 : 1.0;
  b.fb_floor = s0 - 1.0;
  return P;
}

namespace {

SearchResult bisect_constant(const std::function<bool(double, VerificationReport&)>& ok, double hi,
                             int iters) {
  SearchResult out;
  VerificationReport rep;
  ++out.evaluations;
  if (ok(hi, rep)) {
    out.value = hi;
    out.report = rep;
    return out;
  }
  double lo = hi * 1e-4;
  ++out.evaluations;
  if (!ok(lo, rep)) {
    out.value = 0.0;
    out.report = rep;
    return out;
  }
  out.report = rep;
  for (int i = 0; i < iters; ++i) {
    double m = std::sqrt(lo * hi);
    ++out.evaluations;
    if (ok(m, rep)) {
      lo = m;
      out.report = rep;
    } else {
      hi = m;
    }
  }
  out.value = lo;
  return out;
}

}  // namespace

SearchResult search_varsigma0(bool corrected, int n) {
  return bisect_constant(
      [&](double s, VerificationReport& rep) {
        VerificationReport a = verify_barrier(barrier_log_hodograph(s, BarrierRole::Sub, corrected), n);
        VerificationReport b = verify_barrier(barrier_log_hodograph(s, BarrierRole::Super, corrected), n);
        rep = a.pass ? b : a;
        return a.pass && b.pass;
      },
      1.0, 24);
}

SearchResult search_c_delta(int d, double delta_exp, int n) {
  return bisect_constant(
      [&](double c, VerificationReport& rep) {
        VerificationReport a = verify_barrier(barrier_fundie(d, delta_exp, c, BarrierRole::Super), n);
        VerificationReport b = verify_barrier(barrier_fundie(d, delta_exp, c, BarrierRole::Sub), n);
        rep = a.pass ? b : a;
        return a.pass && b.pass;
      },
      10.0, 24);
}

SearchResult search_sigma0(int d, int n) {
  // d>=3: only the subsolution sign is searched (the supersolution fails near the cylinder rim).
  return bisect_constant(
      [&](double s, VerificationReport& rep) {
        VerificationReport a = verify_barrier(small_sigma_unchecked(s, d), n);
        if (d >= 3) {
          rep = a;
          return a.pass;
        }
        VerificationReport b = verify_barrier(small_sigma_unchecked(-s, d), n);
        rep = a.pass ? b : a;
        return a.pass && b.pass;
      },
      0.9, d == 2 ? 10 : 20);
}

}  // namespace pinning
