#include "pinning/hodograph.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace pinning {

Mat a_matrix(const Vec& p) {
  const int d = int(p.size());
  const double pd = p(d - 1);
  if (pd <= -1.0) throw NumericError("degenerate transform");
  Mat A = Mat::Identity(d, d);
  Vec pp = p.head(d - 1);
  A.block(0, d - 1, d - 1, 1) = pp / (1.0 + pd);
  A.block(d - 1, 0, 1, d - 1) = pp.transpose() / (1.0 + pd);
  A(d - 1, d - 1) = (1.0 + pp.squaredNorm()) / ((1.0 + pd) * (1.0 + pd));
  return A;
}

Mat a_matrix_signed(const Vec& p) {
  Mat A = a_matrix(p);
  const int d = int(p.size());
  A.block(0, d - 1, d - 1, 1) *= -1.0;
  A.block(d - 1, 0, 1, d - 1) *= -1.0;
  return A;
}

double neumann_N(const Vec& pprime) { return std::sqrt(1.0 + pprime.squaredNorm()) - 1.0; }

double neumann_operator(double dvd, const Vec& pprime, double qsig) {
  return (1.0 + qsig) * (1.0 + dvd) - std::sqrt(1.0 + pprime.squaredNorm());
}

void HodographDomain::validate() const {
  if (d != 2 && d != 3) throw ConfigError("dimension must be 2 or 3");
  if (L < 4.0 || H < 4.0) throw ConfigError("hodograph box needs L >= 4 and H >= 4");
  if (h > 0.125 + 1e-15 || h <= 0.0) throw ConfigError("grid spacing must satisfy 0 < h <= 1/8");
  if (stretch < 1.0) throw ConfigError("stretch ratio must be >= 1");
}

std::vector<double> stretched_nodes(double h, double core, double L, double ratio) {
  std::vector<double> x{0.0};
  core = std::min(core, L);
  const int n = std::max(1, int(std::lround(core / h)));
  const double hc = core / n;
  for (int i = 1; i <= n; ++i) x.push_back(i * hc);
  double dx = hc;
  while (x.back() < L - 1e-12) {
    dx *= ratio;
    double next = x.back() + dx;
    if (L - next < 0.5 * dx) next = L;
    x.push_back(next);
  }
  x.back() = L;
  return x;
}

namespace {

struct Term {
  int idx;
  double w;
};
using Sten = std::vector<Term>;

enum class Row { Interior, Axis, Bottom, Robin, Dirichlet };

struct NodeEq {
  Row type;
  double x, z;
  Sten vx, vz, vxx, vzz, vxz;
};

std::array<double, 3> d1_central(const std::vector<double>& t, int i) {
  double hm = t[i] - t[i - 1], hp = t[i + 1] - t[i];
  return {-hp / (hm * (hm + hp)), (hp - hm) / (hm * hp), hm / (hp * (hm + hp))};
}

std::array<double, 3> d2_central(const std::vector<double>& t, int i) {
  double hm = t[i] - t[i - 1], hp = t[i + 1] - t[i];
  return {2.0 / (hm * (hm + hp)), -2.0 / (hm * hp), 2.0 / (hp * (hm + hp))};
}

// One-sided second-order first derivative at t[i] using t[i], t[i+dir], t[i+2dir].
std::array<double, 3> d1_onesided(const std::vector<double>& t, int i, int dir) {
  double h1 = std::abs(t[i + dir] - t[i]), h2 = std::abs(t[i + 2 * dir] - t[i + dir]);
  double s = dir > 0 ? 1.0 : -1.0;
  return {-s * (2 * h1 + h2) / (h1 * (h1 + h2)), s * (h1 + h2) / (h1 * h2),
          -s * h1 / (h2 * (h1 + h2))};
}

class System {
 public:
  System(const HodographDomain& dom, const DefectProfile& defect, std::vector<double> xs,
         std::vector<double> zs)
      : dom_(dom), q_(defect), xs_(std::move(xs)), zs_(std::move(zs)) {
    nx_ = int(xs_.size());
    nz_ = int(zs_.size());
    build();
  }

  int size() const { return nx_ * nz_; }
  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& zs() const { return zs_; }

  // Residual and optional Jacobian triplets; returns false when 1 + v_z <= 0 somewhere.
  bool evaluate(const Vec& v, Vec& F, std::vector<Eigen::Triplet<double>>* trip) const {
    F.resize(size());
    if (trip) trip->clear();
    const double m = dom_.d - 2;
    for (int r = 0; r < size(); ++r) {
      const NodeEq& e = eqs_[r];
      auto dot = [&](const Sten& s) {
        double a = 0.0;
        for (const Term& t : s) a += t.w * v(t.idx);
        return a;
      };
      double fv = 0, fx = 0, fz = 0, fxx = 0, fzz = 0, fxz = 0, f = 0;
      switch (e.type) {
        case Row::Dirichlet:
          f = v(r) - dom_.dirichlet_value;
          fv = 1.0;
          break;
        case Row::Robin: {
          double px = dot(e.vx), pz = dot(e.vz);
          double rad = std::hypot(e.x, e.z);
          if (dom_.d == 2) {
            double lr = std::log(rad);
            f = e.x * px + e.z * pz - (v(r) + dom_.s) / lr;
            fv = -1.0 / lr;
          } else {
            f = e.x * px + e.z * pz + (v(r) + dom_.s);
            fv = 1.0;
          }
          fx = e.x;
          fz = e.z;
          break;
        }
        case Row::Bottom: {
          double px = dot(e.vx), pz = dot(e.vz);
          double P = 1.0 + pz;
          if (P <= 0.0) return false;
          double vv = v(r);
          double rad = std::hypot(e.x, vv);
          double qs = q_.sigma * q_.qt(rad);
          double sq = std::sqrt(1.0 + px * px);
          f = (1.0 + qs) * P - sq;
          fz = 1.0 + qs;
          fx = -px / sq;
          if (rad > 0.0) fv = q_.sigma * q_.dqt(rad) * (vv / rad) * P;
          break;
        }
        case Row::Axis: {
          double pz = dot(e.vz), wxx = dot(e.vxx), wzz = dot(e.vzz);
          double P = 1.0 + pz;
          if (P <= 0.0) return false;
          f = 2.0 * wxx + wzz / (P * P);
          fxx = 2.0;
          fzz = 1.0 / (P * P);
          fz = -2.0 * wzz / (P * P * P);
          break;
        }
        case Row::Interior: {
          double px = dot(e.vx), pz = dot(e.vz), wxx = dot(e.vxx), wzz = dot(e.vzz),
                 wxz = dot(e.vxz);
          double P = 1.0 + pz;
          if (P <= 0.0) return false;
          double a = (1.0 + px * px) / (P * P);
          double lat = m > 0 ? m * px / e.x : 0.0;
          f = wxx + lat - 2.0 * px * wxz / P + a * wzz;
          fxx = 1.0;
          fzz = a;
          fxz = -2.0 * px / P;
          fx = (m > 0 ? m / e.x : 0.0) - 2.0 * wxz / P + 2.0 * px * wzz / (P * P);
          fz = 2.0 * px * wxz / (P * P) - 2.0 * (1.0 + px * px) * wzz / (P * P * P);
          break;
        }
      }
      F(r) = f;
      if (trip) {
        if (fv != 0.0) trip->emplace_back(r, r, fv);
        auto add = [&](const Sten& s, double c) {
          if (c == 0.0) return;
          for (const Term& t : s) trip->emplace_back(r, t.idx, c * t.w);
        };
        add(e.vx, fx);
        add(e.vz, fz);
        add(e.vxx, fxx);
        add(e.vzz, fzz);
        add(e.vxz, fxz);
      }
    }
    return true;
  }

 private:
  int id(int i, int j) const { return i + nx_ * j; }

  Sten xd1(int i, int j) const {
    if (dom_.d == 3 && i == 0) return {};
    std::array<double, 3> w;
    Sten s;
    if (i == 0) {
      w = d1_onesided(xs_, 0, 1);
      for (int k = 0; k < 3; ++k) s.push_back({id(k, j), w[k]});
    } else if (i == nx_ - 1) {
      w = d1_onesided(xs_, i, -1);
      for (int k = 0; k < 3; ++k) s.push_back({id(i - k, j), w[k]});
    } else {
      w = d1_central(xs_, i);
      for (int k = 0; k < 3; ++k) s.push_back({id(i - 1 + k, j), w[k]});
    }
    return s;
  }

  Sten zd1(int i, int j) const {
    std::array<double, 3> w;
    Sten s;
    if (j == 0) {
      w = d1_onesided(zs_, 0, 1);
      for (int k = 0; k < 3; ++k) s.push_back({id(i, k), w[k]});
    } else if (j == nz_ - 1) {
      w = d1_onesided(zs_, j, -1);
      for (int k = 0; k < 3; ++k) s.push_back({id(i, j - k), w[k]});
    } else {
      w = d1_central(zs_, j);
      for (int k = 0; k < 3; ++k) s.push_back({id(i, j - 1 + k), w[k]});
    }
    return s;
  }

  void build() {
    eqs_.resize(size());
    for (int j = 0; j < nz_; ++j)
      for (int i = 0; i < nx_; ++i) {
        NodeEq e;
        e.x = xs_[i];
        e.z = zs_[j];
        const bool lateral = (i == nx_ - 1) || (dom_.d == 2 && i == 0);
        const bool outer = lateral || j == nz_ - 1;
        if (outer) {
          if (dom_.closure == OuterClosure::Dirichlet) {
            e.type = Row::Dirichlet;
          } else {
            e.type = Row::Robin;
            e.vx = xd1(i, j);
            e.vz = zd1(i, j);
          }
        } else if (j == 0) {
          e.type = Row::Bottom;
          e.vx = xd1(i, j);
          e.vz = zd1(i, j);
        } else if (dom_.d == 3 && i == 0) {
          e.type = Row::Axis;
          double h1 = xs_[1];
          e.vxx = {{id(0, j), -2.0 / (h1 * h1)}, {id(1, j), 2.0 / (h1 * h1)}};
          e.vz = zd1(i, j);
          auto w = d2_central(zs_, j);
          for (int k = 0; k < 3; ++k) e.vzz.push_back({id(i, j - 1 + k), w[k]});
        } else {
          e.type = Row::Interior;
          e.vx = xd1(i, j);
          e.vz = zd1(i, j);
          auto wx = d2_central(xs_, i), wz = d2_central(zs_, j);
          for (int k = 0; k < 3; ++k) {
            e.vxx.push_back({id(i - 1 + k, j), wx[k]});
            e.vzz.push_back({id(i, j - 1 + k), wz[k]});
          }
          auto ax = d1_central(xs_, i), az = d1_central(zs_, j);
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) e.vxz.push_back({id(i - 1 + a, j - 1 + b), ax[a] * az[b]});
        }
        eqs_[id(i, j)] = std::move(e);
      }
  }

  const HodographDomain& dom_;
  const DefectProfile& q_;
  std::vector<double> xs_, zs_;
  int nx_ = 0, nz_ = 0;
  std::vector<NodeEq> eqs_;
};

std::vector<double> tangential_nodes(const HodographDomain& dom) {
  std::vector<double> pos = stretched_nodes(dom.h, dom.core, dom.L, dom.stretch);
  if (dom.d == 3) return pos;
  std::vector<double> xs;
  for (size_t k = pos.size() - 1; k >= 1; --k) xs.push_back(-pos[k]);
  xs.insert(xs.end(), pos.begin(), pos.end());
  return xs;
}

// 4-point Lagrange weights and derivative weights at x for nodes t[0..3].
void lagrange4(const double* t, double x, double* w, double* dw) {
  for (int k = 0; k < 4; ++k) {
    double num = 1.0, den = 1.0;
    for (int m = 0; m < 4; ++m)
      if (m != k) {
        num *= x - t[m];
        den *= t[k] - t[m];
      }
    w[k] = num / den;
    double s = 0.0;
    for (int n = 0; n < 4; ++n) {
      if (n == k) continue;
      double p = 1.0;
      for (int m = 0; m < 4; ++m)
        if (m != k && m != n) p *= x - t[m];
      s += p;
    }
    dw[k] = s / den;
  }
}

}  // namespace

namespace {

// Picks 4 stencil indices around x; negative indices denote mirrored nodes (axis symmetry).
void stencil4(const std::vector<double>& t, double x, bool mirror, int* idx, double* pos) {
  const int n = int(t.size());
  int i = int(std::upper_bound(t.begin(), t.end(), x) - t.begin()) - 1;
  int lo = i - 1;
  if (!mirror) lo = std::clamp(lo, 0, n - 4);
  else lo = std::min(lo, n - 4);
  for (int k = 0; k < 4; ++k) {
    int g = lo + k;
    idx[k] = g;
    pos[k] = g < 0 ? -t[-g] : t[g];
  }
}

}  // namespace

double HodographField::value(double x, double z) const {
  const bool mir = d == 3;
  if (mir) x = std::abs(x);
  int ix[4], iz[4];
  double px[4], pz[4], wx[4], wz[4], dwx[4], dwz[4];
  stencil4(xs, x, mir, ix, px);
  stencil4(zs, z, false, iz, pz);
  lagrange4(px, x, wx, dwx);
  lagrange4(pz, z, wz, dwz);
  double s = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) s += wx[a] * wz[b] * at(std::abs(ix[a]), iz[b]);
  return s;
}

Eigen::Vector2d HodographField::gradient(double x, double z) const {
  const bool mir = d == 3;
  double sgn = (mir && x < 0) ? -1.0 : 1.0;
  if (mir) x = std::abs(x);
  int ix[4], iz[4];
  double px[4], pz[4], wx[4], wz[4], dwx[4], dwz[4];
  stencil4(xs, x, mir, ix, px);
  stencil4(zs, z, false, iz, pz);
  lagrange4(px, x, wx, dwx);
  lagrange4(pz, z, wz, dwz);
  Eigen::Vector2d g(0, 0);
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      double val = at(std::abs(ix[a]), iz[b]);
      g(0) += dwx[a] * wz[b] * val;
      g(1) += wx[a] * dwz[b] * val;
    }
  g(0) *= sgn;
  return g;
}

Eigen::Vector2d HodographField::node_gradient(int i, int j) const {
  const int n = nx(), m = nz();
  double gx = 0.0, gz;
  if (!(d == 3 && i == 0)) {
    if (i == 0) gx = (at(1, j) - at(0, j)) / (xs[1] - xs[0]);
    else if (i == n - 1) gx = (at(i, j) - at(i - 1, j)) / (xs[i] - xs[i - 1]);
    else {
      auto w = d1_central(xs, i);
      gx = w[0] * at(i - 1, j) + w[1] * at(i, j) + w[2] * at(i + 1, j);
    }
  }
  if (j == 0) {
    auto w = d1_onesided(zs, 0, 1);
    gz = w[0] * at(i, 0) + w[1] * at(i, 1) + w[2] * at(i, 2);
  } else if (j == m - 1) {
    gz = (at(i, j) - at(i, j - 1)) / (zs[j] - zs[j - 1]);
  } else {
    auto w = d1_central(zs, j);
    gz = w[0] * at(i, j - 1) + w[1] * at(i, j) + w[2] * at(i, j + 1);
  }
  return {gx, gz};
}

double HodographField::max_grad() const {
  double mg = 0.0;
  for (int j = 0; j < nz(); ++j)
    for (int i = 0; i < nx(); ++i) mg = std::max(mg, node_gradient(i, j).norm());
  return mg;
}

std::vector<Eigen::Vector2d> HodographField::trace() const {
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i < nx(); ++i) out.emplace_back(xs[i], at(i, 0));
  return out;
}

std::pair<std::vector<double>, std::vector<double>> hodograph_grid(const HodographDomain& dom) {
  return {tangential_nodes(dom), stretched_nodes(dom.h, dom.core, dom.H, dom.stretch)};
}

bool evaluate_system(const HodographDomain& dom, const DefectProfile& defect,
                     const std::vector<double>& xs, const std::vector<double>& zs, const Vec& v,
                     Vec& F, Eigen::SparseMatrix<double>* J) {
  System sys(dom, defect, xs, zs);
  std::vector<Eigen::Triplet<double>> trip;
  bool ok = sys.evaluate(v, F, J ? &trip : nullptr);
  if (ok && J) {
    J->resize(sys.size(), sys.size());
    J->setFromTriplets(trip.begin(), trip.end());
  }
  return ok;
}

HodographField solve_hodograph(const HodographDomain& dom, const DefectProfile& defect,
                               const SolverOptions& opt, const HodographField* guess) {
  dom.validate();
  if (std::abs(defect.sigma) > opt.sigma_cap)
    throw ConfigError("defect amplitude above solver cap");
  if (defect.d != dom.d) throw ConfigError("defect and domain dimensions differ");
  System sys(dom, defect, tangential_nodes(dom),
             stretched_nodes(dom.h, dom.core, dom.H, dom.stretch));

  HodographField f;
  f.d = dom.d;
  f.xs = sys.xs();
  f.zs = sys.zs();
  f.sigma = defect.sigma;
  f.s = dom.s;
  const double base = dom.closure == OuterClosure::Dirichlet ? dom.dirichlet_value : -dom.s;
  if (guess && guess->xs == f.xs && guess->zs == f.zs) f.v = guess->v;
  else f.v = Vec::Constant(sys.size(), base);

  Vec F;
  std::vector<Eigen::Triplet<double>> trip;
  Eigen::SparseMatrix<double> J(sys.size(), sys.size());
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  const std::string fail = "no flat solution at this (sigma,s)";
  if (!sys.evaluate(f.v, F, &trip)) throw NumericError(fail);
  double res = F.lpNorm<Eigen::Infinity>();
  int it = 0;
  while (res > opt.tol) {
    if (it >= opt.max_iter) throw NumericError(fail);
    J.setFromTriplets(trip.begin(), trip.end());
    if (!analyzed) {
      lu.analyzePattern(J);
      analyzed = true;
    }
    lu.factorize(J);
    if (lu.info() != Eigen::Success) throw NumericError(fail);
    Vec step = lu.solve(-F);
    const double n0 = F.norm();
    double lam = 1.0;
    bool accepted = false;
    Vec trial, Ft;
    for (int k = 0; k < 30; ++k, lam *= 0.5) {
      trial = f.v + lam * step;
      if (sys.evaluate(trial, Ft, nullptr) && Ft.norm() <= (1.0 - 1e-4 * lam) * n0) {
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NumericError(fail);
    f.v = trial;
    sys.evaluate(f.v, F, &trip);
    res = F.lpNorm<Eigen::Infinity>();
    ++it;
  }
  f.residual = res;
  f.iterations = it;
  if (f.max_grad() >= opt.grad_cap) throw NumericError("left flat regime");
  return f;
}

double hodograph_residual(const HodographDomain& dom, const DefectProfile& defect,
                          const HodographField& f) {
  System sys(dom, defect, f.xs, f.zs);
  Vec F;
  if (!sys.evaluate(f.v, F, nullptr)) return INFINITY;
  return F.lpNorm<Eigen::Infinity>();
}

FreeBoundarySolution invert_hodograph(const HodographField& f, double x0, double x1,
                                      double z0, double z1, int nx, int nz) {
  for (int i = 0; i < f.nx(); ++i)
    for (int j = 0; j + 1 < f.nz(); ++j)
      if (f.at(i, j + 1) - f.at(i, j) <= -(f.zs[j + 1] - f.zs[j]))
        throw NumericError("non-invertible hodograph field");
  FreeBoundarySolution out;
  out.d = f.d;
  out.front = f.trace();
  out.u = Mat::Zero(nx, nz);
  for (int i = 0; i < nx; ++i) out.xs.push_back(nx == 1 ? x0 : x0 + (x1 - x0) * i / (nx - 1));
  for (int j = 0; j < nz; ++j) out.zs.push_back(nz == 1 ? z0 : z0 + (z1 - z0) * j / (nz - 1));
  const double ztop = f.zs.back();
  for (int i = 0; i < nx; ++i) {
    const double x = out.xs[i];
    const double g0 = f.value(x, 0.0);
    for (int j = 0; j < nz; ++j) {
      const double xd = out.zs[j];
      if (xd <= g0) continue;
      double lo = 0.0, hi = std::min(ztop, xd - g0 + 1.0);
      while (hi + f.value(x, hi) < xd && hi < ztop) hi = std::min(ztop, 2.0 * hi + 1.0);
      for (int k = 0; k < 80 && hi - lo > 1e-14; ++k) {
        double mid = 0.5 * (lo + hi);
        if (mid + f.value(x, mid) < xd) lo = mid;
        else hi = mid;
      }
      out.u(i, j) = 0.5 * (lo + hi);
    }
  }
  out.u_scale = out.u.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (int i = 1; i + 1 < nx; ++i)
    for (int j = 1; j + 1 < nz; ++j) {
      if (out.u(i - 1, j) <= 0 || out.u(i + 1, j) <= 0 || out.u(i, j - 1) <= 0 || out.u(i, j + 1) <= 0 ||
          out.u(i, j) <= 0)
        continue;
      double hx = out.xs[1] - out.xs[0], hz = out.zs[1] - out.zs[0];
      double lap = (out.u(i + 1, j) - 2 * out.u(i, j) + out.u(i - 1, j)) / (hx * hx) +
                   (out.u(i, j + 1) - 2 * out.u(i, j) + out.u(i, j - 1)) / (hz * hz);
      if (f.d == 3) {
        double r = out.xs[i];
        if (std::abs(r) < 1e-12) continue;
        lap += (out.u(i + 1, j) - out.u(i - 1, j)) / (2 * hx * r);
      }
      worst = std::max(worst, std::abs(lap));
    }
  out.harmonic_defect = worst;
  return out;
}

void write_field_csv(const HodographField& f, const std::string& path) {
  std::ofstream o(path);
  if (!o) throw ConfigError("cannot write " + path);
  o << std::setprecision(17) << "y_tan,y_d,v\n";
  for (int j = 0; j < f.nz(); ++j)
    for (int i = 0; i < f.nx(); ++i) o << f.xs[i] << ',' << f.zs[j] << ',' << f.at(i, j) << '\n';
}

void write_polyline_csv(const std::vector<Eigen::Vector2d>& poly, const std::string& path) {
  std::ofstream o(path);
  if (!o) throw ConfigError("cannot write " + path);
  o << std::setprecision(17) << "x_tan,x_d\n";
  for (const auto& p : poly) o << p(0) << ',' << p(1) << '\n';
}

}  // namespace pinning
