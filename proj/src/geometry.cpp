#include "pinning/geometry.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pinning {

namespace {

double integrate(const std::function<double(double)>& f, double a, double b) {
  if (b <= a) return 0.0;
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, 1e-12, &err);
}

void check_positivity(const DefectProfile& p, const std::vector<double>& values) {
  double lo = *std::min_element(values.begin(), values.end());
  if (1.0 + p.sigma * std::min(lo, 0.0) <= 0.0 || 1.0 + p.sigma * lo <= 0.0)
    throw ConfigError("defect violates 1 + sigma*q > 0");
}

}  // namespace

double unit_ball_volume(int d) {
  return std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

double gamma_d(int d) {
  if (d == 2) return M_PI;
  return 0.5 * d * (d - 2) * unit_ball_volume(d);
}

DefectProfile canonical_bump(int d, double sigma) {
  if (d != 2 && d != 3) throw ConfigError("dimension must be 2 or 3");
  DefectProfile p;
  p.d = d;
  p.sigma = sigma;
  p.name = "canonical-bump";
  p.shape = [](double r) { double t = 1.0 - r * r; return t > 0 ? t * t : 0.0; };
  p.dshape = [](double r) { double t = 1.0 - r * r; return t > 0 ? -4.0 * r * t : 0.0; };
  p.support_radius = 1.0;
  p.lipschitz_bound = 8.0 / (3.0 * std::sqrt(3.0));
  if (1.0 + std::min(sigma, 0.0) <= 0.0) throw ConfigError("defect violates 1 + sigma*q > 0");
  return p;
}

DefectProfile tabulated_radial(int d, double sigma, std::vector<double> radii,
                               std::vector<double> values) {
  if (d != 2 && d != 3) throw ConfigError("dimension must be 2 or 3");
  if (radii.size() != values.size() || radii.size() < 2)
    throw ConfigError("tabulated profile needs at least two (radius,value) rows");
  for (size_t i = 1; i < radii.size(); ++i)
    if (!(radii[i] > radii[i - 1])) throw ConfigError("tabulated radii must increase");
  if (radii.front() < 0.0 || radii.back() > 1.0)
    throw ConfigError("tabulated radii must lie in [0,1]");
  DefectProfile p;
  p.d = d;
  p.sigma = sigma;
  p.name = "tabulated-radial";
  p.support_radius = radii.back();
  double lip = 0.0;
  for (size_t i = 1; i < radii.size(); ++i)
    lip = std::max(lip, std::abs(values[i] - values[i - 1]) / (radii[i] - radii[i - 1]));
  lip = std::max(lip, std::abs(values.back()) / std::max(1e-300, 1.0 - radii.back()));
  p.lipschitz_bound = lip;
  auto segment = [radii](double r) {
    auto it = std::upper_bound(radii.begin(), radii.end(), r);
    size_t i = it == radii.begin() ? 0 : size_t(it - radii.begin()) - 1;
    return std::min(i, radii.size() - 2);
  };
  p.shape = [radii, values, segment](double r) {
    if (r <= radii.front()) return values.front();
    if (r >= radii.back()) return 0.0;
    size_t i = segment(r);
    double t = (r - radii[i]) / (radii[i + 1] - radii[i]);
    return (1.0 - t) * values[i] + t * values[i + 1];
  };
  p.dshape = [radii, values, segment](double r) {
    if (r <= radii.front() || r >= radii.back()) return 0.0;
    size_t i = segment(r);
    return (values[i + 1] - values[i]) / (radii[i + 1] - radii[i]);
  };
  check_positivity(p, values);
  return p;
}

DefectProfile load_radial_csv(int d, double sigma, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open defect table " + path);
  std::vector<double> r, v;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double a, b;
    if (!(ss >> a >> b)) continue;  // header row
    r.push_back(a);
    v.push_back(b);
  }
  return tabulated_radial(d, sigma, r, v);
}

LatticeSpec build_lattice(const IVec& xi) {
  const int d = int(xi.size());
  if (d != 2 && d != 3) throw ConfigError("direction must have 2 or 3 entries");
  if (xi.cwiseAbs().maxCoeff() == 0) throw ConfigError("zero direction");
  int g = 0;
  for (int i = 0; i < d; ++i) g = std::gcd(g, std::abs(xi(i)));
  if (g != 1) throw ConfigError("reducible direction");

  LatticeSpec L;
  L.d = d;
  L.xi = xi;
  const Vec e = xi.cast<double>().normalized();
  const double norm_xi = xi.cast<double>().norm();

  // Gram-Schmidt completion of e, stored as the last row of O.
  std::vector<Vec> rows;
  for (int k = 0; k < d && int(rows.size()) < d - 1; ++k) {
    Vec c = Vec::Unit(d, k);
    c -= c.dot(e) * e;
    for (const Vec& r : rows) c -= c.dot(r) * r;
    if (c.norm() > 1e-8) rows.push_back(c.normalized());
  }
  L.rotation = Mat(d, d);
  for (int i = 0; i < d - 1; ++i) L.rotation.row(i) = rows[i].transpose();
  L.rotation.row(d - 1) = e.transpose();
  if (L.rotation.determinant() < 0) L.rotation.row(0) *= -1.0;

  if (d == 2) {
    IVec b(2);
    b << xi(1), -xi(0);
    L.integer_basis.push_back(b);
  } else {
    const int B = int(std::ceil(norm_xi)) + 1;
    std::vector<IVec> cand;
    for (int a = -B; a <= B; ++a)
      for (int b = -B; b <= B; ++b)
        for (int c = -B; c <= B; ++c) {
          IVec v(3);
          v << a, b, c;
          if (v.cwiseAbs().maxCoeff() == 0 || v.dot(xi) != 0) continue;
          cand.push_back(v);
        }
    std::stable_sort(cand.begin(), cand.end(), [](const IVec& u, const IVec& v) {
      return u.squaredNorm() < v.squaredNorm();
    });
    const IVec b1 = cand.front();
    IVec b2;
    bool found = false;
    for (const IVec& v : cand) {
      Eigen::Vector3d cr = b1.cast<double>().head<3>().cross(v.cast<double>().head<3>());
      if (cr.norm() > 1e-9) {
        b2 = v;
        found = true;
        break;
      }
    }
    if (!found) throw NumericError("lattice basis search failed");
    double covol = b1.cast<double>().head<3>().cross(b2.cast<double>().head<3>()).norm();
    if (std::abs(covol - norm_xi) > 1e-9) throw NumericError("successive minima do not generate the lattice");
    L.integer_basis = {b1, b2};
  }
  for (const IVec& b : L.integer_basis) {
    Vec r = L.rotation * b.cast<double>();
    r(d - 1) = 0.0;
    L.basis.push_back(r);
  }
  L.cell_area = norm_xi;
  L.rho0 = 0.5 * L.basis.front().norm();
  return L;
}

std::vector<Vec> LatticeSpec::dual_basis() const {
  const int m = d - 1;
  Mat Bm(m, m);
  for (int j = 0; j < m; ++j) Bm.col(j) = basis[j].head(m);
  Mat K = 2.0 * M_PI * Bm.transpose().inverse();  // columns k_i with k_i . b_j = 2 pi delta_ij
  std::vector<Vec> out;
  for (int j = 0; j < m; ++j) out.push_back(K.col(j));
  return out;
}

double LatticeSpec::longest_basis_length() const {
  double l = 0.0;
  for (const Vec& b : basis) l = std::max(l, b.norm());
  return l;
}

Vec LatticeSpec::reduce(const Vec& x) const {
  const int m = d - 1;
  Mat Bm(m, m);
  for (int j = 0; j < m; ++j) Bm.col(j) = basis[j].head(m);
  Vec c = Bm.colPivHouseholderQr().solve(x.head(m));
  Vec base = c.array().round();
  Vec best = x;
  double bestd = INFINITY;
  const int span = 1;
  if (m == 1) {
    for (int a = -span; a <= span; ++a) {
      Vec z = Bm * (base + Vec::Constant(1, a));
      Vec y = x;
      y.head(m) -= z;
      if (y.head(m).norm() < bestd) { bestd = y.head(m).norm(); best = y; }
    }
  } else {
    for (int a = -span; a <= span; ++a)
      for (int b = -span; b <= span; ++b) {
        Vec shift(2);
        shift << a, b;
        Vec z = Bm * (base + shift);
        Vec y = x;
        y.head(m) -= z;
        if (y.head(m).norm() < bestd) { bestd = y.head(m).norm(); best = y; }
      }
  }
  return best;
}

double eval_Q(const CoefficientField& field, const Vec& x) {
  if (field.delta > 0.5) throw ConfigError("overlapping defects");
  if (field.delta <= 0.0) throw ConfigError("delta must be positive");
  if (field.defect.sigma == 0.0) return 1.0;
  Vec y = field.lattice.reduce(x);
  return 1.0 + field.defect.sigma * field.defect.qt(y.norm() / field.delta);
}

double slice_integral(const DefectProfile& defect, double s) {
  const double R = defect.support_radius;
  if (std::abs(s) >= R) return 0.0;
  const double rho = std::sqrt(R * R - s * s);
  if (defect.d == 2) {
    auto f = [&](double t) { return defect.qt(std::sqrt(t * t + s * s)); };
    return 2.0 * integrate(f, 0.0, rho);
  }
  auto f = [&](double t) { return defect.qt(std::sqrt(t * t + s * s)) * t; };
  return 2.0 * M_PI * integrate(f, 0.0, rho);
}

}  // namespace pinning
