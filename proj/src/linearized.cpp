#include "pinning/linearized.hpp"

#include <Eigen/SparseLU>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/ellint_1.hpp>
#include <boost/math/special_functions/ellint_2.hpp>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace pinning {

namespace {

double quad(const std::function<double(double)>& f, double a, double b) {
  if (b <= a) return 0.0;
  boost::math::quadrature::tanh_sinh<double> ts(12);
  return ts.integrate(f, a, b, 1e-12);
}

// Integral over [a,b] split at an interior point c where the integrand may be singular.
double quad_split(const std::function<double(double)>& f, double a, double b, double c) {
  if (c > a && c < b) return quad(f, a, c) + quad(f, c, b);
  return quad(f, a, b);
}

}  // namespace

double Phi_unnormalized(int d, double r) {
  if (d == 2) return -std::log(r);
  return std::pow(r, 2.0 - d);
}

LinearizedSolution kernel_convolve(const DefectProfile& defect, double s, KernelMode mode) {
  LinearizedSolution L;
  L.d = defect.d;
  L.s = s;
  L.defect = defect;
  L.kernel_constant = mode == KernelMode::Paper ? 1.0 : 1.0 / gamma_d(defect.d);
  // w ~ kernel_constant * I * Phi, with Phi = -log in d=2.
  const double I = slice_integral(defect, -s);
  L.far_field_coefficient = L.d == 2 ? -L.kernel_constant * I : L.kernel_constant * I;
  return L;
}

double LinearizedSolution::w(double x, double z) const {
  const double R = defect.support_radius;
  if (std::abs(s) >= R) return 0.0;
  const double rho = std::sqrt(R * R - s * s);
  auto qs = [&](double t) { return defect.qt(std::sqrt(t * t + s * s)); };
  if (d == 2) {
    auto f = [&](double t) {
      double r2 = (x - t) * (x - t) + z * z;
      return r2 > 0 ? -0.5 * std::log(r2) * qs(t) : 0.0;
    };
    return kernel_constant * quad_split(f, -rho, rho, x);
  }
  x = std::abs(x);
  auto f = [&](double t) {
    double a = x * x + t * t + z * z, b = 2.0 * x * t;
    if (a + b <= 0.0) return 0.0;
    double k = std::sqrt(2.0 * b / (a + b));
    if (k >= 1.0) return 0.0;
    return qs(t) * t * 4.0 * boost::math::ellint_1(k) / std::sqrt(a + b);
  };
  return kernel_constant * quad_split(f, 0.0, rho, x);
}

double LinearizedSolution::dw_dz(double x, double z) const {
  const double R = defect.support_radius;
  if (std::abs(s) >= R) return 0.0;
  const double rho = std::sqrt(R * R - s * s);
  auto qs = [&](double t) { return defect.qt(std::sqrt(t * t + s * s)); };
  const double gd = gamma_d(d);
  if (z <= 0.0) return -kernel_constant * gd * qs(std::abs(x));
  if (d == 2) {
    // Poisson kernel with the local value subtracted.
    double q0 = std::abs(x) < rho ? qs(x) : 0.0;
    auto f = [&](double t) { return z / ((x - t) * (x - t) + z * z) * (qs(t) - q0); };
    double mass = std::atan((rho - x) / z) + std::atan((rho + x) / z);
    return -kernel_constant * (q0 * mass + quad_split(f, -rho, rho, x));
  }
  x = std::abs(x);
  auto f = [&](double t) {
    double a = x * x + t * t + z * z, b = 2.0 * x * t;
    double k = std::sqrt(2.0 * b / (a + b));
    return qs(t) * t * 4.0 * boost::math::ellint_2(k) / ((a - b) * std::sqrt(a + b));
  };
  return -kernel_constant * z * quad_split(f, 0.0, rho, x);
}

double phi_norm(const HodographField& grid, const Vec& r) {
  HodographField g = grid;
  g.v = r;
  double a = 0.0, b = 0.0;
  for (int j = 0; j < g.nz(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double t = 2.0 + std::hypot(g.xs[i], g.zs[j]);
      double wv = g.d == 2 ? std::log(t) : std::pow(t, 2.0 - g.d);
      double wg = std::pow(t, 1.0 - g.d);
      a = std::max(a, std::abs(g.at(i, j)) / wv);
      b = std::max(b, g.node_gradient(i, j).norm() / wg);
    }
  return a + b;
}

FixedPointResult fixed_point_remainder(const DefectProfile& defect, double s, int max_iter,
                                       const SingleSiteOptions& o) {
  const double sigma = defect.sigma;
  if (sigma == 0.0) throw ConfigError("fixed point needs sigma != 0");
  if (std::abs(sigma) > o.solver.sigma_cap) throw ConfigError("defect amplitude above solver cap");
  HodographDomain dom;
  dom.d = defect.d;
  dom.L = o.L;
  dom.H = o.L;
  dom.h = o.h;
  dom.core = o.core;
  dom.stretch = o.stretch;
  dom.s = s;
  dom.validate();
  auto [xs, zs] = hodograph_grid(dom);
  const int nx = int(xs.size()), nz = int(zs.size()), N = nx * nz;

  DefectProfile flat = defect;
  flat.sigma = 0.0;
  Vec F, base = Vec::Constant(N, -s);
  Eigen::SparseMatrix<double> M;
  evaluate_system(dom, flat, xs, zs, base, F, &M);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(M);
  if (lu.info() != Eigen::Success) throw NumericError("linear Neumann operator is singular");

  std::vector<int> bottom;
  for (int i = 0; i < nx; ++i) {
    bool lateral = (i == nx - 1) || (dom.d == 2 && i == 0);
    if (!lateral) bottom.push_back(i);
  }
  Vec b = Vec::Zero(N);
  for (int i : bottom) b(i) = -defect.qt(std::hypot(xs[i], s));

  FixedPointResult out;
  out.w_h.d = dom.d;
  out.w_h.xs = xs;
  out.w_h.zs = zs;
  out.w_h.v = lu.solve(b);
  out.r = Vec::Zero(N);
  Vec v;
  for (int it = 0; it < max_iter; ++it) {
    v = base + sigma * out.w_h.v + sigma * sigma * out.r;
    if (!evaluate_system(dom, defect, xs, zs, v, F, nullptr))
      throw NumericError("sigma beyond contraction regime");
    for (int i : bottom) F(i) /= 1.0 + sigma * defect.qt(std::hypot(xs[i], v(i)));
    Vec delta = lu.solve(-F / (sigma * sigma));
    out.r += delta;
    double inc = phi_norm(out.w_h, delta);
    out.increments.push_back(inc);
    out.iterations = it + 1;
    if (!std::isfinite(inc) || (it > 2 && inc > out.increments[it - 1] * 1.5 && inc > 1e-6))
      throw NumericError("sigma beyond contraction regime");
    if (inc < 1e-8) break;
    if (it + 1 == max_iter) throw NumericError("sigma beyond contraction regime");
  }
  size_t n = out.increments.size();
  if (n >= 3) out.contraction = out.increments[n - 2] / out.increments[n - 3];
  out.r_norm = phi_norm(out.w_h, out.r);
  out.v = out.w_h;
  out.v.v = base + sigma * out.w_h.v + sigma * sigma * out.r;
  out.v.sigma = sigma;
  out.v.s = s;
  evaluate_system(dom, defect, xs, zs, out.v.v, F, nullptr);
  out.v.residual = F.lpNorm<Eigen::Infinity>();
  out.cap = fit_capacity(out.v, o.r_min, o.r_max, INFINITY);
  return out;
}

Calibration calibrate(int d, const std::vector<double>& sigmas, const SingleSiteOptions& o) {
  Calibration c;
  c.d = d;
  c.sigmas = sigmas;
  const double I0 = slice_integral(canonical_bump(d, 1.0), 0.0);
  Mat A(sigmas.size(), 2);
  Vec y(sigmas.size());
  for (size_t i = 0; i < sigmas.size(); ++i) {
    double k = single_site(canonical_bump(d, sigmas[i]), 0.0, o).cap.k;
    c.k_over_sigma.push_back(k / sigmas[i]);
    A(i, 0) = 1.0;
    A(i, 1) = sigmas[i];
    y(i) = k / sigmas[i];
  }
  Vec fit = A.colPivHouseholderQr().solve(y);
  c.limit_ratio = fit(0) / I0;
  const double cands[2] = {1.0, 1.0 / gamma_d(d)};
  c.c_cal = std::abs(std::log(c.limit_ratio / cands[0])) < std::abs(std::log(c.limit_ratio / cands[1]))
                ? cands[0]
                : cands[1];
  std::ostringstream p;
  p << "nonlinear hodograph solve, canonical bump, d=" << d << ", s=0, sigma in {";
  for (size_t i = 0; i < sigmas.size(); ++i) p << (i ? "," : "") << sigmas[i];
  p << "}, h=" << o.h << ", L=" << o.L << "; linear extrapolation of k/sigma gives "
    << c.limit_ratio << " * I(0)";
  c.provenance = p.str();
  return c;
}

void save_calibration(const Calibration& c, const std::string& path) {
  nlohmann::json j;
  j["d"] = c.d;
  j["c_cal"] = c.c_cal;
  j["provenance"] = c.provenance;
  j["limit_ratio"] = c.limit_ratio;
  j["sigmas"] = c.sigmas;
  j["k_over_sigma"] = c.k_over_sigma;
  std::ofstream o(path);
  if (!o) throw ConfigError("cannot write " + path);
  o << j.dump(2) << '\n';
}

Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read calibration " + path);
  nlohmann::json j;
  in >> j;
  Calibration c;
  c.d = j.at("d");
  c.c_cal = j.at("c_cal");
  c.provenance = j.at("provenance");
  c.limit_ratio = j.value("limit_ratio", 0.0);
  c.sigmas = j.value("sigmas", std::vector<double>{});
  c.k_over_sigma = j.value("k_over_sigma", std::vector<double>{});
  return c;
}

double predict_capacity(const DefectProfile& defect, double s, const std::optional<Calibration>& cal) {
  if (!cal) throw ConfigError("calibration missing");
  if (cal->d != defect.d) throw ConfigError("calibration dimension mismatch");
  return cal->c_cal * defect.sigma * slice_integral(defect, -s);
}

}  // namespace pinning
