#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinning {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using IVec = Eigen::VectorXi;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Radially symmetric defect q = sigma * qt(|x|), supported in the closed unit ball.
struct DefectProfile {
  int d = 2;
  double sigma = 0.0;
  std::string name;
  std::function<double(double)> shape;   // qt as a function of radius
  std::function<double(double)> dshape;  // d qt / dr
  double support_radius = 1.0;
  double lipschitz_bound = 0.0;

  double qt(double r) const { return r >= support_radius ? 0.0 : shape(r); }
  double dqt(double r) const { return r >= support_radius ? 0.0 : dshape(r); }
  double qt(const Vec& x) const { return qt(x.norm()); }
  double q(const Vec& x) const { return sigma * qt(x); }
  // True when the defect q has nonempty support.
  bool active() const { return sigma != 0.0 && support_radius > 0.0; }
};

DefectProfile canonical_bump(int d, double sigma);
DefectProfile tabulated_radial(int d, double sigma, std::vector<double> radii,
                               std::vector<double> values);
DefectProfile load_radial_csv(int d, double sigma, const std::string& path);

struct LatticeSpec {
  int d = 2;
  IVec xi;
  Mat rotation;               // O with O xi/|xi| = e_d
  std::vector<IVec> integer_basis;
  std::vector<Vec> basis;     // O * integer_basis, last coordinate 0
  double cell_area = 1.0;
  double rho0 = 0.5;

  Vec reduce(const Vec& x) const;  // translate x' into the fundamental cell around 0
  std::vector<Vec> dual_basis() const;
  double longest_basis_length() const;
};

LatticeSpec build_lattice(const IVec& xi);

struct CoefficientField {
  DefectProfile defect;
  double delta = 0.1;
  LatticeSpec lattice;
};

// x is given in rotated coordinates, where the lattice lies in {x_d = 0}.
double eval_Q(const CoefficientField& field, const Vec& x);

// I(s) = integral of qt over the hyperplane {x_d = s}.
double slice_integral(const DefectProfile& defect, double s);

double gamma_d(int d);
double unit_ball_volume(int d);

}  // namespace pinning
