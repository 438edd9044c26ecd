#pragma once

#include <Eigen/Sparse>
#include <optional>
#include <string>
#include <vector>

#include "pinning/geometry.hpp"

namespace pinning {

// Block matrix [[I, p'/(1+p_d)], [p'^T/(1+p_d), (1+|p'|^2)/(1+p_d)^2]] as displayed.
Mat a_matrix(const Vec& p);
// Coefficient matrix of the transformed Laplacian; off-diagonal block carries -p'/(1+p_d).
Mat a_matrix_signed(const Vec& p);

double neumann_N(const Vec& pprime);
// (1 + sigma*qt)(1 + d_d v) - sqrt(1 + |p'|^2); qsig is sigma*qt at the trace point.
double neumann_operator(double dvd, const Vec& pprime, double qsig);

enum class OuterClosure { Robin, Dirichlet };

struct HodographDomain {
  int d = 2;
  double L = 200.0;  // tangential half-width (d=2) or radius (d=3, axisymmetric)
  double H = 200.0;  // top of the box in y_d
  double h = 1.0 / 16.0;
  double core = 2.0;     // uniformly resolved region |y'| <= core, y_d <= core
  double stretch = 1.08;  // geometric growth of spacing outside the core
  double s = 0.0;         // far-field height: v -> -s
  OuterClosure closure = OuterClosure::Robin;
  double dirichlet_value = 0.0;

  void validate() const;
};

struct SolverOptions {
  double tol = 1e-9;
  int max_iter = 40;
  double sigma_cap = 0.3;
  double grad_cap = 0.9;
};

struct HodographField {
  int d = 2;
  std::vector<double> xs, zs;  // xs spans [-L,L] (d=2) or [0,L] (d=3)
  Vec v;                       // index i + nx*j
  double residual = 0.0;
  int iterations = 0;
  double sigma = 0.0;
  double s = 0.0;

  int nx() const { return int(xs.size()); }
  int nz() const { return int(zs.size()); }
  double at(int i, int j) const { return v(i + nx() * j); }
  // Local cubic interpolation; x is the tangential coordinate (radius in d=3).
  double value(double x, double z) const;
  Eigen::Vector2d gradient(double x, double z) const;
  Eigen::Vector2d node_gradient(int i, int j) const;  // finite differences on the grid
  double max_grad() const;
  std::vector<Eigen::Vector2d> trace() const;  // physical free boundary (y', v(y',0))
};

std::vector<double> stretched_nodes(double h, double core, double L, double ratio);
// Tangential and vertical node sets used by solve_hodograph for this domain.
std::pair<std::vector<double>, std::vector<double>> hodograph_grid(const HodographDomain& dom);

// Discrete residual F(v) and, optionally, its Jacobian on a given grid.
// Returns false when 1 + d_d v <= 0 at some node.
bool evaluate_system(const HodographDomain& dom, const DefectProfile& defect,
                     const std::vector<double>& xs, const std::vector<double>& zs, const Vec& v,
                     Vec& F, Eigen::SparseMatrix<double>* J);

HodographField solve_hodograph(const HodographDomain& dom, const DefectProfile& defect,
                               const SolverOptions& opt = {},
                               const HodographField* guess = nullptr);

// Residual of the discrete system for a given field (max norm), used by tests.
double hodograph_residual(const HodographDomain& dom, const DefectProfile& defect,
                          const HodographField& f);

struct FreeBoundarySolution {
  int d = 2;
  std::vector<double> xs, zs;  // physical grid (tangential, vertical)
  Mat u;                       // u(i,j) at (xs[i], zs[j])
  std::vector<Eigen::Vector2d> front;
  double harmonic_defect = 0.0;  // max discrete |Lap u| over interior positive nodes
  double u_scale = 0.0;
};

FreeBoundarySolution invert_hodograph(const HodographField& f, double x0, double x1,
                                      double z0, double z1, int nx, int nz);

void write_field_csv(const HodographField& f, const std::string& path);
void write_polyline_csv(const std::vector<Eigen::Vector2d>& poly, const std::string& path);

}  // namespace pinning
