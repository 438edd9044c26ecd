#pragma once

#include <string>
#include <vector>

#include "pinning/hodograph.hpp"

namespace pinning {

struct CapacityRecord {
  double s = 0.0;
  double k = 0.0;  // physical convention, positive on the advancing side
  double r_min = 0.0, r_max = 0.0;
  double residual = 0.0;
  std::string convention = "physical";
};

// Least-squares fit of the one-term far-field ansatz over annulus nodes.
// Throws NumericError when the max deviation exceeds tol.
CapacityRecord fit_capacity(const HodographField& f, double r_min, double r_max, double tol = 2e-3);

// Strip fit in d=3: v + s = k * sum_n (-1)^n / |y - 2 n H e_d|, Dirichlet top at y_d = H.
CapacityRecord fit_strip_capacity(const HodographField& f, double H, double r_min, double r_max,
                                  double tol = 2e-3);

struct SingleSiteOptions {
  double L = 200.0;
  double h = 1.0 / 16.0;
  double core = 2.0;
  double stretch = 1.08;
  double r_min = 4.0, r_max = 16.0;
  SolverOptions solver{};
};

struct SingleSiteResult {
  HodographField field;
  CapacityRecord cap;
};

// Flat solution of the single-site problem at height s, with its capacity.
SingleSiteResult single_site(const DefectProfile& defect, double s, const SingleSiteOptions& o = {});

enum class Direction { Advancing, Receding };

struct PinningSweepResult {
  double R = 0.0;
  Direction direction = Direction::Advancing;
  std::vector<double> k_grid;
  std::vector<int> pinned;
  std::vector<double> front_distance;  // min distance of the free boundary to the origin
  double kappa_R = 0.0;
  double jump_gap = 0.0;     // sup-distance between last pinned and first detached fronts
  double bound_violation = 0.0;  // worst excess over the maximum-principle bounds
  bool monotone = true;      // pinned set is an interval
  std::vector<std::vector<Eigen::Vector2d>> fronts;  // per k on the grid
};

struct SweepOptions {
  double h = 1.0 / 16.0;
  double core = 2.0;
  double stretch = 1.08;
  double dk = 0.01;       // continuation step in k
  double tolerance = 1e-4;  // bisection tolerance on kappa
  bool keep_fronts = false;
  SolverOptions solver{};
};

// Finite-radius pinning problem (d=2) in the hodograph box |y'| <= R, 0 <= y_d <= R.
PinningSweepResult sweep_kappa_R(const DefectProfile& defect, double R, Direction dir,
                                 const SweepOptions& o = {});

struct StripOptions {
  double h = 1.0 / 16.0;
  double core = 2.0;
  double stretch = 1.08;
  double lateral_factor = 6.0;
  double r_min = 3.0;
  SolverOptions solver{};
};

struct StripResult {
  CapacityRecord cap;
  double bound_violation = 0.0;  // worst excess over min(-s,-1) <= v <= max(-s,1)
  HodographField field;
};

StripResult strip_solve(const DefectProfile& defect, double s, double R, const StripOptions& o = {});

struct KappaCurve {
  std::vector<double> s, kappa_adv, kappa_rec;
  double support_lo = 0.0, support_hi = 0.0;
};

KappaCurve kappa_curve(const DefectProfile& defect, const std::vector<double>& s_grid, double R,
                       const StripOptions& o = {});

struct Extremal {
  double k_rec = 0.0, k_adv = 0.0;
  double s_adv = 0.0, s_rec = 0.0;  // arg-extremum heights (d>=3)
};

// Max/min over s with parabolic refinement at the discrete extremum.
Extremal extremal_capacities(const KappaCurve& c);
// d=2: fit kappa^R = k - a/log R over the supplied radii.
double extrapolate_kappa(const std::vector<double>& R, const std::vector<double>& kappa,
                         double* slope = nullptr);

void write_sweep_csv(const std::vector<PinningSweepResult>& sweeps, const std::string& path);
void write_curve_csv(const KappaCurve& c, const std::string& path);

}  // namespace pinning
