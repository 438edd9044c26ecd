#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pinning/geometry.hpp"

namespace pinning {

enum class BarrierKind {
  plane,
  small_sigma_3d,
  log_hodograph_2d,
  fundie,
  log_supersolution_2d,
  line_sink,
  point_source,
  mollified_2d,
  patched_periodic
};
enum class BarrierRole { Sub, Super };
// Physical: Bernoulli problem for u with |grad u| = Q on the free boundary.
// Hodograph: tr(A(grad v) D^2 v) in {y_d > 0}, Q (1 + d_d v) = sqrt(1 + |grad' v|^2) on {y_d = 0}.
enum class BarrierFrame { Physical, Hodograph };

std::string to_string(BarrierKind k);
BarrierKind barrier_kind_from_string(const std::string& s);

struct Barrier {
  BarrierKind kind = BarrierKind::plane;
  BarrierRole role = BarrierRole::Sub;
  BarrierFrame frame = BarrierFrame::Physical;
  int d = 2;
  std::map<std::string, double> params;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<double(const Vec&)> Q;  // free-boundary coefficient; defaults to 1

  // Declared domain: r_min <= |x| <= r_max (hodograph: also y_d >= 0).
  double r_min = 0.0, r_max = 100.0;
  // Physical free-boundary search: tangential radius range, start height (inside the positive
  // set) and scan floor.
  double fb_rho_min = 0.0, fb_rho_max = 5.0, fb_top = 1.0, fb_floor = -10.0;
  // Interior samples stay this far from kinks (patch interfaces).
  std::vector<double> interface_radii;
  // Optional extra domain test (e.g. stay outside patch balls).
  std::function<bool(const Vec&)> admissible;

  double Qat(const Vec& x) const { return Q ? Q(x) : 1.0; }
};

struct VerificationReport {
  int n_interior = 0, n_boundary = 0;
  double margin = INFINITY;           // worst signed free-boundary / Neumann slack
  double interior_margin = INFINITY;  // worst signed interior slack
  double fd_budget = 0.0;             // largest finite-difference budget used
  Vec worst_point;
  std::string worst_kind;  // "boundary" or "interior"
  bool pass = false;       // every slack >= -(its budget)
};

// Quasi-random samples of the declared domain; x_d of free-boundary points is found by root search.
std::vector<Vec> interior_samples(const Barrier& b, int n);
std::vector<Vec> boundary_samples(const Barrier& b, int n);

VerificationReport verify_barrier(const Barrier& b, const std::vector<Vec>& interior,
                                  const std::vector<Vec>& boundary);
VerificationReport verify_barrier(const Barrier& b, int n = 500);

// Patch interface diagnostics: max |value jump| and min signed normal-derivative jump
// (positive when the patch selects max in the sub case / min in the super case).
struct InterfaceReport {
  double max_value_jump = 0.0;
  double min_signed_normal_jump = INFINITY;
  int n = 0;
};
InterfaceReport check_interface(const Barrier& b, int n = 200);

// Halton point in [0,1)^dim.
Vec halton(int index, int dim);

Barrier barrier_plane(int d);

// Lemma 3.1 barriers: printed variant log|x| +- log(1+log|x|) +- x_d/|x|^2 or the
// sign-corrected variant log|x| -+ log(1+log|x|) +- x_d/|x|^2. Returned scaled by varsigma.
Barrier barrier_log_hodograph(double varsigma, BarrierRole role, bool corrected = true);

// Homogeneous barriers sigma_hat c |y|^{2-d+delta} (super) and -sigma_hat c |y+e_d/2|^{2-d+delta} (sub).
Barrier barrier_fundie(int d, double delta_exp, double c, BarrierRole role);

// d>=3: patched (1+sigma)x_d - C sigma / x_d - C sigma|x|^{2-d} + sigma x_d/|x|^d, C = d/(d-2)+1.
// d=2: mollified hodograph patch with varsigma = -sigma/(1+sigma).
// Throws ConfigError when |sigma| exceeds small_sigma_cap(d).
Barrier barrier_small_sigma(double sigma, int d);
// Verified caps: below the searched sigma0 (d=3: subsolution sign, see README).
double small_sigma_cap(int d);
// Unmollified d=2 hodograph patch (for interface checks).
Barrier barrier_small_sigma_2d_raw(double sigma);

// (x_d + sigma log|x| + s)_+ on R^2 minus B_3; requires sigma s >= 0.
Barrier barrier_log_supersolution(double sigma, double s);
// Slope^2 on the zero set predicted in closed form.
double log_supersolution_slope2(double sigma, double s, double r);

struct LineSink {
  double R = 5.0;
  double depth = 0.0;      // z solving z = log(1 + 2R/(z-R))
  double a = 1.0;          // rescaling
  double sigma_achieved = 0.0;
  Barrier barrier;         // rescaled a^{-1} phi_R(a x + z e_d)
};
double line_sink_depth(double R);
double line_potential(double R, const Vec& x);      // integral of |x-y|^{-1} over the segment
Vec line_potential_gradient(double R, const Vec& x);
LineSink barrier_line_sink(double R, double a = 0.0);
// Coefficient of |x|^{-1} fitted on |x| in [10R, 40R].
double line_sink_capacity(double R);

struct PointSource {
  int d = 3;
  double r = 2.0;
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  double slope_s0 = 0.0;
  Barrier barrier;  // unscaled psi_r (component containing the upper half-space)
};
PointSource barrier_point_source(double r, int d = 3);

// Searches: largest admissible constant passing verify_barrier (bisection).
struct SearchResult {
  double value = 0.0;
  VerificationReport report;
  int evaluations = 0;
};
SearchResult search_varsigma0(bool corrected = true, int n = 300);
SearchResult search_c_delta(int d, double delta_exp, int n = 300);
SearchResult search_sigma0(int d, int n = 200);

}  // namespace pinning
