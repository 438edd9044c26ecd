#pragma once

#include <string>
#include <vector>

#include "pinning/barriers.hpp"
#include "pinning/capacity.hpp"

namespace pinning {

// Bounded periodic corrector in {x_d > 0} (rotated coordinates, lattice in {x_d = 0}) with
// Neumann data scale * (1 - |xi| sum_z delta_z), normalized by min omega = 0.
struct CellSolution {
  LatticeSpec lattice;
  int d = 2;
  int K = 32;
  double scale = 1.0;
  double c0 = 0.0;                  // additive constant giving min omega = 0
  double far_field_constant = 0.0;  // lim omega as x_d -> infinity
  double singular_coefficient = 0.0;  // fitted coefficient of Phi at a site, per unit scale
  double switch_height = 0.0;       // spectral series used for x_d >= switch_height
  double ewald_alpha = 0.0;         // d=3 splitting parameter
  double ewald_offset = 0.0;        // d=3 constant matching Ewald and spectral forms
  double ewald_mismatch = 0.0;      // cross-check of the matching at a second point

  // Any x_d: x_d < 0 returns the harmonic continuation of omega.
  double value(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  // Truncated Fourier series (x_d > 0), with the same scale and constant.
  double spectral_value(const Vec& x) const;
  Vec spectral_gradient(const Vec& x) const;
  // Closed form (d=2) or Ewald sum (d=3), valid for every x_d.
  double near_value(const Vec& x) const;
  Vec near_gradient(const Vec& x) const;

  std::vector<Vec> dual;  // half of the truncated dual lattice (one of each +-kappa)
  double kappa_cut = 0.0;  // smallest excluded |kappa|
};

// Throws NumericError("increase K") when the truncation tail is above 1e-13 at x_d = 0.25.
CellSolution solve_cell(const LatticeSpec& lattice, int K = 32, double scale = 1.0);

struct CStarReport {
  double face_flux_c = 0.0;        // |xi| minus the face integral of d_d omega at x_d = face_height
  double hemisphere_c = 0.0;       // site mass from the flux through a small hemisphere
  double face_height = 0.0, hemisphere_radius = 0.0;
  double cell_average_max = 0.0;   // max over sampled heights of |<d_d omega>'|
  double singular_coefficient = 0.0;
  double singular_target = 0.0;    // |xi| / gamma_d
  double tail_rate = 0.0;          // fitted lambda in |omega - C| <= C' e^{-lambda x_d}
  double tail_prefactor = 0.0;
  double tail_rate_target = 0.0;   // 2 pi / longest basis length
  double odd_part_max = 0.0;       // odd part in x_d of omega - c Phi - x_d near a site
  double rel_err_face = 0.0, rel_err_hemisphere = 0.0, rel_err_singular = 0.0;
  bool tail_pass = false;
};

// Relative error of the face-flux c_* against |xi|.
double check_c_star(const CellSolution& cell);
CStarReport cell_diagnostics(const CellSolution& cell);

// Single-site profile used inside the patch balls: u(x) in unscaled coordinates around a site.
struct InnerProfile {
  int d = 2;
  double k = 0.0;  // capacity (physical convention)
  double s = 0.0;  // far-field height: u ~ x_d + s
  bool plane = true;
  HodographField field;
  double u(const Vec& x) const;
};

InnerProfile inner_plane(int d, double s = 0.0);
InnerProfile inner_from_field(const HodographField& f, const CapacityRecord& cap);
// Flat single-site branch at the height maximizing k over s_grid (advancing capacity).
InnerProfile flat_branch_inner(const DefectProfile& defect, const std::vector<double>& s_grid,
                               const SingleSiteOptions& o = {});

struct PatchOptions {
  double c = 0.25;       // r = c / Lambda
  double Lambda = 0.0;   // 0 selects 2 (d>=3) or 1.5 (d=2)
  double C0 = -1.0;      // negative: smallest verified value from the bisection search
  int n_sphere = 256;    // samples per patch sphere
  int n_fb = 240;        // free-boundary columns for the C0 search
};

struct PatchedBarrier {
  CellSolution cell;
  InnerProfile inner;
  CoefficientField field;  // Q^delta of the periodic medium
  double delta = 0.0, k = 0.0, eps = 0.0;
  double Lambda = 0.0, r = 0.0, c = 0.0;
  double alpha = 0.0, C0 = 0.0;
  double a = 0.0;           // gamma_d |xi|^{-1} delta^{d-1} (k - eps)
  double shift = 0.0;       // outer profile uses y = x + shift e_d
  double shift_lo = 0.0, shift_hi = 0.0;  // feasible interval from the crossing inequalities
  double s_delta = 0.0;     // reference correction: eps log r (d=2), -eps (delta/r)^{d-2} (d>=3)
  double s_numeric = 0.0;   // shift / delta - s_delta
  double s_reference = 0.0;  // leading-order matching: inner s + k log(1/delta) (d=2), inner s (d>=3)
  double slope = 1.0;       // asymptotic slope 1 - alpha + a
  double normalized_bound = 0.0;  // (slope - 1) / delta^{d-1}

  double outer(const Vec& x) const;
  Vec outer_gradient(const Vec& x) const;
  double inner_value(const Vec& x) const;  // delta u((x - z)/delta) at the nearest site z
  double value(const Vec& x) const;        // w_per
  Barrier barrier() const;  // super barrier on the cell outside the balls B_{Lambda r}
};

// Throws NumericError("delta not small enough for (k, eps)") when the crossing inequalities
// have no common shift.
PatchedBarrier assemble_patched_barrier(const InnerProfile& inner, const CellSolution& cell,
                                        const DefectProfile& defect, double delta, double eps,
                                        const PatchOptions& o = {});

struct QBoundRow {
  double delta = 0.0;
  bool ok = false;
  double eps = 0.0, Lambda = 0.0, alpha = 0.0, C0 = 0.0, shift = 0.0;
  double slope = 1.0;
  double normalized_bound = 0.0;
  double prediction = 0.0;  // gamma_d |xi|^{-1} k
  bool verified = false;    // verify_barrier on the winning barrier
  double verify_margin = 0.0;
  double verify_budget = 0.0;
};

// Per Lambda, the smallest feasible eps (fraction of k, to eps_tol) and the best bound over Lambda.
QBoundRow best_patched_bound(const InnerProfile& inner, const CellSolution& cell,
                             const DefectProfile& defect, double delta,
                             const std::vector<double>& lambdas, const PatchOptions& o = {},
                             int verify_samples = 300, double eps_tol = 1e-3);

// Lambda grid {1.2, 1.5, 2, 3} (d=2) or {2} (d>=3); inner from the flat branch over s in [-0.2, 0.2].
std::vector<QBoundRow> estimate_Q_bound(const std::vector<double>& deltas, const DefectProfile& defect,
                                        const LatticeSpec& lattice, Direction dir,
                                        const SingleSiteOptions& so = {}, int K = 32);

}  // namespace pinning
