#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pinning/capacity.hpp"

namespace pinning {

enum class KernelMode { Paper, Physical };

// Unnormalized upward fundamental solution: -log|x| (d=2), |x|^{2-d} (d>=3).
double Phi_unnormalized(int d, double r);

struct LinearizedSolution {
  int d = 2;
  double s = 0.0;
  double kernel_constant = 1.0;  // 1 (paper) or 1/gamma_d (physical)
  DefectProfile defect;
  // Coefficient of log|y| (d=2, -kernel_constant * I) or |y|^{2-d} (d>=3, +kernel_constant * I).
  double far_field_coefficient = 0.0;

  double w(double x, double z) const;      // x tangential (radius in d=3), z >= 0
  double dw_dz(double x, double z) const;  // z = 0 gives the boundary trace limit
};

LinearizedSolution kernel_convolve(const DefectProfile& defect, double s, KernelMode mode);

struct FixedPointResult {
  HodographField v;          // v = -s + sigma w_h + sigma^2 r on the solver grid
  HodographField w_h;        // discrete linear solution
  Vec r;
  double r_norm = 0.0;       // ||r||_Phi
  std::vector<double> increments;  // ||r_{n+1} - r_n||_Phi
  double contraction = 0.0;  // last increment ratio
  int iterations = 0;
  CapacityRecord cap;
};

// Weighted C^1 norm with weights |Phi(2+|y|)| and |grad Phi(2+|y|)|.
double phi_norm(const HodographField& grid, const Vec& r);

FixedPointResult fixed_point_remainder(const DefectProfile& defect, double s, int max_iter = 60,
                                       const SingleSiteOptions& o = {});

struct Calibration {
  int d = 2;
  double c_cal = 0.0;
  std::string provenance;
  double limit_ratio = 0.0;  // extrapolated lim k/(sigma I(0))
  std::vector<double> sigmas, k_over_sigma;
};

// Runs the nonlinear solver at a sigma-halving sequence and selects c_cal in {1, 1/gamma_d}.
Calibration calibrate(int d, const std::vector<double>& sigmas = {0.02, 0.01, 0.005},
                      const SingleSiteOptions& o = {});
void save_calibration(const Calibration& c, const std::string& path);
Calibration load_calibration(const std::string& path);

double predict_capacity(const DefectProfile& defect, double s, const std::optional<Calibration>& cal);

}  // namespace pinning
