#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "pinning/linearized.hpp"

using namespace pinning;

TEST_CASE("zero profile gives zero linear solution") {
  for (int d : {2, 3}) {
    DefectProfile zero = tabulated_radial(d, 1.0, {0.0, 0.5, 1.0}, {0.0, 0.0, 0.0});
    LinearizedSolution w = kernel_convolve(zero, 0.0, KernelMode::Physical);
    CHECK(w.far_field_coefficient == 0.0);
    for (double x : {0.0, 0.5, 3.0}) {
      CHECK(w.w(x, 0.5) == 0.0);
      CHECK(w.dw_dz(x, 0.0) == 0.0);
    }
  }
}

TEST_CASE("physical kernel satisfies the boundary condition") {
  for (int d : {2, 3}) {
    DefectProfile q = canonical_bump(d, 1.0);
    LinearizedSolution w = kernel_convolve(q, 0.0, KernelMode::Physical);
    CHECK(w.kernel_constant == doctest::Approx(1.0 / gamma_d(d)));
    for (double x : {0.0, 0.3, 0.7, 1.5, 3.0}) CHECK(std::abs(w.dw_dz(x, 0.0) + q.qt(x)) < 1e-6);
  }
}

TEST_CASE("paper kernel is off by gamma_d") {
  DefectProfile q = canonical_bump(2, 1.0);
  LinearizedSolution w = kernel_convolve(q, 0.0, KernelMode::Paper);
  CHECK(w.kernel_constant == 1.0);
  for (double x : {0.0, 0.3, 0.7}) {
    double residual = w.dw_dz(x, 0.0) + q.qt(x);
    CHECK(residual / q.qt(x) == doctest::Approx(1.0 - M_PI).epsilon(1e-6));
  }
}

TEST_CASE("far-field coefficient and harmonicity") {
  DefectProfile q2 = canonical_bump(2, 1.0);
  LinearizedSolution w2 = kernel_convolve(q2, 0.0, KernelMode::Physical);
  CHECK(w2.far_field_coefficient == doctest::Approx(-slice_integral(q2, 0.0) / M_PI));
  CHECK(w2.w(30.0, 40.0) == doctest::Approx(w2.far_field_coefficient * std::log(50.0)).epsilon(1e-3));

  DefectProfile q3 = canonical_bump(3, 1.0);
  LinearizedSolution w3 = kernel_convolve(q3, 0.0, KernelMode::Physical);
  CHECK(w3.far_field_coefficient == doctest::Approx(slice_integral(q3, 0.0) / gamma_d(3)));
  CHECK(w3.w(30.0, 40.0) == doctest::Approx(w3.far_field_coefficient / 50.0).epsilon(1e-3));

  const double h = 1e-3;
  for (auto [x, z] : {std::pair{0.4, 0.6}, std::pair{2.0, 1.0}}) {
    double lap = (w2.w(x + h, z) + w2.w(x - h, z) + w2.w(x, z + h) + w2.w(x, z - h) - 4 * w2.w(x, z)) / (h * h);
    CHECK(std::abs(lap) < 1e-4);
  }
}

TEST_CASE("prediction identities") {
  Calibration cal;
  cal.d = 2;
  cal.c_cal = 1.0 / M_PI;
  CHECK(predict_capacity(canonical_bump(2, 0.0), 0.0, cal) == 0.0);
  CHECK_THROWS_AS(predict_capacity(canonical_bump(2, 0.01), 0.0, std::nullopt), ConfigError);
  CHECK_THROWS_AS(predict_capacity(canonical_bump(3, 0.01), 0.0, cal), ConfigError);
  double p = predict_capacity(canonical_bump(2, 0.01), 0.0, cal);
  CHECK(p == doctest::Approx(0.01 * (16.0 / 15.0) / M_PI).epsilon(1e-10));
  for (double s : {-1.2, -0.6, 0.0, 0.25, 0.9}) {
    double a = predict_capacity(canonical_bump(2, 0.02), s, cal);
    double b = predict_capacity(canonical_bump(2, 0.04), s, cal);
    CHECK(a >= 0.0);
    if (a > 0.0) CHECK(b / a == 2.0);
    CHECK(std::abs(a - cal.c_cal * 0.02 * slice_integral(canonical_bump(2, 1.0), s)) < 1e-12);
  }
}

TEST_CASE("calibration selects the physical constant") {
  Calibration c = calibrate(2);
  CHECK(c.c_cal == doctest::Approx(1.0 / M_PI));
  CHECK(c.limit_ratio == doctest::Approx(1.0 / M_PI).epsilon(0.02));
  const double I0 = 16.0 / 15.0;
  for (size_t i = 0; i < c.sigmas.size(); ++i) {
    double r = c.k_over_sigma[i] / I0;
    CHECK(std::abs(r - 1.0 / M_PI) < std::abs(r - 1.0));
    if (i > 0) CHECK(std::abs(c.k_over_sigma[i] - c.k_over_sigma[i - 1]) <= 4.0 * c.sigmas[i - 1]);
  }
  CHECK(c.provenance.find("nonlinear") != std::string::npos);

  auto path = std::filesystem::temp_directory_path() / "pinning_calibration_test.json";
  save_calibration(c, path.string());
  Calibration back = load_calibration(path.string());
  std::filesystem::remove(path);
  CHECK(back.c_cal == c.c_cal);
  CHECK(back.provenance == c.provenance);
  CHECK(back.k_over_sigma == c.k_over_sigma);
  CHECK_THROWS_AS(load_calibration("/nonexistent/calibration.json"), ConfigError);
}

TEST_CASE("fixed point remainder") {
  CHECK_THROWS_AS(fixed_point_remainder(canonical_bump(2, 0.0), 0.0), ConfigError);
  std::vector<double> contraction, rnorm;
  for (double sg : {0.04, 0.02, 0.01}) {
    FixedPointResult fp = fixed_point_remainder(canonical_bump(2, sg), 0.0);
    contraction.push_back(fp.contraction);
    rnorm.push_back(fp.r_norm);
    CHECK(fp.increments.back() < 1e-8);
    if (sg == 0.02) {
      double k = single_site(canonical_bump(2, sg), 0.0).cap.k;
      CHECK(std::abs(fp.cap.k - k) <= 3.0 * sg * sg);
    }
  }
  // Contraction factor is O(sigma): it roughly halves with sigma.
  CHECK(contraction[1] < 0.6 * contraction[0]);
  CHECK(contraction[2] < 0.6 * contraction[1]);
  // The remainder stays in a fixed ball.
  for (double r : rnorm) CHECK(r < 10.0);
  CHECK(std::abs(rnorm[2] - rnorm[1]) < 0.2 * rnorm[1]);
}

TEST_CASE("strip capacities lie within O(sigma^2) of the linear interval") {
  Calibration cal;
  cal.d = 3;
  cal.c_cal = 1.0 / gamma_d(3);  // the calibrated constant found in two dimensions
  std::vector<double> s_grid = {-0.5, 0.0, 0.5};
  double C_prev = 0.0;
  for (double sg : {0.05, 0.025}) {
    DefectProfile q = canonical_bump(3, sg);
    KappaCurve c = kappa_curve(q, s_grid, 20.0);
    double pmax = 0.0, pmin = 0.0;
    for (double s : s_grid) {
      pmax = std::max(pmax, predict_capacity(q, s, cal));
      pmin = std::min(pmin, predict_capacity(q, s, cal));
    }
    Extremal e = extremal_capacities(c);
    double C = std::max(std::abs(e.k_adv - pmax), std::abs(e.k_rec - pmin)) / (sg * sg);
    CHECK(e.k_rec <= 0.0);
    CHECK(e.k_adv >= 0.0);
    CHECK(C < 0.5);
    if (C_prev > 0.0) CHECK(C < 2.0 * C_prev);
    C_prev = C;
  }
}
