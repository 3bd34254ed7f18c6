#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "ptgrad/bath.hpp"
#include "ptgrad/tdvp.hpp"
#include "test_util.hpp"

using namespace ptgrad;
using namespace ptgrad::testutil;

namespace {

ModeDiscretization single_mode(double g, double omega) {
  ModeDiscretization m;
  m.modes.push_back({g, omega});
  return m;
}

ModeDiscretization ohmic_modes(int n) {
  return discretize(SpectralDensity::ohmic_exp(0.1, 1.0), n, 10.0);
}

cx closed_form(double g, double omega, double t) {
  return g / (2.0 * omega) * (std::exp(cx(0, omega * t)) - cx(1, 0));
}

MagnetizationCost identity_cost() {
  return {[](double m) { return m; }, [](double) { return 1.0; }};
}

double cost_of(const ModeDiscretization& modes,
               const std::vector<double>& schedule, double dt,
               const MagnetizationCost& cost) {
  auto traj = integrate(modes, schedule, dt, static_cast<int>(schedule.size()));
  return cost.value(magnetization(traj.back()));
}

}  // namespace

TEST_CASE("the origin is a fixed point without driving") {
  ModeDiscretization silent;
  for (int k = 0; k < 4; ++k) silent.modes.push_back({0.0, 0.5 + k});
  PolaronState s = initial_polaron(silent);
  for (cx d : eom_rhs(s, 1.7)) CHECK(d == cx(0, 0));

  ModeDiscretization driven;
  for (int k = 0; k < 4; ++k) driven.modes.push_back({0.3 * (k + 1), 0.5 + k});
  PolaronState s2 = initial_polaron(driven);
  auto d = eom_rhs(s2, 0.9);
  for (int k = 0; k < 4; ++k) {
    CHECK(d[k].real() == 0.0);
    CHECK(d[k].imag() == doctest::Approx(0.5 * 0.3 * (k + 1)).epsilon(1e-14));
  }
}

TEST_CASE("the single-mode closed form satisfies the undriven EOM") {
  const double g = 0.7, omega = 1.3;
  ModeDiscretization modes = single_mode(g, omega);
  for (double t : {0.0, 0.4, 1.1, 2.8, 6.3}) {
    PolaronState s = initial_polaron(modes);
    s.x[0] = closed_form(g, omega, t);
    cx analytic = cx(0, 0.5 * g) * std::exp(cx(0, omega * t));
    CHECK(std::abs(eom_rhs(s, 0.0)[0] - analytic) <= 1e-12);
  }
}

TEST_CASE("zero coupling keeps the polaron at the origin") {
  ModeDiscretization silent;
  for (int k = 0; k < 5; ++k) silent.modes.push_back({0.0, 0.3 + 0.7 * k});
  std::vector<double> schedule(40);
  for (int q = 0; q < 40; ++q) schedule[q] = 0.4 + 0.6 * std::sin(0.2 * q);
  auto traj = integrate(silent, schedule, 0.1, 40);
  REQUIRE(traj.size() == 41);
  for (const PolaronState& s : traj)
    for (cx v : s.x) CHECK(v == cx(0, 0));
  CHECK(magnetization(traj.back()) == -1.0);

  auto grad = adjoint_gradient(traj, schedule, identity_cost(), 0.1);
  for (double gq : grad) CHECK(gq == 0.0);
}

TEST_CASE("integration matches the per-mode closed form at omega_q = 0") {
  ModeDiscretization modes = ohmic_modes(30);
  const double dt = 1e-3;
  const int t = 3000;
  std::vector<double> schedule(t, 0.0);
  auto traj = integrate(modes, schedule, dt, t);
  double worst = 0;
  for (int k = 0; k < 30; ++k) {
    cx exact = closed_form(modes.modes[k].first, modes.modes[k].second, 3.0);
    worst = std::max(worst, std::abs(traj.back().x[k] - exact));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("the integrator converges at fourth order") {
  ModeDiscretization modes = discretize(SpectralDensity::ohmic_exp(0.4, 1.0), 6, 4.0);
  auto final_state = [&](double dt, int steps) {
    std::vector<double> schedule(steps, 1.0);
    return integrate(modes, schedule, dt, steps).back();
  };
  PolaronState ref = final_state(1.0 / 512, 512);
  auto err = [&](double dt, int steps) {
    PolaronState s = final_state(dt, steps);
    double worst = 0;
    for (int k = 0; k < 6; ++k)
      worst = std::max(worst, std::abs(s.x[k] - ref.x[k]));
    return worst;
  };
  double e32 = err(1.0 / 32, 32);
  double e64 = err(1.0 / 64, 64);
  CHECK(e32 / e64 > 10.0);
  CHECK(e32 / e64 < 24.0);
}

TEST_CASE("magnetization formula, bounds, and monotone decay") {
  ModeDiscretization modes = single_mode(0.5, 1.0);
  PolaronState s = initial_polaron(modes);
  CHECK(magnetization(s) == -1.0);

  GaussianStream rng(77, 0);
  double prev = -1.0;
  for (double scale : {0.1, 0.4, 0.9, 1.7, 3.0}) {
    PolaronState p = initial_polaron(modes);
    p.x[0] = cx(scale, 0.3 * scale);
    double m = magnetization(p);
    CHECK(m == doctest::Approx(-std::exp(-2.0 * std::norm(p.x[0]))).epsilon(1e-14));
    CHECK(m >= -1.0);
    CHECK(m < 0.0);
    CHECK(m > prev);  // larger displacement, closer to zero
    prev = m;
  }
  (void)rng;
}

TEST_CASE("independent-boson mode sum reproduces the continuum decay") {
  // closed-form displacements summed over a 300-mode grid vs the continuum
  // integral of 2 alpha e^{-w} (1 - cos wt) / w, which is alpha ln(1 + t^2)
  ModeDiscretization modes = ohmic_modes(300);
  const double t = 3.0;
  double s = 0;
  for (auto [g, w] : modes) s += g * g * (1.0 - std::cos(w * t)) / (w * w);
  double m = -std::exp(-s);
  const double exact = -std::pow(10.0, -0.1);
  CHECK(std::abs(m - exact) <= 2e-3);

  SUBCASE("the integrated trajectory lands on the same value") {
    const double dt = 0.01;
    std::vector<double> schedule(300, 0.0);
    auto traj = integrate(modes, schedule, dt, 300);
    CHECK(std::abs(magnetization(traj.back()) - exact) <= 2e-3);
  }
  SUBCASE("thirty modes are coarser but still close") {
    ModeDiscretization coarse = ohmic_modes(30);
    double sc = 0;
    for (auto [g, w] : coarse) sc += g * g * (1.0 - std::cos(w * t)) / (w * w);
    CHECK(std::abs(-std::exp(-sc) - exact) <= 2e-2);
  }
}

TEST_CASE("adjoint gradient matches central finite differences") {
  ModeDiscretization modes = ohmic_modes(30);
  const double dt = 0.05;
  const int t = 200;
  std::vector<double> schedule(t);
  for (int q = 0; q < t; ++q) schedule[q] = 0.8 + 0.3 * std::sin(0.05 * q);
  auto traj = integrate(modes, schedule, dt, t);
  MagnetizationCost cost = identity_cost();
  auto grad = adjoint_gradient(traj, schedule, cost, dt);
  REQUIRE(static_cast<int>(grad.size()) == t);

  const double h = 1e-6;
  double num = 0, den = 0;
  for (int q = 0; q < t; ++q) {
    std::vector<double> up = schedule, dn = schedule;
    up[q] += h;
    dn[q] -= h;
    double fd = (cost_of(modes, up, dt, cost) - cost_of(modes, dn, dt, cost)) /
                (2 * h);
    num += (grad[q] - fd) * (grad[q] - fd);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) <= 1e-6);
}

TEST_CASE("the gradient stays exact at the symmetric point omega_q = 0") {
  ModeDiscretization modes = ohmic_modes(12);
  const double dt = 0.05;
  const int t = 60;
  std::vector<double> schedule(t, 0.0);
  auto traj = integrate(modes, schedule, dt, t);
  MagnetizationCost cost = identity_cost();
  auto grad = adjoint_gradient(traj, schedule, cost, dt);

  const double h = 1e-6;
  double num = 0, den = 0;
  for (int q = 0; q < t; ++q) {
    std::vector<double> up = schedule, dn = schedule;
    up[q] += h;
    dn[q] -= h;
    double fd = (cost_of(modes, up, dt, cost) - cost_of(modes, dn, dt, cost)) /
                (2 * h);
    num += (grad[q] - fd) * (grad[q] - fd);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) <= 1e-6);
  // the shared exponential factor is maximal on this trajectory only at t=0;
  // the gradient must still be nonzero overall (the drive couples via E)
  double l2 = 0;
  for (double g : grad) l2 += g * g;
  CHECK(l2 > 0.0);
}

TEST_CASE("a quadratic terminal cost propagates its slope") {
  ModeDiscretization modes = ohmic_modes(8);
  const double dt = 0.05;
  const int t = 40;
  std::vector<double> schedule(t, 0.7);
  auto traj = integrate(modes, schedule, dt, t);
  const double target = -0.6;
  MagnetizationCost cost = {
      [=](double m) { return (m - target) * (m - target); },
      [=](double m) { return 2.0 * (m - target); }};
  auto grad = adjoint_gradient(traj, schedule, cost, dt);

  const double h = 1e-6;
  double num = 0, den = 0;
  for (int q = 0; q < t; ++q) {
    std::vector<double> up = schedule, dn = schedule;
    up[q] += h;
    dn[q] -= h;
    double fd = (cost_of(modes, up, dt, cost) - cost_of(modes, dn, dt, cost)) /
                (2 * h);
    num += (grad[q] - fd) * (grad[q] - fd);
    den += fd * fd;
  }
  CHECK(std::sqrt(num / den) <= 1e-6);
}

TEST_CASE("invalid requests are rejected with diagnostics") {
  ModeDiscretization modes = single_mode(0.5, 1.0);
  std::vector<double> schedule(10, 0.0);
  CHECK_THROWS_AS(integrate(modes, schedule, -0.1, 10), config_error);
  CHECK_THROWS_AS(integrate(modes, schedule, 0.1, 9), config_error);
  CHECK_THROWS_AS(integrate(ModeDiscretization{}, schedule, 0.1, 10),
                  config_error);

  auto traj = integrate(modes, schedule, 0.1, 10);
  std::vector<double> longer(11, 0.0);
  CHECK_THROWS_AS(adjoint_gradient(traj, longer, identity_cost(), 0.1),
                  config_error);
  MagnetizationCost hollow;
  CHECK_THROWS_AS(adjoint_gradient(traj, schedule, hollow, 0.1), config_error);
}

TEST_CASE("an unstable step size reports the failing step") {
  // h * omega = 10 is far outside the RK4 stability region, so the linear
  // rotation amplifies until the state overflows
  ModeDiscretization modes = single_mode(1.0, 10.0);
  std::vector<double> schedule(400, 0.0);
  CHECK_THROWS_WITH_AS(integrate(modes, schedule, 1.0, 400),
                       doctest::Contains("at step"), numerical_error);
}

TEST_CASE("trajectory CSV layout") {
  ModeDiscretization modes;
  modes.modes = {{0.4, 0.8}, {0.2, 1.5}, {0.1, 2.2}};
  std::vector<double> schedule(5, 0.3);
  auto traj = integrate(modes, schedule, 0.1, 5);
  const std::string path = "tdvp_trajectory_test.csv";
  write_trajectory_csv(path, traj, 0.1);

  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "t,re_x_1,re_x_2,re_x_3,im_x_1,im_x_2,im_x_3,magnetization");
  int rows = 0;
  std::string first_data;
  while (std::getline(in, line)) {
    if (rows == 0) first_data = line;
    CHECK(line.find('\r') == std::string::npos);
    CHECK(std::count(line.begin(), line.end(), ',') == 7);
    ++rows;
  }
  CHECK(rows == 6);
  CHECK(first_data.substr(0, 2) == "0,");
  CHECK(first_data.find("-1") != std::string::npos);
  std::remove(path.c_str());
}
