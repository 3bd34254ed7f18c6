#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "ptgrad/heom.hpp"
#include "ptgrad/liouville.hpp"
#include "ptgrad/ttm.hpp"
#include "test_util.hpp"

using namespace ptgrad;
using namespace ptgrad::testutil;

namespace {

BathCorrelation two_term_corr() {
  BathCorrelation corr;
  corr.terms.push_back({cx(0.3, 0.1), cx(0.25, -0.05), cx(-0.8, 0.6)});
  corr.terms.push_back({cx(0.05, -0.02), cx(0.04, 0.01), cx(0.5, 0.3)});
  return corr;
}

QOperator half_sigma_z() { return QOperator(Mat(0.5 * pauli_z())); }

SuperOp drive_step(double dt) {
  return step_propagator(hamiltonian_superop(QOperator(Mat(0.5 * pauli_x()))),
                         dt);
}

DynamicalMapSeq heom_training_maps(int depth, double dt, int k) {
  ExtendedGenerator gen = build_generator(two_term_corr(), half_sigma_z(), depth);
  ProcessTensor pt = heom_pt(gen, dt, k);
  return maps_from_pt(pt, drive_step(dt));
}

// strong coupling and fast bath decay: the transfer tensors fall below
// 1e-3 * |T_1| inside the training window instead of starting there
DynamicalMapSeq fast_bath_maps(int k) {
  BathCorrelation corr;
  corr.terms.push_back({cx(1.8, 0.6), cx(1.5, -0.3), cx(-0.8, 5.0)});
  corr.terms.push_back({cx(0.3, -0.12), cx(0.24, 0.06), cx(0.5, 8.0)});
  ExtendedGenerator gen = build_generator(corr, half_sigma_z(), 3);
  ProcessTensor pt = heom_pt(gen, 0.12, k);
  return maps_from_pt(pt, drive_step(0.12));
}

DynamicalMapSeq semigroup_maps(int k, double dt) {
  Mat lower = Mat::Zero(2, 2);
  lower(1, 0) = cx(0.4, 0);
  QOperator jump(lower);
  SuperOp gen = hamiltonian_superop(QOperator(Mat(0.5 * pauli_z()))) +
                lindblad_superop({jump}, {1.0});
  SuperOp m = step_propagator(gen, dt);
  DynamicalMapSeq seq;
  seq.dt = dt;
  seq.provenance.source = "semigroup";
  seq.provenance.system_step = m;
  SuperOp acc = SuperOp::Identity(4, 4);
  for (int i = 0; i < k; ++i) {
    acc = m * acc;
    seq.maps.push_back(acc);
  }
  return seq;
}

}  // namespace

TEST_CASE("identity environment yields pure powers of the propagator") {
  const double dt = 0.1;
  ProcessTensor pt = identity_pt(2, 8, dt);
  SuperOp u = drive_step(dt);
  DynamicalMapSeq seq = maps_from_pt(pt, u);
  REQUIRE(seq.count() == 8);
  CHECK(seq.dt == dt);
  SuperOp acc = SuperOp::Identity(4, 4);
  for (int k = 0; k < 8; ++k) {
    acc = u * acc;
    CHECK((seq.maps[k] - acc).cwiseAbs().maxCoeff() <= 1e-12);
  }
  CHECK((seq.provenance.system_step - u).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("one-step map agrees with the direct hierarchy integrator") {
  const double dt = 0.05;
  ExtendedGenerator gen = build_generator(two_term_corr(), half_sigma_z(), 3);
  ProcessTensor pt = heom_pt(gen, dt, 4);
  SuperOp u = drive_step(dt);
  DynamicalMapSeq seq = maps_from_pt(pt, u);

  std::vector<SuperOp> props(4, u);
  for (int c = 0; c < 4; ++c) {
    Vec e = Vec::Zero(4);
    e(c) = cx(1, 0);
    DensityVec rho0;
    rho0.data = e;
    auto traj = heom_solve(gen, props, rho0, dt);
    CHECK((seq.maps[0].col(c) - traj[1].data).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((seq.maps[2].col(c) - traj[3].data).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("Markovian maps collapse to a single transfer tensor") {
  DynamicalMapSeq seq = semigroup_maps(10, 0.08);
  TransferTensorSet tts = extract(seq, 10);
  CHECK((tts.tensors[0] - seq.maps[0]).cwiseAbs().maxCoeff() <= 1e-14);
  for (int k = 2; k <= 10; ++k) CHECK(tts.tensors[k - 1].norm() <= 1e-12);

  SUBCASE("unitary maps behave the same way") {
    DynamicalMapSeq useq;
    useq.dt = 0.1;
    useq.provenance.source = "unitary";
    SuperOp u = drive_step(0.1);
    useq.provenance.system_step = u;
    SuperOp acc = SuperOp::Identity(4, 4);
    for (int i = 0; i < 6; ++i) {
      acc = u * acc;
      useq.maps.push_back(acc);
    }
    TransferTensorSet utts = extract(useq, 6);
    CHECK((utts.tensors[0] - u).cwiseAbs().maxCoeff() <= 1e-14);
    for (int k = 2; k <= 6; ++k) CHECK(utts.tensors[k - 1].norm() <= 1e-12);
  }
}

TEST_CASE("the full-memory set reconstructs its training data") {
  DynamicalMapSeq seq = heom_training_maps(3, 0.05, 12);
  TransferTensorSet tts = extract(seq, 12);
  GaussianStream rng(42, 0);
  for (int trial = 0; trial < 3; ++trial) {
    DensityVec rho0 = trial == 0 ? plus_x_state(-1) : random_density(2, rng);
    auto traj = propagate(tts, rho0, 12);
    REQUIRE(traj.size() == 13);
    for (int k = 1; k <= 12; ++k) {
      Vec expected = seq.maps[k - 1] * rho0.data;
      CHECK((traj[k].data - expected).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("transfer tensor norms decay and define a memory time") {
  DynamicalMapSeq seq = fast_bath_maps(40);
  TransferTensorSet tts = extract(seq, 40);
  const double n1 = tts.tensors[0].norm();
  CHECK(tts.tensors[1].norm() < n1);
  int memory_steps = -1;
  for (int k = 2; k <= 40; ++k)
    if (tts.tensors[k - 1].norm() < 1e-3 * n1) {
      memory_steps = k;
      break;
    }
  REQUIRE(memory_steps > 0);
  // regression value; the crossing sits 18% clear of the threshold on both
  // sides (|T_5|/|T_1| = 1.18e-3, |T_6|/|T_1| = 5.6e-4)
  CHECK(memory_steps == 6);
  for (int k = 2; k < 12; ++k)
    CHECK(tts.tensors[k].norm() < tts.tensors[k - 1].norm());

  SUBCASE("norm profile CSV") {
    const std::string path = "ttm_norms_test.csv";
    write_transfer_norms_csv(path, tts);
    std::ifstream in(path, std::ios::binary);
    REQUIRE(static_cast<bool>(in));
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "k,frobenius_norm");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 40);
    std::remove(path.c_str());
  }
}

TEST_CASE("memory truncation error shrinks as the window grows") {
  DynamicalMapSeq seq = fast_bath_maps(40);
  TransferTensorSet full = extract(seq, 40);
  DensityVec rho0 = plus_x_state(-1);
  auto ref = propagate(full, rho0, 160);

  double prev = std::numeric_limits<double>::infinity();
  for (int t_c : {6, 12, 23, 40}) {  // 6 is the measured memory time
    TransferTensorSet tts = extract(seq, t_c);
    auto traj = propagate(tts, rho0, 160);
    double dev = 0;
    for (int k = 0; k <= 160; ++k)
      dev = std::max(dev, (traj[k].data - ref[k].data).cwiseAbs().maxCoeff());
    CHECK(dev <= prev + 1e-12);
    if (t_c == 6) CHECK(dev <= 1e-2);
    if (t_c == 40) CHECK(dev == 0.0);
    prev = dev;
  }
}

TEST_CASE("propagation is linear in the initial state") {
  DynamicalMapSeq seq = heom_training_maps(2, 0.05, 10);
  TransferTensorSet tts = extract(seq, 10);
  GaussianStream rng(7, 1);
  DensityVec a = random_density(2, rng);
  DensityVec b = random_density(2, rng);
  const cx alpha(0.7, 0.2), beta(-0.4, 0.9);
  DensityVec mix;
  mix.data = alpha * a.data + beta * b.data;
  auto ta = propagate(tts, a, 14);
  auto tb = propagate(tts, b, 14);
  auto tm = propagate(tts, mix, 14);
  for (int k = 0; k <= 14; ++k) {
    Vec expected = alpha * ta[k].data + beta * tb[k].data;
    CHECK((tm[k].data - expected).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("the adjoint matches finite differences") {
  DynamicalMapSeq seq = heom_training_maps(3, 0.05, 10);
  TransferTensorSet tts = extract(seq, 10);
  const int steps = 25;
  Vec w(4);
  w << cx(0.3, -0.1), cx(0.8, 0.4), cx(-0.2, 0.6), cx(0.5, 0.0);
  Vec grad = adjoint_rho0_gradient(tts, w, steps);

  DensityVec rho0 = plus_x_state(-1);
  auto cost = [&](const Vec& r0) {
    DensityVec d;
    d.data = r0;
    auto traj = propagate(tts, d, steps);
    return (w.transpose() * traj[steps].data)(0).real();
  };
  const double h = 1e-6;
  double num = 0, den = 0;
  for (int i = 0; i < 4; ++i) {
    Vec up = rho0.data, dn = rho0.data;
    up(i) += h;
    dn(i) -= h;
    double fd_re = (cost(up) - cost(dn)) / (2 * h);
    up = rho0.data;
    dn = rho0.data;
    up(i) += cx(0, h);
    dn(i) -= cx(0, h);
    double fd_im = (cost(up) - cost(dn)) / (2 * h);
    num += std::pow(fd_re - grad(i).real(), 2) +
           std::pow(fd_im - (-grad(i).imag()), 2);
    den += fd_re * fd_re + fd_im * fd_im;
  }
  CHECK(std::sqrt(num / den) <= 1e-6);
}

TEST_CASE("a mismatched system propagator is refused") {
  DynamicalMapSeq seq = heom_training_maps(2, 0.05, 6);
  TransferTensorSet tts = extract(seq, 6);
  CHECK_NOTHROW(require_trained_step(tts, drive_step(0.05)));
  CHECK_THROWS_WITH_AS(require_trained_step(tts, drive_step(0.06)),
                       doctest::Contains("different system propagator"),
                       config_error);
  SuperOp other = step_propagator(
      hamiltonian_superop(QOperator(Mat(0.5 * pauli_y()))), 0.05);
  CHECK_THROWS_AS(require_trained_step(tts, other), config_error);
}

TEST_CASE("defective inputs are rejected") {
  DynamicalMapSeq seq = semigroup_maps(5, 0.1);
  CHECK_THROWS_AS(extract(seq, 6), config_error);
  CHECK_THROWS_AS(extract(seq, 0), config_error);

  DynamicalMapSeq leaky = seq;
  leaky.maps[2] *= 0.9;
  CHECK_THROWS_WITH_AS(extract(leaky, 5), doctest::Contains("trace"),
                       numerical_error);

  TransferTensorSet tts = extract(seq, 5);
  DensityVec wrong;
  wrong.data = Vec::Zero(9);
  CHECK_THROWS_AS(propagate(tts, wrong, 4), config_error);
  CHECK_THROWS_AS(propagate(tts, plus_x_state(-1), 0), config_error);
}
