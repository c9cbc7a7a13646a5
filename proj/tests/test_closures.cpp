#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "oracle.hpp"
#include "ptmpo/propagate.hpp"

using namespace ptmpo;
using ptmpo::testing::JointOracle;

namespace {

DenseOperator random_hermitian(int d, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseOperator m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
  return 0.5 * (m + m.adjoint());
}

DenseOperator random_density(int d, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseOperator m(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = Complex(g(rng), g(rng));
  DenseOperator rho = m * m.adjoint();
  return rho / rho.trace();
}

ModeSpec spin_mode(unsigned seed) {
  ModeSpec m;
  m.mode_dim = 2;
  m.joint_hamiltonian = random_hermitian(4, seed);
  m.initial_state = random_density(2, seed + 500);
  return m;
}

}  // namespace

TEST_CASE("liouville covector pairing <eta|O|xi>") {
  const DenseOperator o = random_hermitian(2, 1);
  const DenseOperator rho = random_density(2, 2);
  const Complex val = liouville_covector(o) * vectorize(rho);
  CHECK(std::abs(val - (o * rho).trace()) < 1e-13);
}

TEST_CASE("identity observables contribute one per mode") {
  std::vector<ModeSpec> modes = {spin_mode(11), spin_mode(12)};
  ObservableSpec ident{"ident", random_hermitian(2, 13),
                       {DenseOperator::Identity(2, 2),
                        DenseOperator::Identity(2, 2)},
                       false};
  PTMPO pt = build_ace(modes, 4, 2, 0.1, 0.0, {ident});
  auto sched = SystemPropagatorSchedule::constant(random_hermitian(2, 14),
                                                  0.1);
  const DenseOperator rho0 = random_density(2, 15);
  TimeSeries ts = propagate(pt, sched, rho0,
                            {{"a", ident.system_part}}, {"ident"},
                            PropagateOptions{0});
  // The outgoing mode bond is traced out inside the final site, so the
  // closure value at the last row is not meaningful; assert l < n only.
  for (int l = 0; l < 4; ++l)
    CHECK(std::abs(ts.channel("ident")[l] - 2.0 * ts.channel("a")[l]) < 1e-8);
}

TEST_CASE("all-zero environment parts extract zero") {
  std::vector<ModeSpec> modes = {spin_mode(21)};
  ObservableSpec zero{"zero", random_hermitian(2, 22),
                      {DenseOperator::Zero(2, 2)}, false};
  PTMPO pt = build_ace(modes, 3, 2, 0.1, 0.0, {zero});
  TimeSeries ts = propagate(
      pt, SystemPropagatorSchedule::constant(random_hermitian(2, 23), 0.1),
      random_density(2, 24), {}, {"zero"}, PropagateOptions{0});
  for (const Complex& v : ts.channel("zero")) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("closure linearity in the environment operator") {
  std::vector<ModeSpec> modes = {spin_mode(31), spin_mode(32)};
  const DenseOperator o1 = random_hermitian(2, 33),
                      o2 = random_hermitian(2, 34);
  const Complex c1(0.7, 0.0), c2(-1.3, 0.0);
  ObservableSpec a{"a", DenseOperator::Identity(2, 2), {o1, o2}, false};
  ObservableSpec b{"b", DenseOperator::Identity(2, 2),
                   {DenseOperator(c1.real() * o1), DenseOperator(c1.real() * o2)},
                   false};
  PTMPO pt = build_ace(modes, 3, 2, 0.1, 0.0, {a, b});
  TimeSeries ts = propagate(
      pt, SystemPropagatorSchedule::constant(random_hermitian(2, 35), 0.1),
      random_density(2, 36), {}, {"a", "b"}, PropagateOptions{0});
  (void)c2;
  for (int l = 0; l <= 3; ++l)
    CHECK(std::abs(ts.channel("b")[l] - c1 * ts.channel("a")[l]) < 1e-10);
}

TEST_CASE("single decoupled mode observable tracks the mode state") {
  // No system-mode coupling: H = 1 (x) h_mode.
  ModeSpec m;
  m.mode_dim = 2;
  const DenseOperator h_mode = random_hermitian(2, 41);
  m.joint_hamiltonian = kron(DenseOperator::Identity(2, 2), h_mode);
  m.initial_state = random_density(2, 42);
  const DenseOperator sx = 0.5 * pauli_x();

  ObservableSpec obs{"sx", DenseOperator::Identity(2, 2), {sx}, false};
  const double dt = 0.08;
  PTMPO pt = build_ace({m}, 5, 2, dt, 0.0, {obs});
  TimeSeries ts = propagate(
      pt, SystemPropagatorSchedule::constant(random_hermitian(2, 43), dt),
      random_density(2, 44), {}, {"sx"}, PropagateOptions{0});

  DenseOperator rho_mode = m.initial_state;
  const DenseOperator u = matrix_exp(Complex(0, -1) * dt * h_mode);
  CHECK(std::abs(ts.channel("sx")[0] - (sx * rho_mode).trace()) < 1e-12);
  for (int l = 1; l < 5; ++l) {
    rho_mode = u * rho_mode * u.adjoint();
    CHECK(std::abs(ts.channel("sx")[l] - (sx * rho_mode).trace()) < 1e-9);
  }
}

TEST_CASE("mixed observable matches the joint oracle after sweeps") {
  std::vector<ModeSpec> modes = {spin_mode(51), spin_mode(52)};
  const DenseOperator a_sys = sigma_plus();  // |e><g|
  const DenseOperator o1 = boson_annihilation(2), o2 = random_hermitian(2, 53);
  ObservableSpec obs{"mix", a_sys, {o1, o2}, false};

  const double dt = 0.07;
  PTMPO pt = build_ace(modes, 5, 2, dt, 0.0, {obs});
  auto sched = SystemPropagatorSchedule::constant(random_hermitian(2, 54), dt);
  const DenseOperator rho0 = random_density(2, 55);
  TimeSeries ts = propagate(pt, sched, rho0, {}, {"mix"}, PropagateOptions{0});

  JointOracle oracle(2, modes, dt);
  oracle.init(rho0);
  CHECK(std::abs(ts.channel("mix")[0] -
                 (oracle.expect(a_sys, 0, o1) + oracle.expect(a_sys, 1, o2))) <
        1e-10);
  for (int l = 1; l < 5; ++l) {
    oracle.step(sched.step(l));
    const Complex ref =
        oracle.expect(a_sys, 0, o1) + oracle.expect(a_sys, 1, o2);
    CHECK(std::abs(ts.channel("mix")[l] - ref) < 1e-9);
  }
}

TEST_CASE("reduced state from trace closures matches the oracle mid-chain") {
  std::vector<ModeSpec> modes = {spin_mode(61), spin_mode(62)};
  const double dt = 0.09;
  PTMPO pt = build_ace(modes, 6, 2, dt, 0.0);
  CHECK(pt.closures.trace[5].size() == 1);
  CHECK(std::abs(pt.closures.trace[5](0) - Complex(1.0)) < 1e-12);

  auto sched = SystemPropagatorSchedule::constant(random_hermitian(2, 63), dt);
  const DenseOperator rho0 = random_density(2, 64);
  TimeSeries ts = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});
  JointOracle oracle(2, modes, dt);
  oracle.init(rho0);
  for (int l = 1; l <= 6; ++l) {
    oracle.step(sched.step(l));
    CHECK((ts.states[l] - oracle.reduced()).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("bond transform with t then t-inverse is the identity") {
  ClosureSet cs = ClosureSet::trivial(3);
  cs.trace[0] = RowVector::Random(3);
  std::mt19937 rng(71);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseOperator t(3, 3);
  do {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j) = Complex(g(rng), g(rng));
  } while (std::abs(t.determinant()) < 0.1);
  const RowVector before = cs.trace[0];
  apply_bond_transform(cs, 1, t);
  apply_bond_transform(cs, 1, t.inverse());
  CHECK((cs.trace[0] - before).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(apply_bond_transform(cs, 2, t), DimensionError);
}

TEST_CASE("fermionic current closure matches the 2-site brute force") {
  // Single filled resonant lead mode.
  ModeSpec lead;
  lead.mode_dim = 2;
  lead.fermionic = true;
  const double g = 0.8;
  lead.joint_hamiltonian = g * (kron(sigma_minus(), sigma_plus()) +
                                kron(sigma_plus(), sigma_minus()));
  lead.initial_state = DenseOperator::Zero(2, 2);
  lead.initial_state(1, 1) = 1.0;

  ObservableSpec corr{"corr", sigma_minus(), {DenseOperator(g * sigma_plus())},
                      true};
  const double dt = 0.05;
  PTMPO pt = build_ace({lead}, 8, 2, dt, 0.0, {corr});
  auto sched =
      SystemPropagatorSchedule::constant(DenseOperator::Zero(2, 2), dt);
  DenseOperator rho0 = DenseOperator::Zero(2, 2);
  rho0(0, 0) = 1.0;
  TimeSeries ts = propagate(pt, sched, rho0, {{"n_S", sigma_plus() * sigma_minus()}},
                            {"corr"}, PropagateOptions{0});

  JointOracle oracle(2, {lead}, dt);
  oracle.init(rho0);
  for (int l = 1; l < 8; ++l) {
    oracle.step(sched.step(l));
    // <sigma^+_mode sigma^-_S>; with one mode the parity string is empty.
    const Complex ref = g * oracle.expect(sigma_minus(), 0, sigma_plus());
    CHECK(std::abs(ts.channel("corr")[l] - ref) < 1e-9);
  }
  // Occupation Rabi-oscillates between site and lead.
  bool moved = false;
  for (int l = 1; l <= 8; ++l)
    if (ts.channel("n_S")[l].real() > 0.05) moved = true;
  CHECK(moved);
}

TEST_CASE("fermionic string parity over a two-mode lead") {
  // Two filled lead modes; the current term from mode 1 carries the parity
  // of mode 2 (incorporated later).
  std::vector<ModeSpec> leads(2);
  const double g1 = 0.5, g2 = 0.9, w2 = 0.6;
  leads[0].mode_dim = leads[1].mode_dim = 2;
  leads[0].fermionic = leads[1].fermionic = true;
  leads[0].joint_hamiltonian = g1 * (kron(sigma_minus(), sigma_plus()) +
                                     kron(sigma_plus(), sigma_minus()));
  leads[1].joint_hamiltonian =
      w2 * kron(DenseOperator::Identity(2, 2), sigma_plus() * sigma_minus()) +
      g2 * (kron(sigma_minus(), sigma_plus()) +
            kron(sigma_plus(), sigma_minus()));
  for (auto& l : leads) {
    l.initial_state = DenseOperator::Zero(2, 2);
    l.initial_state(1, 1) = 1.0;
  }

  ObservableSpec corr{"corr", sigma_minus(),
                      {DenseOperator(g1 * sigma_plus()),
                       DenseOperator(g2 * sigma_plus())},
                      true};
  const double dt = 0.06;
  PTMPO pt = build_ace(leads, 6, 2, dt, 0.0, {corr});
  auto sched =
      SystemPropagatorSchedule::constant(DenseOperator::Zero(2, 2), dt);
  DenseOperator rho0 = DenseOperator::Zero(2, 2);
  rho0(0, 0) = 1.0;
  TimeSeries ts = propagate(pt, sched, rho0, {}, {"corr"}, PropagateOptions{0});

  JointOracle oracle(2, leads, dt);
  oracle.init(rho0);
  const DenseOperator id2 = DenseOperator::Identity(2, 2);
  // sigma^-_S (x) [g1 sigma^+_1 (-sigma_z_2) + g2 sigma^+_2]
  const DenseOperator op =
      g1 * kron(kron(sigma_minus(), sigma_plus()), DenseOperator(-pauli_z())) +
      g2 * kron(kron(sigma_minus(), id2), sigma_plus());
  for (int l = 1; l < 6; ++l) {
    oracle.step(sched.step(l));
    CHECK(std::abs(ts.channel("corr")[l] - oracle.expect_full(op)) < 1e-9);
  }
}

TEST_CASE("initial environment values seed the t0 row") {
  std::vector<ModeSpec> modes = {spin_mode(81), spin_mode(82)};
  const DenseOperator o1 = random_hermitian(2, 83),
                      o2 = random_hermitian(2, 84);
  ObservableSpec obs{"o", DenseOperator::Identity(2, 2), {o1, o2}, false};
  PTMPO pt = build_ace(modes, 3, 2, 0.1, 0.0, {obs});
  const DenseOperator rho0 = random_density(2, 85);
  TimeSeries ts = propagate(
      pt, SystemPropagatorSchedule::constant(DenseOperator::Zero(2, 2), 0.1),
      rho0, {}, {"o"}, PropagateOptions{0});
  const Complex expect = (o1 * modes[0].initial_state).trace() +
                         (o2 * modes[1].initial_state).trace();
  CHECK(std::abs(ts.channel("o")[0] - expect) < 1e-12);
}

TEST_CASE("fermionic-string observables reject non-fermionic modes") {
  std::vector<ModeSpec> modes = {spin_mode(91)};
  ObservableSpec corr{"corr", sigma_minus(), {sigma_plus()}, true};
  CHECK_THROWS_AS(build_ace(modes, 3, 2, 0.1, 0.0, {corr}),
                  NumericalError);  // wrapped with mode context
}
