#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
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

ModeSpec spin_mode(unsigned seed, bool fermionic = false) {
  ModeSpec m;
  m.mode_dim = 2;
  m.fermionic = fermionic;
  if (fermionic) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.2, 1.5);
    const double w = u(rng), g = u(rng);
    m.joint_hamiltonian =
        w * kron(DenseOperator::Identity(2, 2),
                 sigma_plus() * sigma_minus()) +
        g * (kron(sigma_minus(), sigma_plus()) +
             kron(sigma_plus(), sigma_minus()));
    m.initial_state = DenseOperator::Zero(2, 2);
    m.initial_state(seed % 2, seed % 2) = 1.0;
  } else {
    m.joint_hamiltonian = random_hermitian(4, seed);
    m.initial_state = random_density(2, seed + 1000);
  }
  return m;
}

// Max elementwise deviation of the PT-MPO reduced trajectory from the
// brute-force joint propagation with the identical Trotter sequence.
double trajectory_deviation(const std::vector<ModeSpec>& modes, int n_steps,
                            double dt, double eps,
                            const DenseOperator& h_sys,
                            const DenseOperator& rho0) {
  PTMPO pt = build_ace(modes, n_steps, 2, dt, eps);
  auto sched = SystemPropagatorSchedule::constant(h_sys, dt);
  TimeSeries ts = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});

  JointOracle oracle(2, modes, dt);
  oracle.init(rho0);
  double dev = (ts.states[0] - rho0).cwiseAbs().maxCoeff();
  for (int l = 1; l <= n_steps; ++l) {
    oracle.step(sched.step(l));
    dev = std::max(dev,
                   (ts.states[l] - oracle.reduced()).cwiseAbs().maxCoeff());
  }
  return dev;
}

}  // namespace

TEST_CASE("trivial PT is the identity influence functional") {
  PTMPO pt = trivial_pt(3, 2, 0.1);
  CHECK(pt.tensors.size() == 3);
  for (const auto& t : pt.tensors) {
    CHECK(t.chi_out == 1);
    CHECK(t.chi_in == 1);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        CHECK(t.at(0, a, b, 0) == (a == b ? Complex(1) : Complex(0)));
  }
  for (const auto& q : pt.closures.trace) {
    CHECK(q.size() == 1);
    CHECK(q(0) == Complex(1));
  }

  const DenseOperator h = random_hermitian(2, 2);
  const DenseOperator rho0 = random_density(2, 3);
  auto sched = SystemPropagatorSchedule::constant(h, 0.1);
  TimeSeries ts = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});
  DenseOperator expect = rho0;
  for (int l = 1; l <= 3; ++l)
    expect = devectorize(sched.step(l) * vectorize(expect));
  CHECK((ts.states[3] - expect).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("combining one spin mode gives uncompressed bulk bond 4") {
  PTMPO pt = trivial_pt(4, 2, 0.05);
  combine_mode(pt, spin_mode(5), 0);
  CHECK(pt.tensors[0].chi_out == 4);
  CHECK(pt.tensors[0].chi_in == 1);
  CHECK(pt.tensors[1].chi_out == 4);
  CHECK(pt.tensors[1].chi_in == 4);
  CHECK(pt.tensors[3].chi_out == 1);
  CHECK(pt.tensors[3].chi_in == 4);
}

TEST_CASE("combining a free mode leaves reduced dynamics unchanged") {
  ModeSpec m;
  m.mode_dim = 2;
  m.joint_hamiltonian = DenseOperator::Zero(4, 4);
  m.initial_state = random_density(2, 17);

  const DenseOperator h = random_hermitian(2, 7);
  const DenseOperator rho0 = random_density(2, 8);
  const double dev = trajectory_deviation({m}, 5, 0.1, 0.0, h, rho0);
  CHECK(dev < 1e-12);
}

TEST_CASE("single-mode PT matches the brute-force oracle") {
  const double dev = trajectory_deviation({spin_mode(21)}, 6, 0.08, 0.0,
                                          random_hermitian(2, 22),
                                          random_density(2, 23));
  CHECK(dev < 1e-10);
}

TEST_CASE("two- and three-mode PTs match the brute-force oracle at eps=0") {
  std::vector<ModeSpec> two = {spin_mode(31), spin_mode(32)};
  CHECK(trajectory_deviation(two, 4, 0.07, 0.0, random_hermitian(2, 33),
                             random_density(2, 34)) < 1e-9);

  std::vector<ModeSpec> three = {spin_mode(41), spin_mode(42), spin_mode(43)};
  CHECK(trajectory_deviation(three, 6, 0.06, 0.0, random_hermitian(2, 44),
                             random_density(2, 45)) < 1e-9);
}

TEST_CASE("fermionic parity-dressed PT matches the oracle") {
  std::vector<ModeSpec> leads = {spin_mode(51, true), spin_mode(52, true)};
  CHECK(trajectory_deviation(leads, 5, 0.09, 0.0, DenseOperator::Zero(2, 2),
                             random_density(2, 53)) < 1e-9);
}

TEST_CASE("eps=0 sweeps preserve the contraction") {
  std::vector<ModeSpec> modes = {spin_mode(61), spin_mode(62)};
  PTMPO pt = trivial_pt(5, 2, 0.05);
  for (size_t k = 0; k < modes.size(); ++k) combine_mode(pt, modes[k], k);

  auto sched = SystemPropagatorSchedule::constant(random_hermitian(2, 63),
                                                  0.05);
  const DenseOperator rho0 = random_density(2, 64);
  TimeSeries before = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});

  sweep_forward(pt, 0.0);
  TimeSeries mid = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});
  std::vector<int> bonds_fw;
  for (const auto& t : pt.tensors) bonds_fw.push_back(t.chi_out);

  sweep_backward(pt, 0.0);
  TimeSeries after = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});

  for (int l = 0; l <= 5; ++l) {
    CHECK((before.states[l] - mid.states[l]).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((before.states[l] - after.states[l]).cwiseAbs().maxCoeff() < 1e-10);
  }
  for (int l = 0; l < 5; ++l) CHECK(pt.tensors[l].chi_out <= bonds_fw[l]);
}

TEST_CASE("sweeping the trivial PT keeps all bonds at one") {
  PTMPO pt = trivial_pt(4, 2, 0.1);
  sweep_forward(pt, 0.0);
  sweep_backward(pt, 0.0);
  CHECK(pt.max_bond() == 1);
}

TEST_CASE("peak bond dimension is monotone non-increasing in eps") {
  std::vector<ModeSpec> modes;
  for (unsigned s = 71; s < 76; ++s) modes.push_back(spin_mode(s));
  int last = 1 << 30;
  for (double eps : {1e-10, 1e-8, 1e-6}) {
    PTMPO pt = build_ace(modes, 6, 2, 0.1, eps);
    const int peak = pt.max_bond();
    CHECK(peak <= last);
    last = peak;
  }
}

TEST_CASE("halving dt shrinks the Trotter error by >= 3.5") {
  std::vector<ModeSpec> modes = {spin_mode(81), spin_mode(82)};
  const DenseOperator rho0 = random_density(2, 83);
  const DenseOperator h_sys = DenseOperator::Zero(2, 2);
  const double t_final = 0.4;

  auto deviation = [&](int n_steps) {
    const double dt = t_final / n_steps;
    PTMPO pt = build_ace(modes, n_steps, 2, dt, 0.0);
    auto sched = SystemPropagatorSchedule::constant(h_sys, dt);
    TimeSeries ts = propagate(pt, sched, rho0, {}, {}, PropagateOptions{0});
    JointOracle oracle(2, modes, dt);
    oracle.init(rho0);
    for (int l = 1; l <= n_steps; ++l) oracle.step_exact_env(sched.step(l));
    return (ts.states[n_steps] - oracle.reduced()).cwiseAbs().maxCoeff();
  };

  const double coarse = deviation(8);
  const double fine = deviation(16);
  CHECK(coarse / fine >= 3.5);
}

TEST_CASE("all-zero tensor raises a degenerate error with step context") {
  PTMPO pt = trivial_pt(3, 2, 0.1);
  std::fill(pt.tensors[0].data.begin(), pt.tensors[0].data.end(), Complex(0));
  CHECK_THROWS_WITH_AS(sweep_forward(pt, 0.0),
                       doctest::Contains("step 1"),
                       DegenerateCompressionError);
}

TEST_CASE("serialization round trip preserves tensors and closures") {
  std::vector<ModeSpec> modes = {spin_mode(91), spin_mode(92)};
  ObservableSpec obs{"probe", random_hermitian(2, 93),
                     {0.5 * pauli_x(), 0.5 * pauli_x()}, false};
  PTMPO pt = build_ace(modes, 4, 2, 0.05, 1e-9, {obs});

  const std::string path = "roundtrip.ptm";
  save_ptmpo(pt, path);
  PTMPO back = load_ptmpo(path);
  std::remove(path.c_str());

  REQUIRE(back.n_steps == pt.n_steps);
  REQUIRE(back.d_sys == pt.d_sys);
  CHECK(back.dt == pt.dt);
  for (int l = 0; l < 4; ++l) {
    REQUIRE(back.tensors[l].chi_out == pt.tensors[l].chi_out);
    REQUIRE(back.tensors[l].chi_in == pt.tensors[l].chi_in);
    for (size_t i = 0; i < pt.tensors[l].data.size(); ++i)
      CHECK(back.tensors[l].data[i] == pt.tensors[l].data[i]);
    CHECK(back.closures.trace[l] == pt.closures.trace[l]);
    CHECK(back.closures.observables[0].vec[l] ==
          pt.closures.observables[0].vec[l]);
  }
  CHECK(back.peak_bond_per_mode == pt.peak_bond_per_mode);

  // Propagation through the loaded PT is identical.
  auto sched = SystemPropagatorSchedule::constant(random_hermitian(2, 94),
                                                  0.05);
  const DenseOperator rho0 = random_density(2, 95);
  TimeSeries a = propagate(pt, sched, rho0, {}, {"probe"});
  TimeSeries b = propagate(back, sched, rho0, {}, {"probe"});
  for (int l = 0; l <= 4; ++l)
    CHECK((a.states[l] - b.states[l]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("loading a corrupt container fails validation") {
  const std::string path = "corrupt.ptm";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOPE", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_ptmpo(path), ValidationError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_ptmpo("missing.ptm"), ConfigError);
}

TEST_CASE("build_ace validates inputs and reports mode context") {
  CHECK_THROWS_AS(trivial_pt(0, 2, 0.1), ValidationError);
  CHECK_THROWS_AS(trivial_pt(3, 2, 0.0), ValidationError);

  ModeSpec bad = spin_mode(99);
  bad.joint_hamiltonian(0, 1) += Complex(0, 0.5);  // not Hermitian
  try {
    build_ace({spin_mode(98), bad}, 3, 2, 0.1, 0.0);
    FAIL("expected an error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("mode 1") != std::string::npos);
  }
}
