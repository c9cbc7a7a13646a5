#include "ptmpo/liouville.hpp"

#include <cmath>

#include "ptmpo/numerics.hpp"

namespace ptmpo {

ComplexVector vectorize(const DenseOperator& rho) {
  if (rho.rows() != rho.cols())
    throw DimensionError("vectorize: density matrix must be square");
  const int d = static_cast<int>(rho.rows());
  ComplexVector v(d * d);
  for (int nu = 0; nu < d; ++nu)
    for (int mu = 0; mu < d; ++mu) v(nu * d + mu) = rho(nu, mu);
  return v;
}

DenseOperator devectorize(const ComplexVector& v) {
  const int d = static_cast<int>(std::llround(std::sqrt(double(v.size()))));
  if (Eigen::Index(d) * d != v.size())
    throw DimensionError("devectorize: length is not a perfect square");
  DenseOperator rho(d, d);
  for (int nu = 0; nu < d; ++nu)
    for (int mu = 0; mu < d; ++mu) rho(nu, mu) = v(nu * d + mu);
  return rho;
}

ComplexVector trace_covector(int d) {
  if (d < 1) throw DimensionError("trace_covector: d must be positive");
  ComplexVector v = ComplexVector::Zero(Eigen::Index(d) * d);
  for (int nu = 0; nu < d; ++nu) v(nu * d + nu) = 1.0;
  return v;
}

DenseOperator hamiltonian_liouvillian(const DenseOperator& h) {
  if (h.rows() != h.cols())
    throw DimensionError("hamiltonian_liouvillian: H must be square");
  if (!is_hermitian(h, 1e-8))
    throw ValidationError("hamiltonian_liouvillian: H is not Hermitian");
  const Eigen::Index d = h.rows();
  const DenseOperator id = DenseOperator::Identity(d, d);
  return Complex(0, -1) * (kron(h, id) - kron(id, h.transpose()));
}

DenseOperator lindblad_dissipator(const DenseOperator& c, double rate) {
  if (c.rows() != c.cols())
    throw DimensionError("lindblad_dissipator: operator must be square");
  const Eigen::Index d = c.rows();
  const DenseOperator id = DenseOperator::Identity(d, d);
  const DenseOperator cdc = c.adjoint() * c;
  return rate * (kron(c, c.conjugate()) - 0.5 * kron(cdc, id) -
                 0.5 * kron(id, cdc.transpose()));
}

DenseOperator split_system_environment(const DenseOperator& s, int d_sys,
                                       int d_mode) {
  const int dd = d_sys * d_mode;
  if (s.rows() != Eigen::Index(dd) * dd || s.cols() != s.rows())
    throw DimensionError("split_system_environment: dimension mismatch");
  // joint index (nu*d_mode+xi)*dd + (mu*d_mode+eta)
  //  -> split index (nu*d_sys+mu)*d_mode^2 + (xi*d_mode+eta)
  std::vector<int> perm(dd * dd);
  for (int nu = 0; nu < d_sys; ++nu)
    for (int xi = 0; xi < d_mode; ++xi)
      for (int mu = 0; mu < d_sys; ++mu)
        for (int eta = 0; eta < d_mode; ++eta) {
          const int joint = (nu * d_mode + xi) * dd + (mu * d_mode + eta);
          const int split =
              (nu * d_sys + mu) * d_mode * d_mode + (xi * d_mode + eta);
          perm[split] = joint;
        }
  DenseOperator out(s.rows(), s.cols());
  for (int r = 0; r < dd * dd; ++r)
    for (int c = 0; c < dd * dd; ++c) out(r, c) = s(perm[r], perm[c]);
  return out;
}

void ModeSpec::validate(int d_sys) const {
  if (mode_dim < 1) throw ValidationError("ModeSpec: mode_dim must be >= 1");
  const Eigen::Index dd = Eigen::Index(d_sys) * mode_dim;
  if (joint_hamiltonian.rows() != dd || joint_hamiltonian.cols() != dd)
    throw DimensionError("ModeSpec: joint Hamiltonian dimension mismatch");
  if (!is_hermitian(joint_hamiltonian, 1e-10))
    throw ValidationError("ModeSpec: joint Hamiltonian is not Hermitian");
  if (initial_state.rows() != mode_dim || initial_state.cols() != mode_dim)
    throw DimensionError("ModeSpec: initial state dimension mismatch");
  if (std::abs(initial_state.trace() - Complex(1.0)) > 1e-10)
    throw ValidationError("ModeSpec: initial state trace must be 1");
  if (fermionic && mode_dim != 2)
    throw ConfigError("ModeSpec: fermionic modes must be two-dimensional");
}

DenseOperator mode_propagator(const ModeSpec& mode, int d_sys,
                              double dt_fraction) {
  mode.validate(d_sys);
  if (mode.fermionic && d_sys != 2)
    throw ConfigError("mode_propagator: fermionic modes require d_sys = 2");

  DenseOperator l = hamiltonian_liouvillian(mode.joint_hamiltonian);
  DenseOperator b = split_system_environment(matrix_exp(dt_fraction * l),
                                             d_sys, mode.mode_dim);
  if (mode.fermionic) {
    // P = |0><0|_S x 1 + |1><1|_S x (-sigma_z); exponential then parity.
    DenseOperator parity = DenseOperator::Identity(d_sys * 2, d_sys * 2);
    parity(2, 2) = 1.0;   // |1>_S |0>_m
    parity(3, 3) = -1.0;  // |1>_S |1>_m
    DenseOperator psuper = split_system_environment(
        kron(parity, parity.conjugate()), d_sys, mode.mode_dim);
    b = b * psuper;
  }
  return b;
}

SystemPropagatorSchedule::SystemPropagatorSchedule(
    int d_sys, double dt, std::function<DenseOperator(double)> hamiltonian,
    double t0)
    : d_sys_(d_sys), dt_(dt), t0_(t0), hamiltonian_(std::move(hamiltonian)) {
  if (d_sys < 1) throw ValidationError("schedule: d_sys must be positive");
  if (dt <= 0.0) throw ValidationError("schedule: dt must be positive");
}

SystemPropagatorSchedule SystemPropagatorSchedule::constant(
    const DenseOperator& h, double dt, double t0) {
  return SystemPropagatorSchedule(static_cast<int>(h.rows()), dt,
                                  [h](double) { return h; }, t0);
}

void SystemPropagatorSchedule::add_lindblad(const DenseOperator& op,
                                            double rate) {
  if (op.rows() != d_sys_ || op.cols() != d_sys_)
    throw DimensionError("schedule: Lindblad operator dimension mismatch");
  lindblad_.emplace_back(op, rate);
}

DenseOperator SystemPropagatorSchedule::liouvillian(double t) const {
  DenseOperator h = hamiltonian_(t);
  if (h.rows() != d_sys_ || h.cols() != d_sys_)
    throw DimensionError("schedule: Hamiltonian dimension mismatch");
  DenseOperator l = hamiltonian_liouvillian(h);
  for (const auto& [op, rate] : lindblad_) l += lindblad_dissipator(op, rate);
  return l;
}

DenseOperator SystemPropagatorSchedule::step(int l) const {
  const double t_mid = t0_ + (l - 1) * dt_ + 0.5 * dt_;
  return matrix_exp(dt_ * liouvillian(t_mid));
}

DenseOperator SystemPropagatorSchedule::half_step(int l, bool second_half) const {
  const double offset = second_half ? 0.75 : 0.25;
  const double t_mid = t0_ + (l - 1) * dt_ + offset * dt_;
  return matrix_exp(0.5 * dt_ * liouvillian(t_mid));
}

}  // namespace ptmpo
