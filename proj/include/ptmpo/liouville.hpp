#pragma once

#include <functional>
#include <vector>

#include "ptmpo/dense.hpp"

namespace ptmpo {

// Density matrices are packed into Liouville vectors with index
// alpha = nu * d + mu, i.e. row-major flattening of rho_{nu mu}.
// For a system x mode product space the combined Liouville index is
// (alpha, beta) with the system pair alpha slower than the mode pair beta.

ComplexVector vectorize(const DenseOperator& rho);
DenseOperator devectorize(const ComplexVector& v);

// Covector with entry 1 at alpha=(nu,nu); <trace_covector, vec(rho)> = Tr rho.
ComplexVector trace_covector(int d);

// L = -i (H x 1 - 1 x H^T) for a Hermitian H (hbar = 1).
DenseOperator hamiltonian_liouvillian(const DenseOperator& h);

// Dissipator gamma * (C . C^dag - 1/2 {C^dag C, .}) as a superoperator.
DenseOperator lindblad_dissipator(const DenseOperator& c, double rate);

// Permutes a superoperator on a d_sys*d_mode product space from the packing
// ((nu,xi),(mu,eta)) to the split packing ((nu,mu),(xi,eta)) on both sides.
DenseOperator split_system_environment(const DenseOperator& s, int d_sys,
                                       int d_mode);

// One environment mode: joint Hamiltonian on the system x mode product space
// (including the interaction), initial mode density matrix, fermionic flag.
struct ModeSpec {
  int mode_dim = 2;
  DenseOperator joint_hamiltonian;  // (d_sys*mode_dim) square, Hermitian
  DenseOperator initial_state;      // mode_dim square, unit trace
  bool fermionic = false;

  void validate(int d_sys) const;
};

// Half- or full-step mode propagator B, a (d_sys^2*mode_dim^2) square matrix
// with combined row (alpha, beta) and column (alpha', beta'), alpha slower.
// Fermionic modes are dressed with the local parity superoperator.
DenseOperator mode_propagator(const ModeSpec& mode, int d_sys,
                              double dt_fraction);

// Produces the system propagator M_l = exp(L_S dt) for each step l = 1..n.
// Time-dependent Hamiltonians are sampled at the step midpoint.
class SystemPropagatorSchedule {
 public:
  SystemPropagatorSchedule(int d_sys, double dt,
                           std::function<DenseOperator(double)> hamiltonian,
                           double t0 = 0.0);
  static SystemPropagatorSchedule constant(const DenseOperator& h, double dt,
                                           double t0 = 0.0);

  void add_lindblad(const DenseOperator& op, double rate);

  int d_sys() const { return d_sys_; }
  double dt() const { return dt_; }
  double t0() const { return t0_; }

  // Superoperator for step l (1-based), evolving t_{l-1} -> t_l.
  DenseOperator step(int l) const;
  // Half-step propagators for the symmetric system/environment splitting.
  DenseOperator half_step(int l, bool second_half) const;

 private:
  DenseOperator liouvillian(double t) const;

  int d_sys_;
  double dt_, t0_;
  std::function<DenseOperator(double)> hamiltonian_;
  std::vector<std::pair<DenseOperator, double>> lindblad_;
};

}  // namespace ptmpo
