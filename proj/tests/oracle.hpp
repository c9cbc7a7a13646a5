// Brute-force reference propagation on the full system (x) all-modes
// Hilbert space, replicating either the exact per-step environment
// propagator or the same symmetric Trotter sequence used by the PT-MPO
// build: M, then B_K ... B_1 B_1 ... B_K with half-step factors.
#pragma once

#include <vector>

#include "ptmpo/liouville.hpp"
#include "ptmpo/numerics.hpp"

namespace ptmpo::testing {

class JointOracle {
 public:
  JointOracle(int d_sys, std::vector<ModeSpec> modes, double dt)
      : d_sys_(d_sys), modes_(std::move(modes)), dt_(dt) {
    dims_.push_back(d_sys_);
    dim_full_ = d_sys_;
    for (const auto& m : modes_) {
      dims_.push_back(m.mode_dim);
      dim_full_ *= m.mode_dim;
    }
    for (size_t k = 0; k < modes_.size(); ++k) {
      const DenseOperator h = embed_two_site(modes_[k].joint_hamiltonian, k);
      DenseOperator b = matrix_exp(0.5 * dt_ * full_liouvillian(h));
      if (modes_[k].fermionic) b = b * parity_superop(k);
      half_.push_back(b);
      exact_sum_ = exact_sum_.size() ? DenseOperator(exact_sum_ + h) : h;
    }
    if (!modes_.empty()) env_exact_ = matrix_exp(dt_ * full_liouvillian(exact_sum_));
  }

  void init(const DenseOperator& rho_sys) {
    DenseOperator rho = rho_sys;
    for (const auto& m : modes_) rho = kron(rho, m.initial_state);
    state_ = vectorize_full(rho);
  }

  // One Trotterized step matching the PT-MPO contraction order.
  void step(const DenseOperator& m_sys) {
    apply_system_superop(m_sys);
    for (size_t k = modes_.size(); k-- > 0;) state_ = half_[k] * state_;
    for (size_t k = 0; k < modes_.size(); ++k) state_ = half_[k] * state_;
  }

  // One step with the un-Trotterized joint environment propagator.
  void step_exact_env(const DenseOperator& m_sys) {
    apply_system_superop(m_sys);
    state_ = env_exact_ * state_;
  }

  DenseOperator reduced() const {
    const int env = dim_full_ / d_sys_;
    DenseOperator rho = DenseOperator::Zero(d_sys_, d_sys_);
    const DenseOperator full = devectorize_full();
    for (int s = 0; s < d_sys_; ++s)
      for (int sp = 0; sp < d_sys_; ++sp)
        for (int e = 0; e < env; ++e)
          rho(s, sp) += full(s * env + e, sp * env + e);
    return rho;
  }

  // <sys_op (x) mode_op on mode k (x) 1 elsewhere>.
  Complex expect(const DenseOperator& sys_op, size_t k,
                 const DenseOperator& mode_op) const {
    DenseOperator op = sys_op;
    for (size_t j = 0; j < modes_.size(); ++j)
      op = kron(op, j == k ? mode_op
                           : DenseOperator::Identity(modes_[j].mode_dim,
                                                     modes_[j].mode_dim));
    return (op * devectorize_full()).trace();
  }

  // Expectation of an arbitrary operator on the full Hilbert space.
  Complex expect_full(const DenseOperator& op) const {
    return (op * devectorize_full()).trace();
  }

  // Embeds a two-site operator on (system, mode k) into the full space.
  DenseOperator embed_two_site(const DenseOperator& op, size_t k) const {
    const int m = modes_[k].mode_dim;
    DenseOperator full = DenseOperator::Zero(dim_full_, dim_full_);
    std::vector<int> idx(dims_.size());
    for (int r = 0; r < dim_full_; ++r) {
      decompose(r, idx);
      const int s = idx[0], xi = idx[k + 1];
      for (int sp = 0; sp < d_sys_; ++sp)
        for (int xp = 0; xp < m; ++xp) {
          std::vector<int> jdx = idx;
          jdx[0] = sp;
          jdx[k + 1] = xp;
          full(r, compose(jdx)) += op(s * m + xi, sp * m + xp);
        }
    }
    return full;
  }

  int dim_full() const { return dim_full_; }

 private:
  DenseOperator full_liouvillian(const DenseOperator& h) const {
    return hamiltonian_liouvillian(h);
  }

  DenseOperator parity_superop(size_t k) const {
    // P = |0><0|_S (x) 1 + |1><1|_S (x) (-sigma_z) on (system, mode k).
    DenseOperator p = DenseOperator::Identity(2 * d_sys_, 2 * d_sys_);
    p(2, 2) = 1.0;
    p(3, 3) = -1.0;
    const DenseOperator pf = embed_two_site(p, k);
    return kron(pf, pf.conjugate());
  }

  void decompose(int r, std::vector<int>& idx) const {
    for (size_t j = dims_.size(); j-- > 0;) {
      idx[j] = r % dims_[j];
      r /= dims_[j];
    }
  }
  int compose(const std::vector<int>& idx) const {
    int r = 0;
    for (size_t j = 0; j < dims_.size(); ++j) r = r * dims_[j] + idx[j];
    return r;
  }

  ComplexVector vectorize_full(const DenseOperator& rho) const {
    ComplexVector v(size_t(dim_full_) * dim_full_);
    for (int i = 0; i < dim_full_; ++i)
      for (int j = 0; j < dim_full_; ++j) v(i * dim_full_ + j) = rho(i, j);
    return v;
  }
  DenseOperator devectorize_full() const {
    DenseOperator rho(dim_full_, dim_full_);
    for (int i = 0; i < dim_full_; ++i)
      for (int j = 0; j < dim_full_; ++j) rho(i, j) = state_(i * dim_full_ + j);
    return rho;
  }

  void apply_system_superop(const DenseOperator& m_sys) {
    const int env = dim_full_ / d_sys_;
    ComplexVector out = ComplexVector::Zero(state_.size());
    for (int e = 0; e < env; ++e)
      for (int ep = 0; ep < env; ++ep) {
        ComplexVector block(d_sys_ * d_sys_);
        for (int s = 0; s < d_sys_; ++s)
          for (int sp = 0; sp < d_sys_; ++sp)
            block(s * d_sys_ + sp) =
                state_((s * env + e) * dim_full_ + sp * env + ep);
        block = (m_sys * block).eval();
        for (int s = 0; s < d_sys_; ++s)
          for (int sp = 0; sp < d_sys_; ++sp)
            out((s * env + e) * dim_full_ + sp * env + ep) =
                block(s * d_sys_ + sp);
      }
    state_ = std::move(out);
  }

  int d_sys_;
  std::vector<ModeSpec> modes_;
  double dt_;
  std::vector<int> dims_;
  int dim_full_ = 1;
  std::vector<DenseOperator> half_;
  DenseOperator exact_sum_;
  DenseOperator env_exact_;
  ComplexVector state_;
};

}  // namespace ptmpo::testing
