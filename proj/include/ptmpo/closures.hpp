#pragma once

#include <string>
#include <vector>

#include "ptmpo/liouville.hpp"

namespace ptmpo {

using RowVector = Eigen::RowVectorXcd;

// Decomposed observable sum_k A (x) O^(k): one system operator plus one
// environment operator per mode. Current-type observables carry a
// Jordan-Wigner parity string instead of the trace on accumulated modes.
struct ObservableSpec {
  std::string name;
  DenseOperator system_part;             // on H_S; identity allowed
  std::vector<DenseOperator> env_parts;  // per mode; zero operator allowed
  bool fermionic_string = false;
};

// Liouville covector of a mode operator: o_{(xi,eta)} = <eta|O|xi>.
RowVector liouville_covector(const DenseOperator& op);

// Tracks the trace closure q_{d_l} and the environment part of every
// observable closure through expansion and compression of the inner bonds.
struct ClosureSet {
  struct Tracked {
    ObservableSpec spec;
    std::vector<RowVector> vec;       // per step l=1..n (index l-1)
    Complex initial_env_value = 0.0;  // environment factor at t_0
  };

  int n_steps = 0;
  std::vector<RowVector> trace;  // per step l=1..n
  std::vector<Tracked> observables;

  static ClosureSet trivial(int n_steps);
  void add_observable(const ObservableSpec& spec);
  const Tracked& find(const std::string& name) const;
};

// Expands every closure vector by the mode's Liouville dimension at bonds
// l = 1..n-1: q~_{(d,b)} = q_d I_b, o~_{(d,b)} = o_d I_b + q_d o^(k)_b.
// Fermionic-string observables use the parity factor <eta|-sz|xi> in place
// of the trace; the coupling weight is folded into the mode operator.
// mode_index selects env_parts.
void expand_with_mode(ClosureSet& closures, const ModeSpec& mode,
                      int mode_index);

// Right-multiplies every closure vector at bond l (1-based) by t_inv.
void apply_bond_transform(ClosureSet& closures, int l,
                          const DenseOperator& t_inv);

// Extraction kernel for one observable: value_l = Tr(A X_l) with
// X_l(nu,mu) = sum_d env[l](d) rho^{(nu,mu)}_d.
struct ObservableKernel {
  std::string name;
  DenseOperator system_part;
  std::vector<RowVector> env;       // per step
  Complex initial_env_value = 0.0;  // multiplied by Tr(A rho_0) at t_0
};

ObservableKernel finalize(const ClosureSet& closures, const std::string& name);

}  // namespace ptmpo
