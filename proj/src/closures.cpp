#include "ptmpo/closures.hpp"

namespace ptmpo {

RowVector liouville_covector(const DenseOperator& op) {
  if (op.rows() != op.cols())
    throw DimensionError("liouville_covector: operator must be square");
  const int d = static_cast<int>(op.rows());
  RowVector o(d * d);
  for (int xi = 0; xi < d; ++xi)
    for (int eta = 0; eta < d; ++eta) o(xi * d + eta) = op(eta, xi);
  return o;
}

ClosureSet ClosureSet::trivial(int n_steps) {
  ClosureSet cs;
  cs.n_steps = n_steps;
  cs.trace.assign(n_steps, RowVector::Ones(1));
  return cs;
}

void ClosureSet::add_observable(const ObservableSpec& spec) {
  Tracked t;
  t.spec = spec;
  t.vec.assign(n_steps, RowVector::Zero(1));
  observables.push_back(std::move(t));
}

const ClosureSet::Tracked& ClosureSet::find(const std::string& name) const {
  for (const auto& t : observables)
    if (t.spec.name == name) return t;
  throw ConfigError("unknown observable: " + name);
}

void expand_with_mode(ClosureSet& closures, const ModeSpec& mode,
                      int mode_index) {
  const int m2 = mode.mode_dim * mode.mode_dim;
  const RowVector trace_m = trace_covector(mode.mode_dim).transpose();
  const RowVector parity_m =
      mode.fermionic ? liouville_covector(-pauli_z()) : RowVector();
  const ComplexVector rho_m = vectorize(mode.initial_state);

  // Mode covector per tracked observable (zero if the mode does not appear).
  std::vector<RowVector> mode_cov(closures.observables.size());
  for (size_t i = 0; i < closures.observables.size(); ++i) {
    auto& t = closures.observables[i];
    if (t.spec.fermionic_string && !mode.fermionic)
      throw ConfigError("fermionic-string observable on non-fermionic mode");
    if (mode_index < static_cast<int>(t.spec.env_parts.size()) &&
        t.spec.env_parts[mode_index].size() > 0) {
      const auto& op = t.spec.env_parts[mode_index];
      if (op.rows() != mode.mode_dim)
        throw DimensionError("observable env part dimension mismatch");
      mode_cov[i] = liouville_covector(op);
    } else {
      mode_cov[i] = RowVector::Zero(m2);
    }
    // Running t_0 value over environment modes processed so far.
    const Complex contrib = mode_cov[i] * rho_m;
    if (t.spec.fermionic_string)
      t.initial_env_value =
          t.initial_env_value * (parity_m * rho_m)(0) + contrib;
    else
      t.initial_env_value += contrib;
  }

  for (int l = 1; l <= closures.n_steps - 1; ++l) {
    const RowVector& q = closures.trace[l - 1];
    const int chi = static_cast<int>(q.size());
    for (size_t i = 0; i < closures.observables.size(); ++i) {
      auto& t = closures.observables[i];
      if (static_cast<int>(t.vec[l - 1].size()) != chi)
        throw NumericalError("closure bond-accounting mismatch");
      RowVector out(chi * m2);
      const RowVector& carrier =
          t.spec.fermionic_string ? parity_m : trace_m;
      for (int d = 0; d < chi; ++d)
        out.segment(d * m2, m2) =
            t.vec[l - 1](d) * carrier + q(d) * mode_cov[i];
      t.vec[l - 1] = std::move(out);
    }
    RowVector qt(chi * m2);
    for (int d = 0; d < chi; ++d) qt.segment(d * m2, m2) = q(d) * trace_m;
    closures.trace[l - 1] = std::move(qt);
  }
}

void apply_bond_transform(ClosureSet& closures, int l,
                          const DenseOperator& t_inv) {
  if (l < 1 || l > closures.n_steps)
    throw DimensionError("apply_bond_transform: bond index out of range");
  if (closures.trace[l - 1].size() != t_inv.rows())
    throw DimensionError("apply_bond_transform: shape mismatch");
  closures.trace[l - 1] = closures.trace[l - 1] * t_inv;
  for (auto& t : closures.observables) t.vec[l - 1] = t.vec[l - 1] * t_inv;
}

ObservableKernel finalize(const ClosureSet& closures, const std::string& name) {
  const auto& t = closures.find(name);
  ObservableKernel k;
  k.name = name;
  k.system_part = t.spec.system_part;
  k.env = t.vec;
  k.initial_env_value = t.initial_env_value;
  return k;
}

}  // namespace ptmpo
