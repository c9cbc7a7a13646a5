#include "ptmpo/propagate.hpp"

namespace ptmpo {

namespace {

using RowMajorMatrix =
    Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// State columns are path-sum components rho^{alpha}_{d}; contracting one
// PT-MPO tensor maps chi_in columns to chi_out columns.
DenseOperator contract_site(const Tensor4& q, const DenseOperator& s) {
  const int d2 = q.d2;
  if (s.rows() != d2 || s.cols() != q.chi_in)
    throw DimensionError("contract_site: state/bond dimension mismatch");
  Eigen::Map<const RowMajorMatrix> qm(q.data.data(), size_t(q.chi_out) * d2,
                                      size_t(d2) * q.chi_in);
  const RowMajorMatrix sr = s;
  Eigen::Map<const ComplexVector> sv(sr.data(), sr.size());
  const ComplexVector flat = qm * sv;  // index dl*d2 + alpha
  DenseOperator out(d2, q.chi_out);
  for (int dl = 0; dl < q.chi_out; ++dl)
    out.col(dl) = flat.segment(size_t(dl) * d2, d2);
  return out;
}

struct KernelRef {
  const ClosureSet::Tracked* tracked;
  int which_bath;  // 1 or 2
};

void record_row(TimeSeries& ts, double t, const DenseOperator& s,
                const RowVector& weight_trace,
                const std::vector<NamedOperator>& system_obs,
                const std::vector<std::pair<const DenseOperator*, RowVector>>&
                    kernel_weights,
                bool reliable) {
  ts.times.push_back(t);
  ts.reliable.push_back(reliable ? 1 : 0);
  const ComplexVector rho_bar_vec = s * weight_trace.transpose();
  const DenseOperator rho_bar = devectorize(rho_bar_vec);
  if (!all_finite(rho_bar))
    throw NumericalError("propagate: non-finite state at t = " +
                         std::to_string(t));
  ts.states.push_back(rho_bar);
  size_t c = 0;
  for (const auto& [name, op] : system_obs)
    ts.channels[c++].push_back((op * rho_bar).trace());
  for (const auto& [op, w] : kernel_weights) {
    const DenseOperator x = devectorize(s * w.transpose());
    ts.channels[c++].push_back((*op * x).trace());
  }
}

bool row_reliable(int step, int n_steps, int tail) {
  return step + tail <= n_steps;
}

}  // namespace

const std::vector<Complex>& TimeSeries::channel(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return channels[i];
  throw ConfigError("TimeSeries: unknown channel " + name);
}

TimeSeries propagate(const PTMPO& pt, const SystemPropagatorSchedule& sched,
                     const DenseOperator& rho0,
                     const std::vector<NamedOperator>& system_obs,
                     const std::vector<std::string>& kernel_names,
                     const PropagateOptions& opts) {
  pt.check_invariants();
  if (rho0.rows() != pt.d_sys || rho0.cols() != pt.d_sys)
    throw DimensionError("propagate: initial state dimension mismatch");
  const int n = pt.n_steps;

  std::vector<const ClosureSet::Tracked*> kernels;
  for (const auto& name : kernel_names)
    kernels.push_back(&pt.closures.find(name));

  TimeSeries ts;
  for (const auto& [name, op] : system_obs) ts.names.push_back(name);
  for (const auto& name : kernel_names) ts.names.push_back(name);
  ts.channels.resize(ts.names.size());

  // t_0 row: trivial bond, environment factors enter as scalars.
  DenseOperator s = vectorize(rho0);
  ts.times.push_back(sched.t0());
  ts.reliable.push_back(1);
  ts.states.push_back(rho0);
  size_t c = 0;
  for (const auto& [name, op] : system_obs)
    ts.channels[c++].push_back((op * rho0).trace());
  for (const auto* k : kernels)
    ts.channels[c++].push_back(k->initial_env_value *
                               (k->spec.system_part * rho0).trace());

  for (int l = 1; l <= n; ++l) {
    s = (sched.step(l) * s).eval();
    s = contract_site(pt.tensors[l - 1], s);
    std::vector<std::pair<const DenseOperator*, RowVector>> kw;
    for (const auto* k : kernels)
      kw.emplace_back(&k->spec.system_part, k->vec[l - 1]);
    record_row(ts, sched.t0() + l * pt.dt, s, pt.closures.trace[l - 1],
               system_obs, kw, row_reliable(l, n, opts.unreliable_tail));
  }
  return ts;
}

TimeSeries propagate_two_baths(const PTMPO& pt1, const PTMPO& pt2,
                               const SystemPropagatorSchedule& sched,
                               const DenseOperator& rho0,
                               const std::vector<NamedOperator>& system_obs,
                               const std::vector<std::string>& kernel_names1,
                               const std::vector<std::string>& kernel_names2,
                               const PropagateOptions& opts) {
  pt1.check_invariants();
  pt2.check_invariants();
  if (pt1.n_steps != pt2.n_steps || pt1.d_sys != pt2.d_sys ||
      pt1.dt != pt2.dt)
    throw DimensionError("propagate_two_baths: incompatible PT-MPOs");
  if (rho0.rows() != pt1.d_sys || rho0.cols() != pt1.d_sys)
    throw DimensionError("propagate_two_baths: initial state mismatch");
  const int n = pt1.n_steps;
  const int d2 = pt1.d_sys * pt1.d_sys;

  std::vector<KernelRef> kernels;
  for (const auto& name : kernel_names1)
    kernels.push_back({&pt1.closures.find(name), 1});
  for (const auto& name : kernel_names2)
    kernels.push_back({&pt2.closures.find(name), 2});

  TimeSeries ts;
  for (const auto& [name, op] : system_obs) ts.names.push_back(name);
  for (const auto& k : kernels) ts.names.push_back(k.tracked->spec.name);
  ts.channels.resize(ts.names.size());

  ts.times.push_back(sched.t0());
  ts.reliable.push_back(1);
  ts.states.push_back(rho0);
  size_t c = 0;
  for (const auto& [name, op] : system_obs)
    ts.channels[c++].push_back((op * rho0).trace());
  for (const auto& k : kernels)
    ts.channels[c++].push_back(k.tracked->initial_env_value *
                               (k.tracked->spec.system_part * rho0).trace());

  // State columns indexed d1*chi2 + d2.
  DenseOperator s = vectorize(rho0);
  int chi1 = 1, chi2 = 1;

  auto contract_bath2 = [&](const Tensor4& q) {
    DenseOperator out(d2, size_t(chi1) * q.chi_out);
    for (int d1 = 0; d1 < chi1; ++d1)
      out.middleCols(size_t(d1) * q.chi_out, q.chi_out) =
          contract_site(q, s.middleCols(size_t(d1) * chi2, chi2));
    s = std::move(out);
    chi2 = q.chi_out;
  };
  auto contract_bath1 = [&](const Tensor4& q) {
    DenseOperator out(d2, size_t(q.chi_out) * chi2);
    DenseOperator slice(d2, chi1);
    for (int dd = 0; dd < chi2; ++dd) {
      for (int d1 = 0; d1 < chi1; ++d1)
        slice.col(d1) = s.col(size_t(d1) * chi2 + dd);
      const DenseOperator r = contract_site(q, slice);
      for (int d1 = 0; d1 < q.chi_out; ++d1)
        out.col(size_t(d1) * chi2 + dd) = r.col(d1);
    }
    s = std::move(out);
    chi1 = q.chi_out;
  };

  for (int l = 1; l <= n; ++l) {
    s = (sched.step(l) * s).eval();
    if (l % 2 == 1) {
      contract_bath1(pt1.tensors[l - 1]);
      contract_bath2(pt2.tensors[l - 1]);
    } else {
      contract_bath2(pt2.tensors[l - 1]);
      contract_bath1(pt1.tensors[l - 1]);
    }
    // The ordering alternation only cancels at even step counts; odd rows
    // are stored for diagnostics but flagged unreliable.
    const bool even = (l % 2 == 0);
    const RowVector& q1 = pt1.closures.trace[l - 1];
    const RowVector& q2 = pt2.closures.trace[l - 1];
    auto outer = [&](const RowVector& a, const RowVector& b) {
      RowVector w(a.size() * b.size());
      for (Eigen::Index i = 0; i < a.size(); ++i)
        w.segment(i * b.size(), b.size()) = a(i) * b;
      return w;
    };
    std::vector<std::pair<const DenseOperator*, RowVector>> kw;
    for (const auto& k : kernels)
      kw.emplace_back(&k.tracked->spec.system_part,
                      k.which_bath == 1 ? outer(k.tracked->vec[l - 1], q2)
                                        : outer(q1, k.tracked->vec[l - 1]));
    record_row(ts, sched.t0() + l * pt1.dt, s, outer(q1, q2), system_obs, kw,
               even && row_reliable(l, n, opts.unreliable_tail));
  }
  return ts;
}

std::vector<double> cumulative_trapezoid(const std::vector<double>& times,
                                         const std::vector<double>& values) {
  if (times.size() != values.size())
    throw DimensionError("cumulative_trapezoid: length mismatch");
  std::vector<double> out(times.size(), 0.0);
  for (size_t i = 1; i < times.size(); ++i)
    out[i] = out[i - 1] +
             0.5 * (values[i] + values[i - 1]) * (times[i] - times[i - 1]);
  return out;
}

}  // namespace ptmpo
