#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ptmpo/ptmpo.hpp"

namespace ptmpo {

// Simulation output: one row per recorded time, one complex channel per
// observable, plus the reduced system state and a per-row reliability flag.
struct TimeSeries {
  std::vector<double> times;
  std::vector<std::string> names;
  std::vector<std::vector<Complex>> channels;  // [name][time]
  std::vector<DenseOperator> states;           // reduced density matrices
  std::vector<char> reliable;

  int n_rows() const { return static_cast<int>(times.size()); }
  const std::vector<Complex>& channel(const std::string& name) const;
};

struct PropagateOptions {
  int unreliable_tail = 5;  // trailing rows flagged unreliable
};

using NamedOperator = std::pair<std::string, DenseOperator>;

// Iterates the path sum rho^{a_l}_{d_l} = sum Q M rho step by step.
// system_obs are extracted from the reduced state; kernel_names select
// system(x)environment closures tracked inside the PT-MPO.
TimeSeries propagate(const PTMPO& pt, const SystemPropagatorSchedule& sched,
                     const DenseOperator& rho0,
                     const std::vector<NamedOperator>& system_obs = {},
                     const std::vector<std::string>& kernel_names = {},
                     const PropagateOptions& opts = {});

// Two independent environments with alternating contraction order
// (Q1 Q2 on odd steps, Q2 Q1 on even steps); rows are recorded at even
// step counts only, where the alternation cancels the ordering error.
TimeSeries propagate_two_baths(const PTMPO& pt1, const PTMPO& pt2,
                               const SystemPropagatorSchedule& sched,
                               const DenseOperator& rho0,
                               const std::vector<NamedOperator>& system_obs = {},
                               const std::vector<std::string>& kernel_names1 = {},
                               const std::vector<std::string>& kernel_names2 = {},
                               const PropagateOptions& opts = {});

// Cumulative trapezoid of y(t); result[0] = 0.
std::vector<double> cumulative_trapezoid(const std::vector<double>& times,
                                         const std::vector<double>& values);

}  // namespace ptmpo
