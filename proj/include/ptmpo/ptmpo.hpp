#pragma once

#include <string>
#include <vector>

#include "ptmpo/closures.hpp"

namespace ptmpo {

// Rank-4 PT-MPO tensor Q_l, stored row-major as [d_l][alpha][alpha'][d_{l-1}]
// with left bond d_l (towards later times) and right bond d_{l-1}.
struct Tensor4 {
  int chi_out = 1;  // left bond
  int d2 = 1;       // d_sys^2
  int chi_in = 1;   // right bond
  std::vector<Complex> data;

  Tensor4() = default;
  Tensor4(int chi_out_, int d2_, int chi_in_)
      : chi_out(chi_out_), d2(d2_), chi_in(chi_in_),
        data(size_t(chi_out_) * d2_ * d2_ * chi_in_, Complex(0)) {}

  Complex& at(int dl, int a, int ap, int dr) {
    return data[(size_t(dl) * d2 * d2 + size_t(a) * d2 + ap) * chi_in + dr];
  }
  Complex at(int dl, int a, int ap, int dr) const {
    return data[(size_t(dl) * d2 * d2 + size_t(a) * d2 + ap) * chi_in + dr];
  }
};

struct PTMPO {
  int n_steps = 0;
  int d_sys = 0;
  double dt = 0.0;
  std::vector<Tensor4> tensors;  // site l at index l-1
  ClosureSet closures;
  std::vector<int> peak_bond_per_mode;  // recorded by build_ace

  int max_bond() const;
  void check_invariants() const;
};

PTMPO trivial_pt(int n_steps, int d_sys, double dt);

// Symmetric-Trotter combination of one environment mode into the PT-MPO
// (uncompressed; bulk bonds grow by mode_dim^2). mode_index selects the
// environment parts of tracked observables.
void combine_mode(PTMPO& pt, const ModeSpec& mode, int mode_index = 0);

// Truncated-SVD compression sweeps. Closures ride along via T^{-1}.
void sweep_forward(PTMPO& pt, double eps);
void sweep_backward(PTMPO& pt, double eps);

struct BuildOptions {
  double eps_fw = 0.0;
  double eps_bw = 0.0;
};

PTMPO build_ace(const std::vector<ModeSpec>& modes, int n_steps, int d_sys,
                double dt, double eps,
                const std::vector<ObservableSpec>& observables = {});
PTMPO build_ace(const std::vector<ModeSpec>& modes, int n_steps, int d_sys,
                double dt, const BuildOptions& opts,
                const std::vector<ObservableSpec>& observables = {});

// Versioned binary container ("PTM1", little-endian doubles).
void save_ptmpo(const PTMPO& pt, const std::string& path);
PTMPO load_ptmpo(const std::string& path);

}  // namespace ptmpo
