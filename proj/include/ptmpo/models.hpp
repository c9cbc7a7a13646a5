#pragma once

#include <vector>

#include "ptmpo/liouville.hpp"

namespace ptmpo {

// Spectral density J(w) discretized to (w_k, g_k) pairs on a uniform grid.
struct SpectralDensity {
  enum class Kind { flat, bump, lorentzian, phonon };

  Kind kind = Kind::flat;
  double kappa = 1.0;     // coupling scale (1/time)
  double omega_bw = 1.0;  // bandwidth (flat/bump)
  double gamma = 0.25;    // Lorentzian width
  // Phonon (acoustic deformation potential) parameters, ps^-1 units.
  double c_e = 0.1271, c_h = -0.0635, omega_e = 2.555, omega_h = 2.938;
  int n_modes = 1;
  double omega_min = 0.0, omega_max = 0.0;  // window; 0,0 = derive default

  double value(double omega) const;
  // Window bounds, defaulting to [-omega_bw/2, omega_bw/2] when unset.
  std::pair<double, double> window() const;
};

struct DiscreteMode {
  double omega = 0.0;
  double g = 0.0;
};

// Midpoints of n_modes equal bins; g_k = sqrt(J(w_k) * width / n_modes).
std::vector<DiscreteMode> discretize(const SpectralDensity& j);

// Central spin bath: spin-1/2 modes with Heisenberg coupling J S.s and
// seeded Haar-random pure initial orientations.
std::vector<ModeSpec> central_spin_modes(int n_spins, double coupling,
                                         unsigned seed);

// Fermionic lead: spin analogues of the lead-mode Hamiltonians with the
// fermionic (parity-dressing) flag set; completely filled or empty.
std::vector<ModeSpec> fermionic_lead_modes(const SpectralDensity& j,
                                           bool filled);

enum class BosonCoupling { rotating_wave, displacement };

struct BosonModes {
  std::vector<ModeSpec> modes;
  std::vector<DiscreteMode> grid;
  std::vector<int> dims;            // per-mode truncated dimension
  double polaron_shift = 0.0;       // sum_k g_k^2/w_k (displacement form)
  double max_discarded_tail = 0.0;  // worst thermal weight beyond truncation
};

// Truncated oscillator modes with thermal initial states. temperature is
// k_B T / hbar in inverse time units. n_max caps the photon/phonon number
// per mode; at T > 0 modes whose thermal tail already falls below 1e-3 at
// a smaller ladder are truncated there.
BosonModes boson_modes(const SpectralDensity& j, int n_max, double temperature,
                       BosonCoupling form);

struct PulseSpec {
  double area = 0.0;      // radians
  double center = 0.0;    // time
  double fwhm = 1.0;      // FWHM duration tau; sigma = tau/sqrt(8 ln 2)
  double detuning = 0.0;  // 1/time
};

// H_S(t) = (1/2)(Omega(t)|e><g| + h.c.) + excited_shift |e><e| with a
// pulse-area-normalized Gaussian envelope per pulse.
SystemPropagatorSchedule gaussian_pulse_schedule(
    const std::vector<PulseSpec>& pulses, double dt, double t0 = 0.0,
    double excited_shift = 0.0);

}  // namespace ptmpo
