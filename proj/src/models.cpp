#include "ptmpo/models.hpp"

#include <cmath>
#include <random>

namespace ptmpo {

double SpectralDensity::value(double omega) const {
  switch (kind) {
    case Kind::flat:
      return kappa / (2.0 * M_PI);
    case Kind::bump: {
      const double x = 2.0 * omega / omega_bw;
      if (std::abs(x) >= 1.0) return 0.0;
      return kappa / (2.0 * M_PI) * std::exp(1.0 - 1.0 / (1.0 - x * x));
    }
    case Kind::lorentzian:
      return kappa * kappa / M_PI * gamma / (omega * omega + gamma * gamma);
    case Kind::phonon: {
      const double d = c_e * std::exp(-omega * omega / (omega_e * omega_e)) -
                       c_h * std::exp(-omega * omega / (omega_h * omega_h));
      return omega * omega * omega * d * d;
    }
  }
  throw ConfigError("SpectralDensity: unknown kind");
}

std::pair<double, double> SpectralDensity::window() const {
  if (omega_min == 0.0 && omega_max == 0.0)
    return {-0.5 * omega_bw, 0.5 * omega_bw};
  if (!(omega_max > omega_min))
    throw ConfigError("SpectralDensity: empty frequency window");
  return {omega_min, omega_max};
}

std::vector<DiscreteMode> discretize(const SpectralDensity& j) {
  if (j.n_modes < 1) throw ConfigError("discretize: n_modes must be >= 1");
  const auto [lo, hi] = j.window();
  const double width = hi - lo;
  const double bin = width / j.n_modes;
  std::vector<DiscreteMode> out(j.n_modes);
  for (int k = 0; k < j.n_modes; ++k) {
    const double w = lo + (k + 0.5) * bin;
    const double jw = j.value(w);
    if (jw < 0.0)
      throw ValidationError("discretize: negative spectral density at omega=" +
                            std::to_string(w));
    out[k] = {w, std::sqrt(jw * width / j.n_modes)};
  }
  return out;
}

std::vector<ModeSpec> central_spin_modes(int n_spins, double coupling,
                                         unsigned seed) {
  if (n_spins < 0)
    throw ConfigError("central_spin_modes: negative mode count");
  const DenseOperator sx = 0.5 * pauli_x(), sy = 0.5 * pauli_y(),
                      sz = 0.5 * pauli_z();
  const DenseOperator h =
      coupling * (kron(sx, sx) + kron(sy, sy) + kron(sz, sz));

  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ModeSpec> modes(n_spins);
  for (auto& m : modes) {
    // Haar-uniform pure state: cos(theta) uniform on [-1,1], phi uniform.
    const double cos_theta = 2.0 * unit(rng) - 1.0;
    const double phi = 2.0 * M_PI * unit(rng);
    const double half = 0.5 * std::acos(cos_theta);
    ComplexVector psi(2);
    psi(0) = std::cos(half);
    psi(1) = std::polar(std::sin(half), phi);
    m.mode_dim = 2;
    m.joint_hamiltonian = h;
    m.initial_state = psi * psi.adjoint();
  }
  return modes;
}

std::vector<ModeSpec> fermionic_lead_modes(const SpectralDensity& j,
                                           bool filled) {
  const DenseOperator id = DenseOperator::Identity(2, 2);
  const DenseOperator n_op = sigma_plus() * sigma_minus();  // diag(0,1)
  std::vector<ModeSpec> modes;
  for (const auto& [omega, g] : discretize(j)) {
    ModeSpec m;
    m.mode_dim = 2;
    m.fermionic = true;
    m.joint_hamiltonian =
        omega * kron(id, n_op) + g * (kron(sigma_minus(), sigma_plus()) +
                                      kron(sigma_plus(), sigma_minus()));
    m.initial_state = DenseOperator::Zero(2, 2);
    m.initial_state(filled ? 1 : 0, filled ? 1 : 0) = 1.0;
    modes.push_back(std::move(m));
  }
  return modes;
}

BosonModes boson_modes(const SpectralDensity& j, int n_max, double temperature,
                       BosonCoupling form) {
  if (n_max < 1) throw ConfigError("boson_modes: n_max must be >= 1");
  if (temperature < 0.0)
    throw ConfigError("boson_modes: temperature must be non-negative");
  const DenseOperator id_sys = DenseOperator::Identity(2, 2);
  DenseOperator excited = DenseOperator::Zero(2, 2);
  excited(1, 1) = 1.0;  // |e><e|

  BosonModes out;
  out.grid = discretize(j);
  for (const auto& [omega, g] : out.grid) {
    // Ladder dimension: capped at n_max+1; at finite temperature, shrink to
    // where the discarded Boltzmann tail x^dim (x = e^{-w/T}) is < 1e-3.
    int dim = n_max + 1;
    if (temperature > 0.0 && omega > 0.0) {
      const double x = std::exp(-omega / temperature);
      int needed = 2;
      while (needed < n_max + 1 && std::pow(x, needed) >= 1e-3) ++needed;
      dim = std::min(dim, needed);
      out.max_discarded_tail =
          std::max(out.max_discarded_tail, std::pow(x, dim));
    }
    out.dims.push_back(dim);

    const DenseOperator a = boson_annihilation(dim);
    const DenseOperator n_op = boson_number(dim);
    ModeSpec m;
    m.mode_dim = dim;
    if (form == BosonCoupling::rotating_wave) {
      m.joint_hamiltonian =
          omega * kron(id_sys, n_op) +
          g * (kron(sigma_minus(), a.adjoint()) + kron(sigma_plus(), a));
    } else {
      if (omega == 0.0)
        throw ConfigError(
            "boson_modes: displacement coupling singular at omega = 0");
      m.joint_hamiltonian = omega * kron(id_sys, n_op) +
                            g * kron(excited, a.adjoint() + a);
      out.polaron_shift += g * g / omega;
    }
    // Thermal state over the truncated ladder, renormalized.
    RealVector w(dim);
    for (int n = 0; n < dim; ++n)
      w(n) = (temperature > 0.0) ? std::exp(-omega * n / temperature)
                                 : (n == 0 ? 1.0 : 0.0);
    w /= w.sum();
    m.initial_state = DenseOperator::Zero(dim, dim);
    for (int n = 0; n < dim; ++n) m.initial_state(n, n) = w(n);
    out.modes.push_back(std::move(m));
  }
  return out;
}

SystemPropagatorSchedule gaussian_pulse_schedule(
    const std::vector<PulseSpec>& pulses, double dt, double t0,
    double excited_shift) {
  for (const auto& p : pulses)
    if (!(p.fwhm > 0.0))
      throw ConfigError("gaussian_pulse_schedule: pulse FWHM must be > 0");
  auto hamiltonian = [pulses, excited_shift](double t) {
    Complex rabi = 0.0;
    for (const auto& p : pulses) {
      const double sigma = p.fwhm / std::sqrt(8.0 * std::log(2.0));
      const double x = (t - p.center) / sigma;
      // Pulse-area normalization: integral of the envelope equals area.
      const double env =
          p.area / (sigma * std::sqrt(2.0 * M_PI)) * std::exp(-0.5 * x * x);
      rabi += env * std::exp(Complex(0.0, -p.detuning * t));
    }
    DenseOperator h = DenseOperator::Zero(2, 2);
    h(1, 0) = 0.5 * rabi;             // |e><g|
    h(0, 1) = 0.5 * std::conj(rabi);  // |g><e|
    h(1, 1) = excited_shift;
    return h;
  };
  return SystemPropagatorSchedule(2, dt, hamiltonian, t0);
}

}  // namespace ptmpo
