#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace trionw {

// energies in ueV, fields in T, bias in mV, time in hbar/ueV
inline constexpr double mu_b = 57.8838;          // ueV/T
inline constexpr double planck_ueV_per_GHz = 4.135667;
inline constexpr double hbar_ueV_ps = 658.2119569; // ueV*ps
inline constexpr double debye_to_e_nm = 0.020819434;

inline double ghz_to_microev(double f) {
  if (f < 0) throw std::invalid_argument("ghz_to_microev: negative frequency");
  return planck_ueV_per_GHz * f;
}

inline double microev_to_ghz(double e) { return e / planck_ueV_per_GHz; }

// rate in ueV for a lifetime in ps
inline double rate_from_lifetime_ps(double tau_ps) { return hbar_ueV_ps / tau_ps; }

// Advisory only: peak Rabi energy for a Gaussian spot (1/e^2 diameter) in
// vacuum. Refractive index and collection losses are ignored.
inline double rabi_from_power(double power_uW, double dipole_debye = 25.0, double spot_um = 2.0) {
  if (power_uW < 0 || dipole_debye < 0 || !(spot_um > 0))
    throw std::invalid_argument("rabi_from_power: invalid arguments");
  constexpr double c = 299792458.0, eps0 = 8.8541878128e-12, debye = 3.33564e-30,
                   joule_per_ueV = 1.602176634e-25;
  double w = 0.5 * spot_um * 1e-6;
  double intensity = 2.0 * power_uW * 1e-6 / (std::numbers::pi * w * w);
  double field = std::sqrt(2.0 * intensity / (c * eps0));
  return dipole_debye * debye * field / joule_per_ueV;
}

enum class DiaMode { Add, Subtract };

inline double apply_diamagnetic(double e, double b, double kappa_dia, DiaMode mode) {
  double d = kappa_dia * b * b;
  return mode == DiaMode::Add ? e + d : e - d;
}

}  // namespace trionw
