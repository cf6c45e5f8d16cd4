#pragma once

// Physical constants and conversion factors. Internally everything runs in
// Hartree atomic units (hbar = m_e = e = 1), which removes hbar from the
// propagators and matches the usual conventions for C4/C6 coefficients.
// Conversion factors are CODATA 2018.

namespace qqc::constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

inline constexpr double hbar = 1.0;  // by construction of the unit system

// 1 unified atomic mass unit in electron masses
inline constexpr double amu_in_au = 1822.888486209;

// Boltzmann constant: 1 K in Hartree
inline constexpr double kelvin_in_au = 3.16681156345556e-6;
inline constexpr double microkelvin_in_au = 1e-6 * kelvin_in_au;

// 1 atomic time unit in seconds
inline constexpr double time_au_in_s = 2.4188843265857e-17;

// Angular frequency of a 1 kHz oscillation, in atomic units
inline constexpr double kilohertz_in_au = two_pi * 1e3 * time_au_in_s;

// 1 Bohr radius in nanometers
inline constexpr double bohr_in_nm = 0.052917721090380;
inline constexpr double nm_in_au = 1.0 / bohr_in_nm;

}  // namespace qqc::constants
