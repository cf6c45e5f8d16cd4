#pragma once

// Closed-form reference results used to validate the numerical machinery.
// Everything here is independent of the solvers under test: plain formulas
// evaluated directly.

#include <cmath>
#include <complex>

#include "qqc/constants.hpp"
#include "qqc/errors.hpp"

namespace qqc::ref {

// Zero-energy scattering length of V(r) = -C4 / (r^2 + b^2)^2.
// With nu = sqrt(1 + 2 mu C4 / b^2), the radial equation maps onto a
// Legendre-type equation under r = b tan(theta) and the zero-energy solution
// is elementary:
//   a_s = nu * b * cot(nu pi / 2).
// Poles at even nu (new bound state entering), zeros at odd nu.
inline double polarization_scattering_length(double c4, double b, double mu) {
    if (!(c4 > 0.0 && b > 0.0 && mu > 0.0))
        throw DomainError("polarization reference: parameters must be positive");
    const double nu = std::sqrt(1.0 + 2.0 * mu * c4 / (b * b));
    const double t = std::tan(0.5 * constants::pi * nu);
    return nu * b / t;
}

inline double polarization_order(double c4, double b, double mu) {
    return std::sqrt(1.0 + 2.0 * mu * c4 / (b * b));
}

// number of s-wave bound states: one per pole crossed, i.e. per even
// integer <= nu
inline int polarization_bound_states(double c4, double b, double mu) {
    return static_cast<int>(std::floor(polarization_order(c4, b, mu) / 2.0));
}

// depth of the potential at r = 0 expressed through nu and the long-range
// scale rStar = sqrt(2 mu C4):  |V(0)| = (nu^2 - 1)^2 / (2 mu rStar^2)
inline double polarization_core_depth(double c4, double b, double mu) {
    const double nu2 = 1.0 + 2.0 * mu * c4 / (b * b);
    const double rs2 = 2.0 * mu * c4;
    return (nu2 - 1.0) * (nu2 - 1.0) / (2.0 * mu * rs2);
}

// attractive square well of depth V0 > 0 and radius R
inline double square_well_scattering_length(double v0, double radius, double mu) {
    if (!(v0 > 0.0 && radius > 0.0 && mu > 0.0))
        throw DomainError("square well reference: parameters must be positive");
    const double k = std::sqrt(2.0 * mu * v0);
    return radius * (1.0 - std::tan(k * radius) / (k * radius));
}

inline int square_well_bound_states(double v0, double radius, double mu) {
    const double kr = std::sqrt(2.0 * mu * v0) * radius;
    return static_cast<int>(std::floor(kr / constants::pi + 0.5));
}

// 1D scattering off g*delta(z) for a particle of mass m with incident
// momentum k > 0 (e^{-iEt} convention):
//   r(k) = f+(k) = -1 / (1 - i k / (m g)),   t(k) = 1 + f+(k).
// Satisfies |1+f|^2 + |f|^2 = 1 and g = (k/m) Re f / Im f.
inline std::complex<double> delta_reflection(double k, double g, double m) {
    if (!(k > 0.0) || !(m > 0.0)) throw DomainError("delta reference: need k > 0, m > 0");
    if (g == 0.0) return {0.0, 0.0};
    return -1.0 / (1.0 - std::complex<double>(0.0, k / (m * g)));
}

// Effective 1D coupling of a 3D scatterer with scattering length aS placed
// in a transverse harmonic guide of oscillator length aPerp:
//   g1D = (2 aS / (m aPerp^2)) / (1 - C aS / aPerp),  C = |zeta(1/2)|.
// Diverges (confinement resonance) at aPerp / aS = C.
inline constexpr double kTransverseC = 1.4603545088095868;

inline double olshanii_g1d(double aS, double aPerp, double mass) {
    if (!(aPerp > 0.0 && mass > 0.0)) throw DomainError("g1d reference: bad guide parameters");
    const double denom = 1.0 - kTransverseC * aS / aPerp;
    if (denom == 0.0) throw DomainError("g1d reference: exactly at the resonance pole");
    return (2.0 * aS / (mass * aPerp * aPerp)) / denom;
}

inline double cir_ratio() { return kTransverseC; }

// free 1D Gaussian density width: sigma(t) = sigma0 sqrt(1 + (t / (2 m sigma0^2))^2)
inline double gaussian_width(double sigma0, double t, double mass) {
    const double tau = t / (2.0 * mass * sigma0 * sigma0);
    return sigma0 * std::sqrt(1.0 + tau * tau);
}

// hard-collision energy-transfer prefactor 4 m_a m_i / (m_a + m_i)^2
inline double energy_transfer_prefactor(double ma, double mi) {
    const double s = ma + mi;
    return 4.0 * ma * mi / (s * s);
}

// first instability edge of y'' + (a - 2q cos 2t) y = 0 along a = 0
// (boundary of the principal stability region), literature value
inline constexpr double kMathieuEdgeQ = 0.908046;

}  // namespace qqc::ref
