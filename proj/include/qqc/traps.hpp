#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>

#include "qqc/errors.hpp"

namespace qqc {

// How the ion trap enters the equations of motion: with the full rf drive
// (micromotion included) or replaced by the static secular harmonic trap.
enum class IonMode { rf, secular };

inline IonMode parse_ion_mode(const std::string& s) {
    if (s == "rf") return IonMode::rf;
    if (s == "secular") return IonMode::secular;
    throw ConfigError("ion mode must be 'rf' or 'secular', got '" + s + "'");
}
inline const char* to_string(IonMode m) { return m == IonMode::rf ? "rf" : "secular"; }

// Trace of the monodromy matrix of the Mathieu equation
//   y'' + (a - 2 q cos 2t) y = 0
// over one period in t (pi). Solutions are bounded iff |trace| <= 2.
inline double mathieu_trace(double a, double q) {
    constexpr int kSteps = 4096;
    const double h = M_PI / kSteps;
    // two basis solutions: (y1, y1') = (1, 0), (y2, y2') = (0, 1)
    double y1 = 1.0, p1 = 0.0, y2 = 0.0, p2 = 1.0;
    auto acc = [&](double t, double y) { return -(a - 2.0 * q * std::cos(2.0 * t)) * y; };
    for (int i = 0; i < kSteps; ++i) {
        const double t = i * h;
        auto rk = [&](double& y, double& p) {
            const double k1y = p, k1p = acc(t, y);
            const double k2y = p + 0.5 * h * k1p, k2p = acc(t + 0.5 * h, y + 0.5 * h * k1y);
            const double k3y = p + 0.5 * h * k2p, k3p = acc(t + 0.5 * h, y + 0.5 * h * k2y);
            const double k4y = p + h * k3p, k4p = acc(t + h, y + h * k3y);
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        };
        rk(y1, p1);
        rk(y2, p2);
    }
    return y1 + p2;
}

inline bool mathieu_stable(double a, double q) {
    return std::abs(mathieu_trace(a, q)) <= 2.0 * (1.0 + 1e-9);
}

struct PaulTrapConfig {
    double ionMass = 0.0;      // atomic units
    double driveFrequency = 0.0;  // Omega
    std::array<double, 3> a{0.0, 0.0, 0.0};
    std::array<double, 3> q{0.0, 0.0, 0.0};
    IonMode mode = IonMode::rf;

    void validate() const {
        if (!(ionMass > 0.0)) throw DomainError("trap: ion mass must be positive");
        if (!(driveFrequency > 0.0)) throw DomainError("trap: drive frequency must be positive");
        const double sum = a[0] + a[1] + a[2];
        const double scale =
            std::max({std::abs(a[0]), std::abs(a[1]), std::abs(a[2]), 1e-30});
        if (std::abs(sum) > 1e-9 * scale) {
            std::ostringstream os;
            os << "trap: static coefficients must satisfy a_x + a_y + a_z = 0 (Laplace); got sum "
               << sum;
            throw DomainError(os.str());
        }
        for (int u = 0; u < 3; ++u) {
            if (mode == IonMode::rf) {
                if (!mathieu_stable(a[u], q[u])) {
                    std::ostringstream os;
                    os << "trap: axis " << "xyz"[u] << " is Mathieu-unstable (a = " << a[u]
                       << ", q = " << q[u] << ", |tr|/2 = "
                       << std::abs(mathieu_trace(a[u], q[u])) / 2.0 << ")";
                    throw StabilityError(os.str());
                }
            } else {
                if (!(a[u] + 0.5 * q[u] * q[u] > 0.0) && !(a[u] == 0.0 && q[u] == 0.0)) {
                    std::ostringstream os;
                    os << "trap: axis " << "xyz"[u]
                       << " has no secular confinement (a + q^2/2 = "
                       << a[u] + 0.5 * q[u] * q[u] << ")";
                    throw StabilityError(os.str());
                }
            }
        }
    }

    // lowest-order secular frequency (Omega/2) sqrt(a + q^2/2)
    double secularFrequency(int axis) const {
        const double arg = a[axis] + 0.5 * q[axis] * q[axis];
        if (arg < 0.0) {
            std::ostringstream os;
            os << "trap: axis " << "xyz"[axis] << " has a + q^2/2 = " << arg << " < 0";
            throw StabilityError(os.str());
        }
        return 0.5 * driveFrequency * std::sqrt(arg);
    }

    double stabilityMargin(int axis) const {
        return std::abs(mathieu_trace(a[axis], q[axis])) / 2.0;
    }

    std::array<bool, 3> mathieuStableAxes() const {
        return {mathieu_stable(a[0], q[0]), mathieu_stable(a[1], q[1]),
                mathieu_stable(a[2], q[2])};
    }

    // Default trap-only step: fine enough that velocity-Verlet's bounded
    // energy oscillation (omega*dt)^2/8 stays below 1e-8.
    double defaultStep() const {
        double wMax = 0.0;
        for (int u = 0; u < 3; ++u) {
            const double arg = a[u] + 0.5 * q[u] * q[u];
            if (arg > 0.0) wMax = std::max(wMax, 0.5 * driveFrequency * std::sqrt(arg));
        }
        if (mode == IonMode::rf) wMax = std::max(wMax, driveFrequency);
        if (wMax <= 0.0) throw StabilityError("trap: no confined axis, cannot pick a step");
        return 2.0 * M_PI / wMax / 30000.0;
    }
};

// Linear-trap parameterization: rf on x/y with opposite sign, static endcaps
// on z compensated equally on x/y.
inline PaulTrapConfig linear_paul_trap(double ionMass, double driveFrequency, double qRadial,
                                       double aAxial, IonMode mode = IonMode::rf) {
    PaulTrapConfig t;
    t.ionMass = ionMass;
    t.driveFrequency = driveFrequency;
    t.q = {qRadial, -qRadial, 0.0};
    t.a = {-0.5 * aAxial, -0.5 * aAxial, aAxial};
    t.mode = mode;
    return t;
}

inline std::array<double, 3> ion_trap_force(const PaulTrapConfig& trap,
                                            const std::array<double, 3>& r, double t) {
    std::array<double, 3> f{};
    const double w2 = trap.driveFrequency * trap.driveFrequency;
    if (trap.mode == IonMode::rf) {
        const double c = std::cos(trap.driveFrequency * t);
        for (int u = 0; u < 3; ++u)
            f[u] = -trap.ionMass * 0.25 * w2 * (trap.a[u] - 2.0 * trap.q[u] * c) * r[u];
    } else {
        for (int u = 0; u < 3; ++u) {
            const double w = trap.secularFrequency(u);
            f[u] = -trap.ionMass * w * w * r[u];
        }
    }
    return f;
}

// Trap potential energy consistent with how each mode is scored. In secular
// mode it is the full harmonic well. In rf mode only the static (a-term)
// part counts: the q-term pseudo-potential energy lives in the micromotion
// kinetic energy, which the velocity already carries.
inline double ion_trap_potential(const PaulTrapConfig& trap, const std::array<double, 3>& r) {
    double u = 0.0;
    if (trap.mode == IonMode::rf) {
        const double w2 = trap.driveFrequency * trap.driveFrequency;
        for (int k = 0; k < 3; ++k) u += 0.125 * trap.ionMass * w2 * trap.a[k] * r[k] * r[k];
    } else {
        for (int k = 0; k < 3; ++k) {
            const double w = trap.secularFrequency(k);
            u += 0.5 * trap.ionMass * w * w * r[k] * r[k];
        }
    }
    return u;
}

struct IonState {
    std::array<double, 3> r{0.0, 0.0, 0.0};
    std::array<double, 3> v{0.0, 0.0, 0.0};
};

inline double ion_kinetic_energy(const PaulTrapConfig& trap, const IonState& s) {
    return 0.5 * trap.ionMass * (s.v[0] * s.v[0] + s.v[1] * s.v[1] + s.v[2] * s.v[2]);
}

inline double ion_energy(const PaulTrapConfig& trap, const IonState& s) {
    return ion_kinetic_energy(trap, s) + ion_trap_potential(trap, s.r);
}

// One velocity-Verlet step under the trap force alone; `t` is the time at the
// start of the step.
inline void step_ion_verlet(const PaulTrapConfig& trap, IonState& s, double t, double dt) {
    auto f0 = ion_trap_force(trap, s.r, t);
    for (int u = 0; u < 3; ++u) s.v[u] += 0.5 * dt * f0[u] / trap.ionMass;
    for (int u = 0; u < 3; ++u) s.r[u] += dt * s.v[u];
    auto f1 = ion_trap_force(trap, s.r, t + dt);
    for (int u = 0; u < 3; ++u) s.v[u] += 0.5 * dt * f1[u] / trap.ionMass;
}

inline void evolve_ion(const PaulTrapConfig& trap, IonState& s, double t0, double dt, long nSteps,
                       const std::function<void(long, double, const IonState&)>& observer = {}) {
    if (observer) observer(0, t0, s);
    for (long i = 0; i < nSteps; ++i) {
        step_ion_verlet(trap, s, t0 + i * dt, dt);
        if (observer) observer(i + 1, t0 + (i + 1) * dt, s);
    }
}

// Transverse harmonic guide seen by the atom.
struct WaveguideConfig {
    double atomMass = 0.0;
    double omegaPerp = 0.0;

    void validate() const {
        if (!(atomMass > 0.0)) throw DomainError("waveguide: atom mass must be positive");
        if (!(omegaPerp > 0.0)) throw DomainError("waveguide: omega_perp must be positive");
    }
    // harmonic-oscillator length, the unit every ratio in the outputs refers to
    double aPerp() const { return 1.0 / std::sqrt(atomMass * omegaPerp); }
    double potential(double transverse2) const {
        return 0.5 * atomMass * omegaPerp * omegaPerp * transverse2;
    }
};

}  // namespace qqc
