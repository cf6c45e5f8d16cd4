#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "qqc/errors.hpp"
#include "qqc/units.hpp"

namespace qqc {

enum class PotentialKind { polarization, vanDerWaals };

// Regularized central interaction between the collision partners:
//   polarization:  V(r) = -C4 / (r^2 + b^2)^2
//   vanDerWaals:   V(r) = -C6 / (r^2 + b^2)^3
// b > 0 is the short-range knob; sweeping it moves the s-wave scattering
// length over the full real line, one bound-state branch at a time.
struct InteractionModel {
    PotentialKind kind = PotentialKind::polarization;
    double longRangeCoefficient = 0.0;  // C4 or C6, atomic units
    double regularizationLength = 0.0;  // b
    double reducedMass = 0.0;           // mu = mA*mI/(mA+mI)

    void validate() const {
        if (!(longRangeCoefficient > 0.0))
            throw DomainError("interaction: long-range coefficient must be positive");
        if (!(regularizationLength > 0.0))
            throw DomainError("interaction: regularization length must be positive");
        if (!(reducedMass > 0.0)) throw DomainError("interaction: reduced mass must be positive");
    }

    // Length scale of the long-range tail: sqrt(2 mu C4) for -C4/r^4,
    // (2 mu C6)^(1/4) for -C6/r^6.
    double tailScale() const {
        const double x = 2.0 * reducedMass * longRangeCoefficient;
        return kind == PotentialKind::polarization ? std::sqrt(x) : std::pow(x, 0.25);
    }
};

inline double evaluate(const InteractionModel& m, double r) {
    const double s = r * r + m.regularizationLength * m.regularizationLength;
    if (m.kind == PotentialKind::polarization) return -m.longRangeCoefficient / (s * s);
    return -m.longRangeCoefficient / (s * s * s);
}

// V evaluated from the squared separation; grid loops use this to avoid sqrt.
inline double evaluate_d2(const InteractionModel& m, double d2) {
    const double s = d2 + m.regularizationLength * m.regularizationLength;
    if (m.kind == PotentialKind::polarization) return -m.longRangeCoefficient / (s * s);
    return -m.longRangeCoefficient / (s * s * s);
}

// V'(d)/d from the squared separation (finite at d = 0). The mean-field force
// on the classical partner is  F = integral |psi|^2 * (V'(d)/d) * (r - r_ion) dV.
inline double gradient_factor_d2(const InteractionModel& m, double d2) {
    const double s = d2 + m.regularizationLength * m.regularizationLength;
    if (m.kind == PotentialKind::polarization) return 4.0 * m.longRangeCoefficient / (s * s * s);
    return 6.0 * m.longRangeCoefficient / (s * s * s * s);
}

struct ScatteringLengthResult {
    double aS = 0.0;
    int nBoundStates = 0;
    bool converged = false;
    double matchRadius = 0.0;
    double refinementDelta = 0.0;  // |a(refined) - a(coarse)|, diagnostic
};

namespace detail {

// Gauss-Legendre nodes/weights on [-1,1], computed once per order by Newton
// iteration on the Legendre recurrence.
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.assign(n, 0.0);
    w.assign(n, 0.0);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) * z * p1 - j * p2) / (j + 1);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
}

// Tail contribution to the scattering length beyond rMatch, from the
// variable-phase equation da/dr = 2 mu V(r) (r - a)^2 with a held fixed.
// Substituting s = 1/r makes the integrand regular at infinity.
template <class Potential>
double tail_correction(const Potential& V, double mu, double rMatch, double a) {
    static thread_local std::vector<double> gx, gw;
    if (gx.empty()) gauss_legendre(48, gx, gw);
    const double sMax = 1.0 / rMatch;
    double acc = 0.0;
    for (std::size_t i = 0; i < gx.size(); ++i) {
        const double s = 0.5 * sMax * (gx[i] + 1.0);
        if (s <= 0.0) continue;
        const double r = 1.0 / s;
        const double dr = r - a;
        acc += gw[i] * V(r) * dr * dr / (s * s);
    }
    acc *= 0.5 * sMax;
    return 2.0 * mu * acc;
}

struct RadialIntegration {
    double u = 0.0;
    double uPrime = 0.0;
    int nodes = 0;
    double r = 0.0;
};

// RK4 on u'' = 2 mu V(r) u over [r0, r1] with a fixed step chosen to land on
// r1 exactly. Counts sign changes of u.
template <class Potential>
void integrate_segment(const Potential& V, double mu, double r0, double r1, double h,
                       RadialIntegration& st) {
    const int n = std::max(1, static_cast<int>(std::ceil((r1 - r0) / h)));
    const double step = (r1 - r0) / n;
    double u = st.u, v = st.uPrime;
    double r = r0;
    auto q = [&](double rr) { return 2.0 * mu * V(rr); };
    for (int i = 0; i < n; ++i) {
        const double uPrev = u;
        const double k1u = v, k1v = q(r) * u;
        const double k2u = v + 0.5 * step * k1v, k2v = q(r + 0.5 * step) * (u + 0.5 * step * k1u);
        const double k3u = v + 0.5 * step * k2v, k3v = q(r + 0.5 * step) * (u + 0.5 * step * k2u);
        const double k4u = v + step * k3v, k4v = q(r + step) * (u + step * k3u);
        u += step / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += step / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        r = r0 + (i + 1) * step;
        if (uPrev != 0.0 && u != 0.0 && ((uPrev < 0.0) != (u < 0.0))) ++st.nodes;
        // keep the magnitude in range; u is defined up to overall scale
        const double mag = std::max(std::abs(u), std::abs(v));
        if (mag > 1e200) {
            u /= mag;
            v /= mag;
        }
    }
    st.u = u;
    st.uPrime = v;
    st.r = r1;
}

}  // namespace detail

struct RadialSolveOptions {
    double stepControl = 0.02;   // max local phase advance k*h per RK4 step
    double volTolerance = 1e-12; // match where |V| < volTolerance * kinetic scale
    double innerRadius = 0.0;    // hard-core start: u(innerRadius) = 0
    double lengthScale = 0.0;    // 0 = derive from the potential
    double energyScale = 0.0;    // 0 = derive from the length scale
    std::vector<double> breakpoints;  // discontinuities of test potentials
    double maxRadius = 0.0;      // 0 = derive from volTolerance
    bool refine = true;          // run the (h/2, 2 rMatch) check
    double stabilityTol = 1e-6;  // relative stability demanded of the refinement
};

// Zero-energy s-wave solve of u'' = 2 mu V(r) u, u(0) = 0, for an arbitrary
// radial potential. The scattering length comes from the asymptotic linear
// form u ~ (r - aS) at the match radius, plus the variable-phase tail
// integral of whatever potential remains beyond it. Bound states are counted
// from the nodes of u, including the one the asymptote still has ahead of the
// match radius when u and u' differ in sign there.
template <class Potential>
ScatteringLengthResult scattering_length_radial(const Potential& V, double mu,
                                                const RadialSolveOptions& opt = {}) {
    if (!(mu > 0.0)) throw DomainError("scattering length: reduced mass must be positive");

    const double ell = opt.lengthScale > 0.0 ? opt.lengthScale : 1.0;
    const double eScale = opt.energyScale > 0.0 ? opt.energyScale : 1.0 / (2.0 * mu * ell * ell);

    // Outermost radius where the potential still matters.
    double rMatch = opt.maxRadius;
    if (rMatch <= 0.0) {
        rMatch = 2.0 * ell;
        const double cap = 2e6 * ell;
        while (rMatch < cap && std::abs(V(rMatch)) > opt.volTolerance * eScale) rMatch *= 1.25;
    }
    rMatch = std::max(rMatch, opt.innerRadius + 2.0 * ell);

    auto solve = [&](double stepControl, double rM) {
        detail::RadialIntegration st;
        const double r0 = opt.innerRadius;
        st.r = r0;
        st.u = 0.0;
        st.uPrime = 1.0;

        // segment boundaries: declared breakpoints, then geometric zones so the
        // step can relax as the local wavenumber drops
        std::vector<double> bounds;
        for (double b : opt.breakpoints)
            if (b > r0 && b < rM) bounds.push_back(b);
        double g = std::max(8.0 * ell, r0 + 2.0 * ell);
        while (g < rM) {
            bounds.push_back(g);
            g *= 2.0;
        }
        bounds.push_back(rM);
        std::sort(bounds.begin(), bounds.end());
        bounds.erase(std::unique(bounds.begin(), bounds.end()), bounds.end());

        double left = r0;
        bool first = true;
        const double edgeEps = 1e-9 * ell;
        for (double right : bounds) {
            if (right <= left) continue;
            // stage evaluations stay strictly inside the segment so that a
            // declared discontinuity at either edge is sampled one-sided
            const double seglo = left + edgeEps, seghi = right - edgeEps;
            auto Vseg = [&](double rr) { return V(std::min(std::max(rr, seglo), seghi)); };
            // local wavenumber bound over the segment (attractive potentials
            // decay outward; probe both ends and the midpoint)
            double qmax = 0.0;
            for (double rr : {seglo, 0.5 * (left + right), seghi})
                qmax = std::max(qmax, std::abs(2.0 * mu * V(rr)));
            const double k = std::sqrt(qmax);
            double h = stepControl / std::max(k, 1.0 / ell);
            h = std::min(h, (right - left) / 16.0);
            if (first) {
                // start the integration one step in with the Taylor expansion
                // u(h) = h + h^3/6 * q(h/2), accurate to O(h^5)
                const double hs = std::min(h, (right - left) / 4.0);
                st.u = hs + hs * hs * hs / 6.0 * (2.0 * mu * V(left + 0.5 * hs));
                st.uPrime = 1.0 + hs * hs / 2.0 * (2.0 * mu * V(left + 0.5 * hs));
                left += hs;
                first = false;
            }
            detail::integrate_segment(Vseg, mu, left, right, h, st);
            left = right;
        }

        ScatteringLengthResult res;
        res.matchRadius = rM;
        res.nBoundStates = st.nodes + ((st.u * st.uPrime < 0.0) ? 1 : 0);
        if (st.uPrime == 0.0) {
            res.aS = std::numeric_limits<double>::infinity();
            return res;
        }
        double a = rM - st.u / st.uPrime;
        // fold in the residual tail, iterated to self-consistency
        for (int it = 0; it < 3; ++it) a = (rM - st.u / st.uPrime) + detail::tail_correction(V, mu, rM, a);
        res.aS = a;
        return res;
    };

    ScatteringLengthResult coarse = solve(opt.stepControl, rMatch);
    if (!opt.refine) {
        coarse.converged = true;
        return coarse;
    }
    ScatteringLengthResult fine = solve(0.5 * opt.stepControl, 2.0 * rMatch);
    fine.refinementDelta = std::abs(fine.aS - coarse.aS);
    fine.converged = std::isfinite(fine.aS) &&
                     fine.refinementDelta <= opt.stabilityTol * std::max(std::abs(fine.aS), ell) &&
                     fine.nBoundStates == coarse.nBoundStates;
    return fine;
}

inline RadialSolveOptions default_options(const InteractionModel& m) {
    RadialSolveOptions opt;
    opt.lengthScale = std::max(m.regularizationLength, m.tailScale());
    return opt;
}

// Free-space s-wave scattering length of the model, with bound-state count.
inline ScatteringLengthResult scattering_length(const InteractionModel& model) {
    model.validate();
    auto V = [&model](double r) { return evaluate(model, r); };
    return scattering_length_radial(V, model.reducedMass, default_options(model));
}

// Adjust the regularization length b so the model's free-space scattering
// length equals aPerp / targetRatio, staying on the current bound-state
// branch. Bracketed root finding; throws TuningError when no bracket exists
// on the branch.
inline InteractionModel tune_regularization(const InteractionModel& model, double targetRatio,
                                            double aPerp) {
    model.validate();
    if (targetRatio == 0.0) throw DomainError("tune_regularization: target ratio must be nonzero");
    const double target = aPerp / targetRatio;

    auto quick = [&](double b) {
        InteractionModel m = model;
        m.regularizationLength = b;
        auto opt = default_options(m);
        opt.refine = false;
        auto r = scattering_length_radial([&m](double rr) { return evaluate(m, rr); },
                                          m.reducedMass, opt);
        return r;
    };

    const double b0 = model.regularizationLength;
    auto base = quick(b0);
    const int branch = base.nBoundStates;
    auto f = [&](double b, bool& onBranch) {
        auto r = quick(b);
        onBranch = (r.nBoundStates == branch);
        return r.aS - target;
    };

    bool ok = true;
    double fLo = f(b0, ok), fHi = fLo;
    double bLo = b0, bHi = b0;
    double aMin = base.aS, aMax = base.aS;
    const double growth = 1.08;
    // walk outward in b both ways until the sign flips or the branch ends
    for (int dir = 0; dir < 2 && fLo * fHi > 0.0; ++dir) {
        double b = b0;
        double fPrev = fLo;
        for (int i = 0; i < 160; ++i) {
            b = dir == 0 ? b / growth : b * growth;
            bool on = true;
            double fb = f(b, on);
            if (!on) break;  // crossed a bound-state threshold
            aMin = std::min(aMin, fb + target);
            aMax = std::max(aMax, fb + target);
            if (fPrev * fb <= 0.0) {
                bLo = dir == 0 ? b : (b / growth);
                bHi = dir == 0 ? b * growth : b;
                fLo = fPrev;
                fHi = fb;
                if (dir == 0) std::swap(fLo, fHi);
                break;
            }
            fPrev = fb;
        }
        if (fLo * fHi <= 0.0 && bLo != bHi) break;
    }
    if (fLo * fHi > 0.0 || bLo == bHi) {
        std::ostringstream os;
        os << "tune_regularization: no bracket for aS = " << target << " on branch with "
           << branch << " bound state(s); scanned aS in [" << aMin << ", " << aMax << "]";
        throw TuningError(os.str());
    }

    // bisection with secant acceleration on [bLo, bHi]
    double lo = std::min(bLo, bHi), hi = std::max(bLo, bHi);
    bool dummy = true;
    double flo = f(lo, dummy), fhi = f(hi, dummy);
    if (flo * fhi > 0.0) throw TuningError("tune_regularization: bracket lost");
    double bBest = lo, fBest = flo;
    for (int i = 0; i < 200; ++i) {
        double mid = (i % 3 == 2 && fhi != flo) ? hi - fhi * (hi - lo) / (fhi - flo)
                                                : 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi)) mid = 0.5 * (lo + hi);
        double fm = f(mid, dummy);
        if (std::abs(fm) < std::abs(fBest)) {
            fBest = fm;
            bBest = mid;
        }
        if (std::abs(fm) <= 1e-9 * std::max(std::abs(target), 1e-30)) break;
        if (flo * fm <= 0.0) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
        if (hi - lo <= 1e-15 * hi) break;
    }

    // polish against the refined solver, which carries its own small h-bias
    // relative to the quick one
    auto refined = [&](double b) {
        InteractionModel m = model;
        m.regularizationLength = b;
        return scattering_length(m);
    };
    const double gTol = 1e-9 * std::max(std::abs(target), 1e-30);
    double b1 = bBest, g1 = refined(b1).aS - target;
    double b2 = bBest * (1.0 + 1e-5), g2 = refined(b2).aS - target;
    double bPolished = std::abs(g1) < std::abs(g2) ? b1 : b2;
    double gPolished = std::abs(g1) < std::abs(g2) ? g1 : g2;
    for (int i = 0; i < 12 && std::abs(gPolished) > gTol && g1 != g2; ++i) {
        double bn = b2 - g2 * (b2 - b1) / (g2 - g1);
        if (!(bn > 0.2 * lo && bn < 5.0 * hi)) bn = 0.5 * (b1 + b2);
        double gn = refined(bn).aS - target;
        b1 = b2;
        g1 = g2;
        b2 = bn;
        g2 = gn;
        if (std::abs(gn) < std::abs(gPolished)) {
            bPolished = bn;
            gPolished = gn;
        }
    }

    InteractionModel tuned = model;
    tuned.regularizationLength = bPolished;
    auto check = scattering_length(tuned);
    if (check.nBoundStates != branch)
        throw TuningError("tune_regularization: solution drifted off the bound-state branch");
    if (std::abs(check.aS - target) > 1e-8 * std::max(std::abs(target), 1e-30)) {
        std::ostringstream os;
        os << "tune_regularization: refined aS " << check.aS << " misses target " << target;
        throw TuningError(os.str());
    }
    return tuned;
}

}  // namespace qqc
