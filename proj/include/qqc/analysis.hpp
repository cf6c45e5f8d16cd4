#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <string>
#include <vector>

#include "qqc/dynamics.hpp"
#include "qqc/errors.hpp"
#include "qqc/grid.hpp"
#include "qqc/reference.hpp"

namespace qqc {

// z-channel wavefunction after projecting onto the transverse ground mode
struct ZProjection {
    std::vector<std::complex<double>> phi;  // one value per z cell
    double time = 0.0;
    double leakage = 0.0;  // norm fraction outside the ground channel
};

inline ZProjection project_ground_mode(CoupledSim& sim) {
    const Grid& g = *sim.field().grid;
    const std::vector<double>& mode = sim.radialGroundMode();
    ZProjection out;
    out.time = sim.time();
    out.phi.assign(g.nz, {0.0, 0.0});
    for (int row = 0; row < g.rows; ++row) {
        const double w = g.rowWeight[row] * mode[row];
        const std::complex<double>* p = sim.field().psi.data() + g.index(row, 0);
        for (int i = 0; i < g.nz; ++i) out.phi[i] += w * p[i];
    }
    double chan = 0.0;
    for (const auto& c : out.phi) chan += std::norm(c);
    chan *= g.dz();
    const double total = sim.field().norm();
    out.leakage = total > 0.0 ? std::max(0.0, 1.0 - chan / total) : 0.0;
    return out;
}

// quadrature transform at an arbitrary wavenumber; exact (leak-free) when k
// is an integer multiple of 2 pi / L
inline std::complex<double> dft_at(const Grid& g, const std::vector<std::complex<double>>& phi,
                                   double k) {
    std::complex<double> acc{0.0, 0.0};
    for (int i = 0; i < g.nz; ++i) acc += phi[i] * std::polar(1.0, -k * g.z.center[i]);
    return acc * g.dz();
}

struct AmplitudeRecord {
    double k = 0.0;
    std::complex<double> f{0.0, 0.0};          // reflection amplitude f+(k)
    std::complex<double> transmission{0.0, 0.0};  // 1 + f+(k) measured independently
    double T = 0.0, R = 0.0;
    double unitarityResidual = 0.0;  // |T + R - 1|
    double leakage = 0.0;
    bool flagged = false;
    std::string flag;
};

inline constexpr double kUnitarityTol = 2e-3;
inline constexpr double kLeakageTol = 1e-2;

// Amplitudes from one interacting snapshot and its free-reference twin,
// taken at the same time on the same grid:
//   f(k)  = [phi(-k) - phi_free(-k)] / phi_free(+k)
//   t(k)  =  phi(+k) / phi_free(+k)
// Identical free evolution cancels dispersion and packet-shape phases; the
// subtraction removes the packet's own -k tail, which never interacts.
inline AmplitudeRecord extract_amplitude(const Grid& g, const ZProjection& hit,
                                         const ZProjection& free0, double k) {
    if (!(k > 0.0)) throw AnalysisError("extract_amplitude: need k > 0");
    if (std::abs(hit.time - free0.time) > 1e-9)
        throw AnalysisError("extract_amplitude: snapshots taken at different times");
    if (hit.phi.size() != free0.phi.size() ||
        hit.phi.size() != static_cast<std::size_t>(g.nz))
        throw AnalysisError("extract_amplitude: snapshot/grid size mismatch");

    const std::complex<double> refPlus = dft_at(g, free0.phi, k);
    if (std::abs(refPlus) < 1e-12)
        throw AnalysisError("extract_amplitude: reference has no weight at requested k");
    const std::complex<double> refMinus = dft_at(g, free0.phi, -k);
    const std::complex<double> hitPlus = dft_at(g, hit.phi, k);
    const std::complex<double> hitMinus = dft_at(g, hit.phi, -k);

    AmplitudeRecord rec;
    rec.k = k;
    rec.f = (hitMinus - refMinus) / refPlus;
    rec.transmission = hitPlus / refPlus;
    rec.R = std::norm(rec.f);
    rec.T = std::norm(rec.transmission);
    rec.unitarityResidual = std::abs(rec.T + rec.R - 1.0);
    rec.leakage = hit.leakage;

    // the two routes must agree: 1 + f should match the measured transmission
    const double mismatch = std::abs(rec.transmission - (1.0 + rec.f));
    if (rec.unitarityResidual > kUnitarityTol) {
        rec.flagged = true;
        rec.flag = "unitarity";
    } else if (rec.leakage > kLeakageTol) {
        rec.flagged = true;
        rec.flag = "leakage";
    } else if (mismatch > 10.0 * kUnitarityTol) {
        rec.flagged = true;
        rec.flag = "route-mismatch";
    }
    return rec;
}

struct G1DRecord {
    double g1d = 0.0;
    bool pole = false;
    double residual = 0.0;  // worst relative misfit of the k->0 extrapolation
    std::vector<double> sampleK;
    std::vector<double> sampleG;
    bool flagged = false;
    std::string flag;
};

inline constexpr double kPoleImTol = 1e-3;
inline constexpr double kPoleModulus = 0.99;
inline constexpr double kFitResidualTol = 0.05;

// Effective 1D coupling from low-k amplitudes: per sample
//   g(k) = (hbar^2 k / m) Re f / Im f,
// then a linear-in-k^2 extrapolation to k = 0. Requires at least three
// samples inside k aPerp < 0.2. Near total reflection (|f| -> 1, Im f -> 0)
// the coupling diverges; such input is reported as a pole, not a number.
inline G1DRecord compute_g1d(const std::vector<AmplitudeRecord>& records, double aPerp,
                             double mass) {
    if (!(aPerp > 0.0 && mass > 0.0)) throw AnalysisError("compute_g1d: bad guide parameters");
    std::vector<const AmplitudeRecord*> band;
    for (const auto& r : records)
        if (r.k * aPerp < 0.2) band.push_back(&r);
    if (band.size() < 3)
        throw AnalysisError("compute_g1d: need at least three samples with k aPerp < 0.2");

    G1DRecord out;
    int poles = 0;
    for (const auto* r : band) {
        if (std::abs(r->f) > kPoleModulus && std::abs(r->f.imag()) < kPoleImTol) ++poles;
    }
    if (poles >= static_cast<int>(band.size()) - 1 && poles >= 2) {
        out.pole = true;
        return out;
    }

    for (const auto* r : band) {
        out.sampleK.push_back(r->k);
        if (std::abs(r->f) < 1e-6) {
            out.sampleG.push_back(0.0);  // no measurable scattering: free, g = 0
        } else {
            if (r->f.imag() == 0.0) throw AnalysisError("compute_g1d: sample with Im f = 0");
            out.sampleG.push_back(r->k / mass * r->f.real() / r->f.imag());
        }
        if (r->flagged) {
            out.flagged = true;
            out.flag = r->flag;
        }
    }

    // least squares g(k) = g0 + c k^2
    const std::size_t n = out.sampleK.size();
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = out.sampleK[i] * out.sampleK[i];
        sx += x;
        sy += out.sampleG[i];
        sxx += x * x;
        sxy += x * out.sampleG[i];
    }
    const double det = n * sxx - sx * sx;
    double g0, slope;
    if (std::abs(det) < 1e-300) {
        g0 = sy / n;
        slope = 0.0;
    } else {
        g0 = (sxx * sy - sx * sxy) / det;
        slope = (n * sxy - sx * sy) / det;
    }
    out.g1d = g0;
    double worst = 0.0;
    const double scale = std::max(std::abs(g0), 1e-300);
    for (std::size_t i = 0; i < n; ++i) {
        const double fit = g0 + slope * out.sampleK[i] * out.sampleK[i];
        worst = std::max(worst, std::abs(out.sampleG[i] - fit) / scale);
    }
    out.residual = worst;
    if (worst > kFitResidualTol) {
        out.flagged = true;
        out.flag = "fit-residual";
    }
    return out;
}

inline double olshanii_oracle(double aS, double aPerp, double mass) {
    return ref::olshanii_g1d(aS, aPerp, mass);
}

struct CirResult {
    bool found = false;
    double ratio = 0.0;        // aPerp / aS at the resonance
    double uncertainty = 0.0;  // half the local scan spacing
    int leftIndex = -1;        // bracketing scan indices
};

// Locate the confinement resonance on a scan of (ratio = aPerp/aS, g1D):
// the resonance is the pole of g1D, i.e. the zero crossing of 1/g1D.
// Points flagged as poles contribute 1/g = 0 exactly.
inline CirResult find_cir(const std::vector<double>& ratio, const std::vector<G1DRecord>& g) {
    if (ratio.size() != g.size()) throw AnalysisError("find_cir: size mismatch");
    if (ratio.size() < 2) throw AnalysisError("find_cir: need at least two scan points");
    for (std::size_t i = 1; i < ratio.size(); ++i)
        if (!(ratio[i] > ratio[i - 1]))
            throw AnalysisError("find_cir: scan ratios must be strictly increasing");

    std::vector<double> h(ratio.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i].pole) h[i] = 0.0;
        else if (g[i].g1d == 0.0) h[i] = std::copysign(1e300, 1.0);
        else h[i] = 1.0 / g[i].g1d;
    }

    CirResult out;
    for (std::size_t i = 0; i + 1 < h.size(); ++i) {
        const bool crossing = (h[i] == 0.0) || (h[i] * h[i + 1] < 0.0);
        if (!crossing) continue;
        out.found = true;
        out.leftIndex = static_cast<int>(i);
        if (h[i] == 0.0) {
            out.ratio = ratio[i];
        } else {
            const double w = h[i] / (h[i] - h[i + 1]);
            out.ratio = ratio[i] + w * (ratio[i + 1] - ratio[i]);
        }
        out.uncertainty = 0.5 * (ratio[i + 1] - ratio[i]);
        return out;
    }
    // a pole exactly at the last point
    if (h.back() == 0.0) {
        out.found = true;
        out.leftIndex = static_cast<int>(h.size()) - 2;
        out.ratio = ratio.back();
        out.uncertainty = 0.5 * (ratio.back() - ratio[ratio.size() - 2]);
    }
    return out;
}

}  // namespace qqc
