#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "qqc/errors.hpp"
#include "qqc/fftw.hpp"

namespace qqc {

// Wavefunction storage layouts. cylindrical2d holds psi(rho, z) for an
// axially symmetric problem (ion pinned on the axis); planar2d holds
// psi(x, z) with the y motion frozen in its ground mode; cartesian3d is the
// full psi(x, y, z).
enum class GridMode { cylindrical2d, planar2d, cartesian3d };

inline GridMode parse_grid_mode(const std::string& s) {
    if (s == "cylindrical2d") return GridMode::cylindrical2d;
    if (s == "planar2d") return GridMode::planar2d;
    if (s == "cartesian3d") return GridMode::cartesian3d;
    throw ConfigError("grid mode must be cylindrical2d|planar2d|cartesian3d, got '" + s + "'");
}
inline const char* to_string(GridMode m) {
    switch (m) {
        case GridMode::cylindrical2d: return "cylindrical2d";
        case GridMode::planar2d: return "planar2d";
        default: return "cartesian3d";
    }
}

// One spatial axis, cell-centered: faces f_0..f_n, centers midway.
struct AxisMesh {
    std::vector<double> face;
    std::vector<double> center;

    int n() const { return static_cast<int>(center.size()); }
    double width(int i) const { return face[i + 1] - face[i]; }
    void finalize() {
        center.resize(face.size() - 1);
        for (std::size_t i = 0; i + 1 < face.size(); ++i)
            center[i] = 0.5 * (face[i] + face[i + 1]);
    }
};

// Symmetric uniform axis on [-half, half]; cell centers avoid 0 and come in
// exact +/- pairs, which keeps parity checks at machine precision.
inline AxisMesh uniform_axis(int n, double half) {
    if (n < 2 || !(half > 0.0)) throw SetupError("grid: bad uniform axis parameters");
    AxisMesh m;
    const double d = 2.0 * half / n;
    m.face.resize(n + 1);
    for (int i = 0; i <= n; ++i) m.face[i] = (i - 0.5 * n) * d;
    m.finalize();
    return m;
}

// Radial axis from 0 to rhoMax: a uniformly fine inner zone (resolving the
// interaction core), then geometrically growing cells capped at coarseStep.
inline AxisMesh graded_radial_axis(double rhoMax, double fineExtent, double fineStep,
                                   double growth, double coarseStep) {
    if (!(rhoMax > 0.0) || !(fineStep > 0.0) || !(growth >= 1.0) || !(coarseStep >= fineStep))
        throw SetupError("grid: bad graded radial parameters");
    AxisMesh m;
    m.face.push_back(0.0);
    double h = fineStep;
    while (m.face.back() + 0.5 * h < rhoMax) {
        m.face.push_back(m.face.back() + h);
        if (m.face.back() >= fineExtent) h = std::min(h * growth, coarseStep);
        if (m.face.size() > 100000) throw SetupError("grid: radial mesh did not terminate");
    }
    m.face.back() = rhoMax;
    if (m.face.size() < 3) throw SetupError("grid: radial mesh too small");
    m.finalize();
    return m;
}

inline AxisMesh uniform_radial_axis(int n, double rhoMax) {
    if (n < 2 || !(rhoMax > 0.0)) throw SetupError("grid: bad radial parameters");
    AxisMesh m;
    m.face.resize(n + 1);
    for (int i = 0; i <= n; ++i) m.face[i] = rhoMax * i / n;
    m.finalize();
    return m;
}

// Assembled computational grid. Data layout: the z axis is the contiguous
// (FFT) axis; transverse points are rows. Row index: cylindrical j = rho
// cell; planar j = x cell; cartesian j = jx*ny + jy.
struct Grid {
    GridMode mode = GridMode::planar2d;
    AxisMesh z;    // always uniform (spectral axis)
    AxisMesh x;    // planar2d / cartesian3d (spectral)
    AxisMesh y;    // cartesian3d (spectral)
    AxisMesh rho;  // cylindrical2d (finite-volume, possibly graded)

    std::vector<double> kz, kx, ky;   // DFT wavenumbers for the spectral axes
    std::vector<double> rowWeight;    // transverse measure per row
    int nz = 0;
    int rows = 0;

    double dz() const { return z.width(0); }
    std::size_t size() const { return static_cast<std::size_t>(rows) * nz; }
    std::size_t index(int row, int iz) const { return static_cast<std::size_t>(row) * nz + iz; }
    double cellVolume(int row) const { return rowWeight[row] * dz(); }

    // transverse squared distance of a row's cell from a point (x0, y0);
    // cylindrical rows are rings, where the ion must sit on the axis
    double rowTransverse2(int row, double x0, double y0) const {
        switch (mode) {
            case GridMode::cylindrical2d: {
                const double r = rho.center[row];
                return r * r;  // caller guarantees x0 = y0 = 0
            }
            case GridMode::planar2d: {
                const double ddx = x.center[row] - x0;
                return ddx * ddx + y0 * y0;
            }
            default: {
                const double ddx = x.center[row / y.n()] - x0;
                const double ddy = y.center[row % y.n()] - y0;
                return ddx * ddx + ddy * ddy;
            }
        }
    }
    // transverse distance from the waveguide axis (for the guide potential)
    double rowGuide2(int row) const { return rowTransverse2(row, 0.0, 0.0); }
};

namespace detail {
inline std::vector<double> dft_wavenumbers(int n, double length) {
    std::vector<double> k(n);
    for (int i = 0; i < n; ++i) {
        const int m = i < (n + 1) / 2 ? i : i - n;
        k[i] = 2.0 * M_PI * m / length;
    }
    return k;
}
}  // namespace detail

struct GridSpec {
    GridMode mode = GridMode::planar2d;
    int nz = 0;
    double zHalf = 0.0;
    int nx = 0, ny = 0;
    double xHalf = 0.0, yHalf = 0.0;
    // cylindrical radial mesh: if fineStep > 0, graded; else uniform with nRho cells
    int nRho = 0;
    double rhoMax = 0.0;
    double rhoFineExtent = 0.0, rhoFineStep = 0.0, rhoGrowth = 1.05, rhoCoarseStep = 0.0;
    int maxRows = 0;  // optional cap asserted after mesh construction
};

inline std::shared_ptr<const Grid> build_grid(const GridSpec& s) {
    auto g = std::make_shared<Grid>();
    g->mode = s.mode;
    g->z = uniform_axis(s.nz, s.zHalf);
    g->nz = s.nz;
    g->kz = detail::dft_wavenumbers(s.nz, 2.0 * s.zHalf);
    switch (s.mode) {
        case GridMode::cylindrical2d:
            g->rho = s.rhoFineStep > 0.0
                         ? graded_radial_axis(s.rhoMax, s.rhoFineExtent, s.rhoFineStep,
                                              s.rhoGrowth, s.rhoCoarseStep)
                         : uniform_radial_axis(s.nRho, s.rhoMax);
            g->rows = g->rho.n();
            g->rowWeight.resize(g->rows);
            for (int j = 0; j < g->rows; ++j)
                g->rowWeight[j] = 2.0 * M_PI * g->rho.center[j] * g->rho.width(j);
            break;
        case GridMode::planar2d:
            g->x = uniform_axis(s.nx, s.xHalf);
            g->kx = detail::dft_wavenumbers(s.nx, 2.0 * s.xHalf);
            g->rows = s.nx;
            g->rowWeight.assign(g->rows, g->x.width(0));
            break;
        case GridMode::cartesian3d:
            g->x = uniform_axis(s.nx, s.xHalf);
            g->y = uniform_axis(s.ny, s.yHalf);
            g->kx = detail::dft_wavenumbers(s.nx, 2.0 * s.xHalf);
            g->ky = detail::dft_wavenumbers(s.ny, 2.0 * s.yHalf);
            g->rows = s.nx * s.ny;
            g->rowWeight.assign(g->rows, g->x.width(0) * g->y.width(0));
            break;
    }
    if (s.maxRows > 0 && g->rows > s.maxRows)
        throw SetupError("grid: transverse mesh has " + std::to_string(g->rows) +
                         " rows, cap is " + std::to_string(s.maxRows));
    return g;
}

// The atom's complex amplitude field plus the absorbed-flux ledger.
struct AtomField {
    std::shared_ptr<const Grid> grid;
    fft::Buffer psi;
    double time = 0.0;
    double absorbed = 0.0;       // cumulative probability removed by the absorber
    double absorbedLeft = 0.0;   // split by z side, diagnostic
    double absorbedRight = 0.0;

    explicit AtomField(std::shared_ptr<const Grid> g) : grid(std::move(g)), psi(grid->size()) {}

    double norm() const {
        const Grid& g = *grid;
        double acc = 0.0;
        for (int row = 0; row < g.rows; ++row) {
            double rowAcc = 0.0;
            const std::complex<double>* p = psi.data() + g.index(row, 0);
            for (int i = 0; i < g.nz; ++i) rowAcc += std::norm(p[i]);
            acc += rowAcc * g.rowWeight[row];
        }
        return acc * g.dz();
    }

    void scale(double s) {
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] *= s;
    }

    double centroidZ() const {
        const Grid& g = *grid;
        double num = 0.0, den = 0.0;
        for (int row = 0; row < g.rows; ++row) {
            double nrow = 0.0, drow = 0.0;
            const std::complex<double>* p = psi.data() + g.index(row, 0);
            for (int i = 0; i < g.nz; ++i) {
                const double d = std::norm(p[i]);
                nrow += d * g.z.center[i];
                drow += d;
            }
            num += nrow * g.rowWeight[row];
            den += drow * g.rowWeight[row];
        }
        if (den == 0.0) throw AnalysisError("centroid of a null field");
        return num / den;
    }

    // standard deviation of |psi|^2 along z
    double widthZ() const {
        const Grid& g = *grid;
        const double zc = centroidZ();
        double num = 0.0, den = 0.0;
        for (int row = 0; row < g.rows; ++row) {
            double nrow = 0.0, drow = 0.0;
            const std::complex<double>* p = psi.data() + g.index(row, 0);
            for (int i = 0; i < g.nz; ++i) {
                const double d = std::norm(p[i]);
                const double dzc = g.z.center[i] - zc;
                nrow += d * dzc * dzc;
                drow += d;
            }
            num += nrow * g.rowWeight[row];
            den += drow * g.rowWeight[row];
        }
        return std::sqrt(num / den);
    }

    AtomField clone() const {
        AtomField c(grid);
        for (std::size_t i = 0; i < psi.size(); ++i) c.psi[i] = psi[i];
        c.time = time;
        c.absorbed = absorbed;
        c.absorbedLeft = absorbedLeft;
        c.absorbedRight = absorbedRight;
        return c;
    }
};

// Radial kinetic operator in flux form on the (possibly graded) rho mesh:
//   (L psi)_j = [ f_{j+1} (psi_{j+1}-psi_j)/d_{j+1} - f_j (psi_j-psi_{j-1})/d_j ]
//               / (rho_j w_j)
// with f_j the face radii (f_0 = 0 enforces regularity on the axis) and a
// hard wall beyond rhoMax. Symmetric under the rho_j w_j measure, so the
// Cayley step built on it is exactly unitary.
struct RadialLaplacian {
    std::vector<double> sub, diag, sup;  // tridiagonal action of L

    explicit RadialLaplacian(const AxisMesh& rho) {
        const int n = rho.n();
        sub.assign(n, 0.0);
        diag.assign(n, 0.0);
        sup.assign(n, 0.0);
        for (int j = 0; j < n; ++j) {
            const double w = rho.width(j);
            const double meas = rho.center[j] * w;
            const double fLo = rho.face[j];
            const double fHi = rho.face[j + 1];
            if (j > 0) {
                const double d = rho.center[j] - rho.center[j - 1];
                sub[j] = fLo / d / meas;
                diag[j] -= fLo / d / meas;
            }
            if (j + 1 < n) {
                const double d = rho.center[j + 1] - rho.center[j];
                sup[j] = fHi / d / meas;
                diag[j] -= fHi / d / meas;
            } else {
                // Dirichlet ghost at the outer wall
                const double d = fHi - rho.center[j];
                diag[j] -= fHi / d / meas;
            }
        }
    }
};

// Ground transverse mode of the discrete radial Hamiltonian
// H = -(1/2m) L + (m omega^2/2) rho^2 by inverse iteration; matching the
// discrete operator (not the continuum Gaussian) makes the mode an exact
// stationary state of the propagator. Returns the mode (unit norm under the
// radial measure) and its discrete energy.
inline std::pair<std::vector<double>, double> radial_ground_mode(const AxisMesh& rho, double mass,
                                                                 double omega) {
    const int n = rho.n();
    RadialLaplacian L(rho);
    std::vector<double> hsub(n), hdiag(n), hsup(n);
    for (int j = 0; j < n; ++j) {
        const double r = rho.center[j];
        hsub[j] = -L.sub[j] / (2.0 * mass);
        hsup[j] = -L.sup[j] / (2.0 * mass);
        hdiag[j] = -L.diag[j] / (2.0 * mass) + 0.5 * mass * omega * omega * r * r;
    }
    // LU of H (diagonally dominant enough in practice; H is positive definite)
    std::vector<double> cp(n), phi(n, 1.0), tmp(n);
    auto solve = [&](std::vector<double>& v) {
        tmp = v;
        double den = hdiag[0];
        cp[0] = hsup[0] / den;
        tmp[0] /= den;
        for (int j = 1; j < n; ++j) {
            den = hdiag[j] - hsub[j] * cp[j - 1];
            cp[j] = hsup[j] / den;
            tmp[j] = (tmp[j] - hsub[j] * tmp[j - 1]) / den;
        }
        v[n - 1] = tmp[n - 1];
        for (int j = n - 2; j >= 0; --j) v[j] = tmp[j] - cp[j] * v[j + 1];
    };
    auto normalize = [&](std::vector<double>& v) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += v[j] * v[j] * rho.center[j] * rho.width(j);
        s = std::sqrt(s * 2.0 * M_PI);
        for (double& x : v) x /= s;
        return s;
    };
    normalize(phi);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> prev = phi;
        solve(phi);
        normalize(phi);
        double change = 0.0;
        for (int j = 0; j < n; ++j) change = std::max(change, std::abs(phi[j] - prev[j]));
        if (change < 1e-14) break;
    }
    // Rayleigh quotient
    double e = 0.0;
    for (int j = 0; j < n; ++j) {
        double hphi = hdiag[j] * phi[j];
        if (j > 0) hphi += hsub[j] * phi[j - 1];
        if (j + 1 < n) hphi += hsup[j] * phi[j + 1];
        e += phi[j] * hphi * rho.center[j] * rho.width(j);
    }
    return {phi, e * 2.0 * M_PI};
}

}  // namespace qqc
