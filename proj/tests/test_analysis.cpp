#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <complex>
#include <vector>

#include "qqc/analysis.hpp"
#include "qqc/experiment.hpp"
#include "qqc/reference.hpp"

using namespace qqc;

namespace {

AmplitudeRecord synthetic_delta_record(double k, double g, double m) {
    AmplitudeRecord r;
    r.k = k;
    r.f = ref::delta_reflection(k, g, m);
    r.transmission = 1.0 + r.f;
    r.R = std::norm(r.f);
    r.T = std::norm(r.transmission);
    r.unitarityResidual = std::abs(r.T + r.R - 1.0);
    return r;
}

}  // namespace

TEST_CASE("transform samples on exact bins are orthogonal", "[analysis]") {
    GridSpec s;
    s.mode = GridMode::planar2d;
    s.nz = 64;
    s.zHalf = 8.0;
    s.nx = 4;
    s.xHalf = 2.0;
    auto grid = build_grid(s);
    const double dk = constants::two_pi / 16.0;
    std::vector<std::complex<double>> phi(64);
    for (int i = 0; i < 64; ++i)
        phi[i] = std::exp(std::complex<double>(0.0, 3.0 * dk * grid->z.center[i]));
    CHECK(std::abs(dft_at(*grid, phi, 3.0 * dk)) == Catch::Approx(16.0).epsilon(1e-12));
    CHECK(std::abs(dft_at(*grid, phi, 2.0 * dk)) < 1e-12);
    CHECK(std::abs(dft_at(*grid, phi, -3.0 * dk)) < 1e-12);
}

TEST_CASE("coupling recovered from synthetic amplitudes across four decades", "[analysis]") {
    const double aPerp = 1.0, m = 1.0;
    const std::vector<double> ks{0.05, 0.10, 0.15, 0.19};
    for (double g : {1e-2, 1e-1, 1.0, 10.0, -0.5, -5.0}) {
        std::vector<AmplitudeRecord> recs;
        for (double k : ks) recs.push_back(synthetic_delta_record(k, g, m));
        const G1DRecord out = compute_g1d(recs, aPerp, m);
        INFO("g = " << g << " recovered " << out.g1d);
        REQUIRE_FALSE(out.pole);
        CHECK(std::abs(out.g1d - g) / std::abs(g) < 0.02);
        // the delta model has no k dependence at all, so recovery is exact
        CHECK(std::abs(out.g1d - g) / std::abs(g) < 1e-9);
        CHECK_FALSE(out.flagged);
    }
}

TEST_CASE("near-total reflection reports a pole instead of a number", "[analysis]") {
    const double aPerp = 1.0, m = 1.0;
    std::vector<AmplitudeRecord> recs;
    for (double k : {0.05, 0.10, 0.15}) recs.push_back(synthetic_delta_record(k, 1e4, m));
    const G1DRecord out = compute_g1d(recs, aPerp, m);
    CHECK(out.pole);
}

TEST_CASE("band and sample-count guards", "[analysis]") {
    const double aPerp = 1.0, m = 1.0;
    SECTION("too few samples in the band") {
        std::vector<AmplitudeRecord> recs;
        recs.push_back(synthetic_delta_record(0.05, 1.0, m));
        recs.push_back(synthetic_delta_record(0.10, 1.0, m));
        recs.push_back(synthetic_delta_record(0.50, 1.0, m));  // outside k aPerp < 0.2
        CHECK_THROWS_AS(compute_g1d(recs, aPerp, m), AnalysisError);
    }
    SECTION("inconsistent samples are flagged") {
        std::vector<AmplitudeRecord> recs;
        recs.push_back(synthetic_delta_record(0.05, 0.2, m));
        recs.push_back(synthetic_delta_record(0.10, 1.0, m));
        recs.push_back(synthetic_delta_record(0.15, 5.0, m));
        const G1DRecord out = compute_g1d(recs, aPerp, m);
        CHECK(out.flagged);
        CHECK(out.flag == "fit-residual");
    }
}

TEST_CASE("resonance location from an inverted-oracle scan", "[analysis]") {
    const double aPerp = 1.0, m = 1.0;
    std::vector<double> ratios;
    std::vector<G1DRecord> gs;
    for (int i = 0; i < 9; ++i) {
        const double ratio = 1.30 + 0.04 * i;
        G1DRecord rec;
        rec.g1d = olshanii_oracle(aPerp / ratio, aPerp, m);
        ratios.push_back(ratio);
        gs.push_back(rec);
    }
    const CirResult cir = find_cir(ratios, gs);
    REQUIRE(cir.found);
    // 1/g is exactly linear in the ratio, so interpolation is exact
    CHECK(std::abs(cir.ratio - ref::cir_ratio()) < 1e-6);
    CHECK(cir.uncertainty == Catch::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("a flagged pole point pins the crossing", "[analysis]") {
    std::vector<double> ratios{1.30, 1.46, 1.60};
    std::vector<G1DRecord> gs(3);
    gs[0].g1d = -2.0;
    gs[1].pole = true;
    gs[2].g1d = 3.0;
    const CirResult cir = find_cir(ratios, gs);
    REQUIRE(cir.found);
    CHECK(cir.ratio == 1.46);

    SECTION("pole at the scan end is still reported") {
        std::vector<double> r2{1.30, 1.46};
        std::vector<G1DRecord> g2(2);
        g2[0].g1d = -2.0;
        g2[1].pole = true;
        const CirResult c2 = find_cir(r2, g2);
        REQUIRE(c2.found);
        CHECK(c2.ratio == 1.46);
    }
    SECTION("unsorted scans are rejected") {
        std::vector<double> r3{1.46, 1.30};
        std::vector<G1DRecord> g3(2);
        CHECK_THROWS_AS(find_cir(r3, g3), AnalysisError);
    }
}

TEST_CASE("pipeline measurement of a lattice delta scatterer", "[analysis]") {
    // End-to-end check of the snapshot/subtraction amplitude measurement: a
    // z-delta line scatterer propagated on the grid, measured against the
    // analytic reflection amplitude. Discretization of the delta limits the
    // agreement, not the measurement machinery.
    GridSpec s;
    s.mode = GridMode::planar2d;
    s.nz = 512;
    s.zHalf = 64.0;
    s.nx = 12;
    s.xHalf = 3.0;
    auto grid = build_grid(s);
    const WaveguideConfig guide{1.0, 1.0};
    const double g = 0.3, sigma0 = 3.2, z0 = -30.0, k0 = 0.15, dt = 0.01;

    const auto bins = plan_snapshots(*grid, guide.aPerp(), z0, 12.0, guide.atomMass, dt);
    REQUIRE(bins.size() >= 3);
    std::vector<double> times;
    for (const auto& b : bins) times.push_back(b.time);

    AbsorberConfig ab;  // defaults; kRef from k0
    StepperConfig cfg;
    cfg.dt = dt;
    cfg.absorber = ab;
    cfg.frozenIon = true;

    auto runOnce = [&](bool withDelta) {
        InteractionTerm term;
        term.deltaEnabled = withDelta;
        term.deltaStrength = g;
        CoupledSim sim(grid, guide, std::nullopt, term, cfg);
        sim.initPacket(z0, k0, sigma0);
        std::vector<double> sorted = times;
        std::sort(sorted.begin(), sorted.end());
        std::vector<ZProjection> snaps;
        for (double target : sorted) {
            while (sim.time() < target - 0.25 * dt) sim.step();
            snaps.push_back(project_ground_mode(sim));
        }
        return snaps;
    };

    const auto freeSnaps = runOnce(false);
    const auto hitSnaps = runOnce(true);

    std::vector<AmplitudeRecord> recs;
    for (std::size_t b = 0; b < bins.size(); ++b) {
        const auto rec = extract_amplitude(*grid, hitSnaps[b], freeSnaps[b], bins[b].k);
        INFO("k = " << rec.k << ": f = " << rec.f.real() << " + " << rec.f.imag()
                    << "i, analytic "
                    << ref::delta_reflection(rec.k, g, guide.atomMass).real() << " + "
                    << ref::delta_reflection(rec.k, g, guide.atomMass).imag() << "i");
        CHECK(std::abs(rec.f - ref::delta_reflection(rec.k, g, guide.atomMass)) < 0.03);
        CHECK(rec.unitarityResidual < kUnitarityTol);
        CHECK(rec.leakage < 1e-8);  // a z-only scatterer cannot excite the guide
        CHECK_FALSE(rec.flagged);
        recs.push_back(rec);
    }
    const G1DRecord out = compute_g1d(recs, guide.aPerp(), guide.atomMass);
    INFO("recovered g = " << out.g1d);
    CHECK_FALSE(out.pole);
    CHECK(std::abs(out.g1d - g) / g < 0.05);
}
