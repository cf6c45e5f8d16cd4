// Command-line front end: waveguide atom / trapped ion collision scans.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "../vendor/CLI11.hpp"
#include "qqc/analysis.hpp"
#include "qqc/dynamics.hpp"
#include "qqc/experiment.hpp"
#include "qqc/io.hpp"
#include "qqc/potentials.hpp"
#include "qqc/reference.hpp"
#include "qqc/toml.hpp"
#include "qqc/traps.hpp"
#include "qqc/units.hpp"

namespace {

using namespace qqc;

struct GlobalOpts {
    std::string configPath;
    std::string outDir = ".";
    std::int64_t seed = -1;
    int threads = 0;
    std::string mode;
    std::string geometry;
};

ExperimentConfig load_config(const GlobalOpts& g) {
    if (g.configPath.empty()) throw ConfigError("this subcommand requires --config <file>");
    Config cfg = Config::parse_file(g.configPath);
    ExperimentConfig e = load_experiment(cfg);
    if (g.seed >= 0) e.seed = static_cast<std::uint64_t>(g.seed);
    if (g.threads > 0) e.threads = g.threads;
    if (!g.mode.empty() && e.hasTrap) {
        e.trap.mode = parse_ion_mode(g.mode);
        e.trap.validate();
    }
    if (!g.geometry.empty()) e.geometry = parse_geometry(g.geometry);
    return e;
}

std::string out_path(const GlobalOpts& g, const std::string& name) {
    std::filesystem::create_directories(g.outDir);
    return (std::filesystem::path(g.outDir) / name).string();
}

int run_validate() {
    int failures = 0;
    auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
        std::printf("%-44s %s%s%s\n", name.c_str(), ok ? "PASS" : "FAIL",
                    detail.empty() ? "" : "  ", detail.c_str());
        if (!ok) ++failures;
    };
    char buf[128];

    // square-well scattering length: radial integrator vs analytic formula
    {
        double worst = 0.0;
        bool nodesOk = true;
        const double mu = 0.5, radius = 1.3;
        for (int i = 0; i < 20; ++i) {
            const double kr = 0.35 + 0.42 * i;  // crosses several bound-state thresholds
            const double v0 = kr * kr / (2.0 * mu * radius * radius);
            auto V = [&](double r) { return r < radius ? -v0 : 0.0; };
            RadialSolveOptions opt;
            opt.lengthScale = radius;
            opt.breakpoints = {radius};
            const auto res = scattering_length_radial(V, mu, opt);
            const double exact = ref::square_well_scattering_length(v0, radius, mu);
            worst = std::max(worst,
                             std::abs(res.aS - exact) / std::max(std::abs(exact), radius));
            if (res.nBoundStates != ref::square_well_bound_states(v0, radius, mu))
                nodesOk = false;
        }
        std::snprintf(buf, sizeof(buf), "worst rel err %.2e", worst);
        check("square-well scattering length vs closed form", worst < 1e-6 && nodesOk, buf);
    }

    // regularized polarization potential: numerical solver vs closed form
    {
        double worst = 0.0;
        const double mu = 1.0;
        for (double b : {0.20, 0.32, 0.55}) {
            const double c4 = 0.15125;
            const double exact = ref::polarization_scattering_length(c4, b, mu);
            InteractionModel m;
            m.kind = PotentialKind::polarization;
            m.longRangeCoefficient = c4;
            m.regularizationLength = b;
            m.reducedMass = mu;
            const auto r = scattering_length(m);
            worst = std::max(worst, std::abs(r.aS - exact) / std::max(1.0, std::abs(exact)));
        }
        std::snprintf(buf, sizeof(buf), "worst rel err %.2e", worst);
        check("polarization scattering length vs closed form", worst < 1e-6, buf);
    }

    // confinement-resonance pole position recovered exactly from synthetic g1d
    {
        std::vector<double> ratios;
        std::vector<G1DRecord> recs;
        for (int i = 0; i < 9; ++i) {
            const double ratio = 1.30 + 0.04 * i;
            ratios.push_back(ratio);
            G1DRecord g;
            g.g1d = ref::olshanii_g1d(1.0 / ratio, 1.0, 1.0);
            recs.push_back(g);
        }
        const auto cir = find_cir(ratios, recs);
        const double err = std::abs(cir.ratio - ref::cir_ratio());
        std::snprintf(buf, sizeof(buf), "found %.8f err %.1e", cir.ratio, err);
        check("resonance location from synthetic scan", cir.found && err < 1e-6, buf);
    }

    // delta-model coupling recovered from synthetic amplitudes
    {
        double worst = 0.0;
        for (double g = 1e-2; g < 2e2; g *= 10.0) {
            std::vector<AmplitudeRecord> recs;
            for (double k : {0.05, 0.10, 0.15}) {
                AmplitudeRecord a;
                a.k = k;
                a.f = ref::delta_reflection(k, g, 1.0);
                recs.push_back(a);
            }
            const auto out = compute_g1d(recs, 1.0, 1.0);
            worst = std::max(worst, std::abs(out.g1d - g) / g);
        }
        std::snprintf(buf, sizeof(buf), "worst rel err %.2e", worst);
        check("delta-model coupling over 4 decades", worst < 0.02, buf);
    }

    // Mathieu stability edge along a = 0
    {
        double lo = 0.5, hi = 1.2;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            (mathieu_stable(0.0, mid) ? lo : hi) = mid;
        }
        const double err = std::abs(lo - ref::kMathieuEdgeQ) / ref::kMathieuEdgeQ;
        std::snprintf(buf, sizeof(buf), "edge %.6f err %.2e", lo, err);
        check("Mathieu instability edge near q = 0.908", err < 0.01, buf);
    }

    // elastic baseline prefactor identities
    {
        const bool equalMass = elastic_baseline(7.0, 7.0, 3.25, 0.0, 0.0) == 0.0;
        const double pref =
            (3.25 - elastic_baseline(6.0, 171.0, 3.25, 0.0, 0.0)) / 3.25;
        const double exact = 4104.0 / 31329.0;
        const double err = std::abs(pref - exact);
        std::snprintf(buf, sizeof(buf), "prefactor err %.2e", err);
        check("hard-collision energy-transfer prefactor", equalMass && err < 1e-15, buf);
    }

    // quick propagation audit: free packet, norm + absorbed flux conserved
    {
        GridSpec gs;
        gs.mode = GridMode::cylindrical2d;
        gs.nz = 128;
        gs.zHalf = 38.4;
        gs.rhoMax = 5.0;
        gs.rhoFineExtent = 0.6;
        gs.rhoFineStep = 0.05;
        gs.rhoCoarseStep = 0.3;
        auto grid = build_grid(gs);
        StepperConfig sc;
        sc.dt = 0.01;
        sc.frozenIon = true;
        CoupledSim sim(grid, WaveguideConfig{1.0, 1.0}, std::nullopt, InteractionTerm{}, sc);
        sim.initPacket(-12.0, 1.2, 2.5);
        for (int i = 0; i < 2000; ++i) sim.step();
        const double audit = sim.auditResidual();
        std::snprintf(buf, sizeof(buf), "audit %.2e absorbed %.3f", audit,
                      sim.field().absorbed);
        check("free propagation norm + flux audit", audit < 1e-8, buf);
    }

    std::printf("%s\n", failures == 0 ? "all checks passed" : "VALIDATION FAILED");
    return failures == 0 ? 0 : 1;
}

int run_scattering_length(const GlobalOpts& g, double targetRatio) {
    ExperimentConfig e = load_config(g);
    if (!e.hasModel) throw ConfigError("config has no [interaction] section");
    InteractionModel m = e.model;
    if (targetRatio > 0.0) {
        m = tune_regularization(m, targetRatio, e.guide.aPerp());
        std::printf("tuned regularization: %.17g\n", m.regularizationLength);
    }
    const auto r = scattering_length(m);
    std::printf("scattering length: %.17g\n", r.aS);
    std::printf("bound states:      %d\n", r.nBoundStates);
    std::printf("match radius:      %.17g\n", r.matchRadius);
    std::printf("converged:         %s (refinement delta %.3e)\n", r.converged ? "yes" : "no",
                r.refinementDelta);
    if (e.guide.omegaPerp > 0.0)
        std::printf("aPerp/aS:          %.17g\n", e.guide.aPerp() / r.aS);
    return 0;
}

int run_scan_cir(const GlobalOpts& g) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig e = load_config(g);
    const auto scan = scan_cir(e);
    write_cir_csv(scan, out_path(g, "scan_cir.csv"));

    std::vector<std::string> flags;
    for (const auto& pt : scan.points)
        flags.push_back(pt.failed ? ("failed:" + pt.flag) : pt.flag);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json_file(out_path(g, "scan_cir.provenance.json"), make_provenance(e, wall, flags));

    if (scan.cir.found)
        std::printf("resonance estimate: ratio %.6f +- %.6f\n", scan.cir.ratio,
                    scan.cir.uncertainty);
    else
        std::printf("no resonance crossing found in the scanned band\n");
    std::printf("wrote %s\n", out_path(g, "scan_cir.csv").c_str());
    return 0;
}

int run_collide(const GlobalOpts& g) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig e = load_config(g);
    if (!e.hasTrap) throw ConfigError("config has no [trap] section");
    if (!e.hasModel) throw ConfigError("config has no [interaction] section");

    InteractionModel tuned = e.model;
    if (!e.ratios.empty()) tuned = tune_regularization(e.model, e.ratios.front(), e.guide.aPerp());

    RunPlan plan;
    plan.grid = build_grid(e.grid);
    plan.guide = e.guide;
    plan.trap = e.trap;
    plan.interaction.model = &tuned;
    plan.stepper.dt = e.dt;
    plan.stepper.absorber = e.absorber;
    plan.z0 = e.z0;
    plan.k0 = e.k0;
    plan.sigma = e.sigma0;
    plan.quiescentForce = e.quiescentForce;
    plan.window = e.window;
    plan.maxTime = e.maxTime;
    plan.recordStride = e.recordStride;
    plan.ionInit = sample_ion_initial(e.trap, e.eIn, e.geometry, e.seed, 0);

    const auto out = run_collision(plan);
    write_collision_csv(out, out_path(g, "collide.csv"));

    json summary;
    summary["eIn"] = out.eIn;
    summary["eOut"] = out.eOut;
    summary["tIn"] = out.tIn;
    summary["tOut"] = out.tOut;
    summary["tEnd"] = out.tEnd;
    summary["truncated"] = out.truncated;
    summary["flag"] = out.flag;
    summary["absorbed"] = out.absorbed;
    summary["normEnd"] = out.normEnd;
    summary["impulseZ"] = out.impulseZ;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    summary["provenance"] = make_provenance(e, wall, {out.flag});
    write_json_file(out_path(g, "collide.summary.json"), summary);

    std::printf("eIn  = %.10g\neOut = %.10g\n", out.eIn, out.eOut);
    if (out.truncated) std::printf("run truncated: %s\n", out.flag.c_str());
    std::printf("wrote %s\n", out_path(g, "collide.csv").c_str());
    return 0;
}

int run_scan_cooling(const GlobalOpts& g, const std::string& companionPath) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig e = load_config(g);

    ExperimentConfig companion;
    bool hasCompanion = false;
    if (!companionPath.empty()) {
        Config ccfg = Config::parse_file(companionPath);
        companion = load_experiment(ccfg);
        companion.threads = e.threads;
        hasCompanion = true;
    }

    const auto scan = scan_cooling(e, hasCompanion ? &companion : nullptr);
    write_cooling_csv(scan, out_path(g, "scan_cooling.csv"));

    std::vector<std::string> flags;
    for (const auto& pt : scan.points)
        flags.push_back(pt.failed ? ("failed:" + pt.flag) : pt.flag);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    json prov = make_provenance(e, wall, flags);
    if (scan.cirEstimate.found) {
        prov["cirEstimate"] = scan.cirEstimate.ratio;
        prov["cirUncertainty"] = scan.cirEstimate.uncertainty;
    }
    prov["elasticBaseline"] = scan.elasticBaseline;
    write_json_file(out_path(g, "scan_cooling.provenance.json"), prov);

    const auto window = sub_baseline_window(scan);
    if (window.exists)
        std::printf("sub-baseline window: ratio in [%.4f, %.4f], minimum %.6g at %.4f\n",
                    window.lo, window.hi, window.minValue, window.minRatio);
    else
        std::printf("no sub-baseline cooling window found\n");
    std::printf("wrote %s\n", out_path(g, "scan_cooling.csv").c_str());
    return 0;
}

int run_baseline(const std::string& ma, const std::string& mi, const std::string& ein,
                 const std::string& ecoll, const std::string& eperp) {
    const double mA = to_internal(parse_quantity(ma), Dimension::Mass);
    const double mI = to_internal(parse_quantity(mi), Dimension::Mass);
    const double eIn = to_internal(parse_quantity(ein), Dimension::Energy);
    const double eColl =
        ecoll.empty() ? 0.0 : to_internal(parse_quantity(ecoll), Dimension::Energy);
    const double ePerp =
        eperp.empty() ? 0.0 : to_internal(parse_quantity(eperp), Dimension::Energy);
    const double s = mA + mI;
    const double pref = 4.0 * mA * mI / (s * s);
    const double eOut = elastic_baseline(mA, mI, eIn, eColl, ePerp);
    std::printf("prefactor 4 mA mI/(mA+mI)^2 = %.17g\n", pref);
    std::printf("energy transfer             = %.17g\n", eIn - eOut);
    std::printf("post-collision ion energy   = %.17g\n", eOut);
    return 0;
}

int run_dump_potential(const GlobalOpts& g) {
    ExperimentConfig e = load_config(g);
    if (!e.hasModel) throw ConfigError("config has no [interaction] section");
    const std::string path = out_path(g, "potential.csv");
    CsvWriter csv(path, {"r", "V"});
    const double b = e.model.regularizationLength;
    const double rMax = 40.0 * e.model.tailScale();
    for (int i = 0; i < 400; ++i) {
        const double r = std::exp(std::log(b * 1e-2) +
                                  (std::log(rMax) - std::log(b * 1e-2)) * i / 399.0);
        csv.row({format_g17(r), format_g17(evaluate(e.model, r))});
    }
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"confined atom / trapped ion collision scans"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.configPath, "TOML configuration file");
    app.add_option("--out", g.outDir, "output directory (default .)");
    app.add_option("--seed", g.seed, "override run.seed");
    app.add_option("--threads", g.threads, "override run.threads");
    app.add_option("--mode", g.mode, "override trap mode: rf | secular");
    app.add_option("--geometry", g.geometry, "override geometry: head-on | full3d");

    auto* cmdValidate = app.add_subcommand("validate", "run the built-in reference checks");
    auto* cmdAs = app.add_subcommand("scattering-length", "solve the radial problem");
    double targetRatio = 0.0;
    cmdAs->add_option("--target-ratio", targetRatio, "tune the regularization to aPerp/aS");
    auto* cmdCir = app.add_subcommand("scan-cir", "frozen-ion g1D scan over aPerp/aS");
    auto* cmdCollide = app.add_subcommand("collide", "single collision with time series");
    auto* cmdCooling = app.add_subcommand("scan-cooling", "ensemble cooling curve");
    std::string companionPath;
    cmdCooling->add_option("--companion", companionPath,
                           "config for the companion frozen-ion resonance scan");
    auto* cmdBaseline = app.add_subcommand("baseline", "hard-collision energy transfer");
    std::string ma = "6amu", mi = "171amu", ein, ecoll, eperp;
    cmdBaseline->add_option("--ma", ma, "atom mass, e.g. 6amu");
    cmdBaseline->add_option("--mi", mi, "ion mass, e.g. 171amu");
    cmdBaseline->add_option("--ein", ein, "ion input energy, e.g. 1mK or 2.5e-3au")->required();
    cmdBaseline->add_option("--ecoll", ecoll, "collision energy (default 0)");
    cmdBaseline->add_option("--eperp", eperp, "transverse energy (default 0)");
    auto* cmdDump = app.add_subcommand("dump-potential", "tabulate the interaction potential");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmdValidate->parsed()) return run_validate();
        if (cmdAs->parsed()) return run_scattering_length(g, targetRatio);
        if (cmdCir->parsed()) return run_scan_cir(g);
        if (cmdCollide->parsed()) return run_collide(g);
        if (cmdCooling->parsed()) return run_scan_cooling(g, companionPath);
        if (cmdBaseline->parsed()) return run_baseline(ma, mi, ein, ecoll, eperp);
        if (cmdDump->parsed()) return run_dump_potential(g);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
