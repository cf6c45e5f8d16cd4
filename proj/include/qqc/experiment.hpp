#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "qqc/analysis.hpp"
#include "qqc/dynamics.hpp"
#include "qqc/io.hpp"
#include "qqc/potentials.hpp"
#include "qqc/rng.hpp"
#include "qqc/toml.hpp"
#include "qqc/traps.hpp"
#include "qqc/units.hpp"

namespace qqc {

// ------------------------------------------------------------------ baseline

// Hard-sphere elastic energy transfer for a central collision:
//   dE = 4 mA mI / (mA + mI)^2 * (eIn - eColl - ePerp)
// returns the post-collision ion energy eIn - dE.
inline double elastic_baseline(double mA, double mI, double eIn, double eColl, double ePerp) {
    if (!(mA > 0.0 && mI > 0.0)) throw DomainError("elastic_baseline: masses must be positive");
    const double s = mA + mI;
    const double pref = 4.0 * mA * mI / (s * s);
    return eIn - pref * (eIn - eColl - ePerp);
}

// ------------------------------------------------------------- ion sampling

enum class Geometry { headOn, full3d };

inline Geometry parse_geometry(const std::string& s) {
    if (s == "head-on" || s == "headon" || s == "head_on") return Geometry::headOn;
    if (s == "full3d" || s == "3d") return Geometry::full3d;
    throw ConfigError("geometry must be 'head-on' or 'full3d', got '" + s + "'");
}

inline std::string to_string(Geometry g) {
    return g == Geometry::headOn ? "head-on" : "full3d";
}

namespace detail {
// time-averaged (kinetic + static-trap) energy of a trap-only trajectory
inline double trap_mean_energy(const PaulTrapConfig& trap, IonState s, double window) {
    const double dt = trap.defaultStep();
    double t = 0.0;
    double acc = 0.0;
    long n = 0;
    while (t < window) {
        const double h = std::min(dt, window - t);
        step_ion_verlet(trap, s, t, h);
        t += h;
        acc += ion_energy(trap, s);
        ++n;
    }
    return acc / static_cast<double>(n);
}
}  // namespace detail

// Draw one ion initial condition with the requested mean energy.
//   head-on: motion in the xz plane only (y exactly zero), energy split
//            evenly between the two modes, phases drawn from the stream;
//   full3d:  all three modes excited with equal mean energy, random phases.
// Amplitudes are seeded from the secular approximation and then rescaled
// once against a measured trap-period average, which is exact because the
// trap equations of motion are linear. Deterministic in (seed, index).
inline IonState sample_ion_initial(const PaulTrapConfig& trap, double eIn, Geometry geometry,
                                   std::uint64_t seed, std::uint64_t index) {
    trap.validate();
    if (eIn < 0.0) throw DomainError("sample_ion_initial: negative target energy");
    IonState s;
    if (eIn == 0.0) return s;

    Rng rng(derive_seed(seed, index, 0));
    std::array<double, 3> share{};
    if (geometry == Geometry::headOn) {
        share = {0.5, 0.0, 0.5};
    } else {
        share = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    }
    for (int u = 0; u < 3; ++u) {
        if (share[u] == 0.0) continue;
        const double w = trap.secularFrequency(u);
        if (w <= 0.0)
            throw SetupError("sample_ion_initial: requested energy in an unconfined axis");
        const double amp = std::sqrt(2.0 * share[u] * eIn / (trap.ionMass * w * w));
        const double phase = rng.angle();
        s.r[u] = amp * std::cos(phase);
        s.v[u] = -amp * w * std::sin(phase);
    }

    const double window = [&] {
        double tw = 20.0 * slowest_confined_period(trap);
        if (trap.mode == IonMode::rf) {
            const double tRf = 2.0 * constants::pi / trap.driveFrequency;
            tw = std::ceil(std::max(tw, 50.0 * tRf) / tRf) * tRf;
        }
        return tw;
    }();
    const double measured = detail::trap_mean_energy(trap, s, window);
    if (!(measured > 0.0)) throw SetupError("sample_ion_initial: degenerate seed trajectory");
    const double scale = std::sqrt(eIn / measured);
    for (int u = 0; u < 3; ++u) {
        s.r[u] *= scale;
        s.v[u] *= scale;
    }
    return s;
}

// ------------------------------------------------------------ configuration

struct ExperimentConfig {
    Species atom{"atom", 1.0};
    Species ionSpecies{"ion", 1.0};
    WaveguideConfig guide{1.0, 1.0};
    PaulTrapConfig trap;
    bool hasTrap = false;
    InteractionModel model;
    bool hasModel = false;
    GridSpec grid;
    double dt = 5e-3;
    AbsorberConfig absorber;
    double sigma0 = 0.0;
    double z0 = 0.0;
    double k0 = 0.0;     // derived from collision energy when absent
    double eColl = 0.0;  // longitudinal kinetic energy of the packet
    double eIn = 0.0;
    double ePerp = -1.0;  // < 0: default to the transverse ground energy
    Geometry geometry = Geometry::headOn;
    int ensemble = 4;
    std::uint64_t seed = 1;
    int collisionsPerMember = 1;
    std::vector<double> ratios;
    double quiescentForce = 0.0;
    double window = 0.0;
    double maxTime = 0.0;
    double recordStride = 0.0;
    double snapshotClearance = 15.0;
    int threads = 1;
    std::string configText;
    std::uint64_t configHash = 0;
};

inline ExperimentConfig load_experiment(Config& cfg) {
    ExperimentConfig e;
    e.configText = cfg.text();
    e.configHash = cfg.hash();

    if (cfg.has("atom.mass")) e.atom.mass = cfg.quantity("atom.mass", Dimension::Mass);
    if (cfg.has("ion.mass")) e.ionSpecies.mass = cfg.quantity("ion.mass", Dimension::Mass);

    const double omega = cfg.has("guide.omega_perp")
                             ? cfg.quantity("guide.omega_perp", Dimension::AngularFrequency)
                             : 1.0;
    e.guide = WaveguideConfig{e.atom.mass, omega};
    e.guide.validate();

    if (cfg.has("trap.drive_frequency")) {
        const double drive = cfg.quantity("trap.drive_frequency", Dimension::AngularFrequency);
        const double qr = cfg.number("trap.q_radial");
        const double az = cfg.number("trap.a_axial");
        const IonMode mode = parse_ion_mode(cfg.str("trap.mode", "rf"));
        e.trap = linear_paul_trap(e.ionSpecies.mass, drive, qr, az, mode);
        e.hasTrap = true;
    }

    if (cfg.has("interaction.kind")) {
        const std::string kind = cfg.str("interaction.kind");
        if (kind == "polarization") e.model.kind = PotentialKind::polarization;
        else if (kind == "van-der-waals" || kind == "vdw")
            e.model.kind = PotentialKind::vanDerWaals;
        else
            throw ConfigError("interaction.kind must be 'polarization' or 'van-der-waals'");
        e.model.longRangeCoefficient = cfg.number("interaction.long_range_coefficient");
        e.model.regularizationLength =
            cfg.quantity("interaction.regularization", Dimension::Length);
        e.model.reducedMass = reduced_mass(e.atom, e.ionSpecies);
        if (cfg.has("interaction.reduced_mass"))
            e.model.reducedMass = cfg.quantity("interaction.reduced_mass", Dimension::Mass);
        e.model.validate();
        e.hasModel = true;
    }

    if (cfg.has("grid.mode")) {
        e.grid.mode = parse_grid_mode(cfg.str("grid.mode"));
        e.grid.nz = cfg.integer("grid.nz");
        e.grid.zHalf = cfg.quantity("grid.z_half", Dimension::Length);
        if (e.grid.mode == GridMode::cylindrical2d) {
            e.grid.rhoMax = cfg.quantity("grid.rho_max", Dimension::Length);
            e.grid.rhoFineExtent = cfg.quantity("grid.rho_fine_extent", Dimension::Length);
            e.grid.rhoFineStep = cfg.quantity("grid.rho_fine_step", Dimension::Length);
            e.grid.rhoGrowth = cfg.number("grid.rho_growth", 1.05);
            e.grid.rhoCoarseStep = cfg.has("grid.rho_coarse_step")
                                       ? cfg.quantity("grid.rho_coarse_step", Dimension::Length)
                                       : 6.0 * e.grid.rhoFineStep;
        } else {
            e.grid.nx = cfg.integer("grid.nx");
            e.grid.xHalf = cfg.quantity("grid.x_half", Dimension::Length);
            if (e.grid.mode == GridMode::cartesian3d) {
                e.grid.ny = cfg.integer("grid.ny");
                e.grid.yHalf = cfg.quantity("grid.y_half", Dimension::Length);
            }
        }
    }

    if (cfg.has("run.dt")) e.dt = cfg.number("run.dt");
    if (cfg.has("absorber.fraction")) e.absorber.fraction = cfg.number("absorber.fraction");
    if (cfg.has("absorber.strength_factor"))
        e.absorber.strengthFactor = cfg.number("absorber.strength_factor");
    if (cfg.has("absorber.enabled")) e.absorber.enabled = cfg.boolean("absorber.enabled");

    if (cfg.has("packet.sigma")) e.sigma0 = cfg.quantity("packet.sigma", Dimension::Length);
    if (cfg.has("packet.z0")) e.z0 = cfg.quantity("packet.z0", Dimension::Length);
    if (cfg.has("packet.collision_energy"))
        e.eColl = cfg.quantity("packet.collision_energy", Dimension::Energy);
    if (cfg.has("packet.k0")) e.k0 = cfg.number("packet.k0");
    if (e.k0 == 0.0 && e.eColl > 0.0) e.k0 = std::sqrt(2.0 * e.atom.mass * e.eColl);
    if (e.eColl == 0.0 && e.k0 != 0.0) e.eColl = 0.5 * e.k0 * e.k0 / e.atom.mass;

    if (cfg.has("run.e_in")) e.eIn = cfg.quantity("run.e_in", Dimension::Energy);
    if (cfg.has("run.e_perp")) e.ePerp = cfg.quantity("run.e_perp", Dimension::Energy);
    if (cfg.has("run.geometry")) e.geometry = parse_geometry(cfg.str("run.geometry"));
    if (cfg.has("run.ensemble")) e.ensemble = cfg.integer("run.ensemble");
    if (cfg.has("run.seed")) e.seed = static_cast<std::uint64_t>(cfg.integer("run.seed"));
    if (cfg.has("run.collisions_per_member"))
        e.collisionsPerMember = cfg.integer("run.collisions_per_member");
    if (cfg.has("run.quiescent_force"))
        e.quiescentForce = cfg.number("run.quiescent_force");
    if (cfg.has("run.window")) e.window = cfg.number("run.window");
    if (cfg.has("run.max_time")) e.maxTime = cfg.number("run.max_time");
    if (cfg.has("run.record_stride"))
        e.recordStride = cfg.number("run.record_stride");
    if (cfg.has("run.snapshot_clearance"))
        e.snapshotClearance = cfg.quantity("run.snapshot_clearance", Dimension::Length);
    if (cfg.has("run.threads")) e.threads = cfg.integer("run.threads");

    if (cfg.has("scan.ratios")) {
        e.ratios = cfg.number_array("scan.ratios");
    } else if (cfg.has("scan.ratio_min")) {
        const double lo = cfg.number("scan.ratio_min");
        const double hi = cfg.number("scan.ratio_max");
        const int n = cfg.integer("scan.ratio_points");
        if (n < 2 || !(hi > lo)) throw ConfigError("scan: need ratio_max > ratio_min, points >= 2");
        for (int i = 0; i < n; ++i)
            e.ratios.push_back(lo + (hi - lo) * i / static_cast<double>(n - 1));
    }

    cfg.reject_unknown();
    return e;
}

// -------------------------------------------------------------- parallelism

// Runs fn(0..n-1) on a bounded pool. Results must be written into
// index-addressed slots by the caller, so the assembly order never depends
// on scheduling.
inline void parallel_for_indexed(int n, int threads, const std::function<void(int)>& fn) {
    threads = std::max(1, std::min(threads, n));
    if (threads == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& err : errors)
        if (err) std::rethrow_exception(err);
}

// ------------------------------------------------------- frozen-ion scans

struct SnapshotBin {
    double k = 0.0;
    double time = 0.0;
};

// Momentum samples sit on exact transform bins of the z axis (no spectral
// leakage); each bin is measured at its own time, early enough that nothing
// aliasing into it has reached the absorber yet.
inline std::vector<SnapshotBin> plan_snapshots(const Grid& g, double aPerp, double z0,
                                               double clearance, double mass, double dt) {
    const double dk = 2.0 * constants::pi / (g.z.face.back() - g.z.face.front());
    std::vector<SnapshotBin> bins;
    for (int m = 2; m * dk * aPerp < 0.2; ++m) {
        SnapshotBin b;
        b.k = m * dk;
        const double v = b.k / mass;
        b.time = std::ceil((std::abs(z0) + clearance) / v / dt) * dt;
        bins.push_back(b);
    }
    if (bins.size() < 3)
        throw SetupError("z box too short: fewer than three momentum bins below k aPerp = 0.2");
    return bins;
}

// propagate a frozen-ion run and capture ground-mode projections at the
// requested times (sorted descending internally; earliest first in output)
inline std::vector<ZProjection> run_frozen_snapshots(std::shared_ptr<const Grid> grid,
                                                     const WaveguideConfig& guide,
                                                     const InteractionModel* model,
                                                     double z0, double k0, double sigma,
                                                     double dt, const AbsorberConfig& absorber,
                                                     const std::vector<double>& times) {
    StepperConfig scfg;
    scfg.dt = dt;
    scfg.absorber = absorber;
    scfg.frozenIon = true;
    scfg.backAction = false;
    InteractionTerm term;
    term.model = model;
    CoupledSim sim(std::move(grid), guide, std::nullopt, term, scfg);
    sim.initPacket(z0, k0, sigma);

    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    std::vector<ZProjection> out;
    std::size_t nextIdx = 0;
    while (nextIdx < sorted.size()) {
        const double target = sorted[nextIdx];
        while (sim.time() < target - 0.25 * dt) sim.step();
        out.push_back(project_ground_mode(sim));
        ++nextIdx;
    }
    return out;
}

struct CirScanPoint {
    double ratio = 0.0;
    double aS = 0.0;
    double regularization = 0.0;
    std::vector<AmplitudeRecord> amplitudes;
    G1DRecord g1d;
    bool failed = false;
    std::string flag;
};

struct CirScanResult {
    std::vector<CirScanPoint> points;
    CirResult cir;
    std::vector<SnapshotBin> bins;
    double aPerp = 0.0;
};

// Frozen-ion resonance scan: for each target ratio aPerp/aS, tune the
// regularization length, propagate one packet, measure f(k) on the snapshot
// bins against a shared free reference, and convert to g1D. The resonance
// estimate is the zero crossing of 1/g1D.
inline CirScanResult scan_cir(const ExperimentConfig& e) {
    if (!e.hasModel) throw SetupError("scan-cir: config has no [interaction] section");
    if (e.ratios.empty()) throw SetupError("scan-cir: config has no [scan] section");
    if (!(e.k0 > 0.0)) throw SetupError("scan-cir: no packet momentum configured");
    if (!(e.sigma0 > 0.0)) throw SetupError("scan-cir: no packet width configured");

    auto grid = build_grid(e.grid);
    const double aPerp = e.guide.aPerp();

    CirScanResult out;
    out.aPerp = aPerp;
    out.bins = plan_snapshots(*grid, aPerp, e.z0, e.snapshotClearance, e.atom.mass, e.dt);
    std::vector<double> times;
    for (const auto& b : out.bins) times.push_back(b.time);

    // shared free reference (no interaction)
    const auto freeSnaps = run_frozen_snapshots(grid, e.guide, nullptr, e.z0, e.k0, e.sigma0,
                                                e.dt, e.absorber, times);

    out.points.resize(e.ratios.size());
    // tuning is cheap and sequential to keep a clean deterministic order
    std::vector<InteractionModel> tuned(e.ratios.size());
    for (std::size_t i = 0; i < e.ratios.size(); ++i) {
        auto& pt = out.points[i];
        pt.ratio = e.ratios[i];
        try {
            tuned[i] = tune_regularization(e.model, e.ratios[i], aPerp);
            pt.regularization = tuned[i].regularizationLength;
            pt.aS = aPerp / e.ratios[i];
        } catch (const std::exception& ex) {
            pt.failed = true;
            pt.flag = std::string("tuning: ") + ex.what();
        }
    }

    parallel_for_indexed(static_cast<int>(e.ratios.size()), e.threads, [&](int i) {
        auto& pt = out.points[i];
        if (pt.failed) return;
        try {
            const auto snaps = run_frozen_snapshots(grid, e.guide, &tuned[i], e.z0, e.k0,
                                                    e.sigma0, e.dt, e.absorber, times);
            for (std::size_t b = 0; b < out.bins.size(); ++b)
                pt.amplitudes.push_back(
                    extract_amplitude(*grid, snaps[b], freeSnaps[b], out.bins[b].k));
            pt.g1d = compute_g1d(pt.amplitudes, aPerp, e.atom.mass);
            if (pt.g1d.flagged) pt.flag = pt.g1d.flag;
        } catch (const std::exception& ex) {
            pt.failed = true;
            pt.flag = ex.what();
        }
    });

    std::vector<double> okRatios;
    std::vector<G1DRecord> okG;
    for (const auto& pt : out.points) {
        if (pt.failed) continue;
        okRatios.push_back(pt.ratio);
        okG.push_back(pt.g1d);
    }
    if (okRatios.size() >= 2) out.cir = find_cir(okRatios, okG);
    return out;
}

// ----------------------------------------------------------- cooling scans

struct RunRecord {
    double eIn = 0.0, eOut = 0.0;
    double tOut = 0.0;
    double absorbed = 0.0, normEnd = 0.0;
    bool truncated = false;
    std::string flag;
};

struct CoolingPoint {
    double ratio = 0.0;
    double aS = 0.0;
    double regularization = 0.0;
    double eOutMean = 0.0;
    double eOutStdErr = 0.0;
    double baseline = 0.0;
    int okRuns = 0;
    std::vector<RunRecord> records;
    bool failed = false;
    std::string flag;
};

struct CoolingScanResult {
    std::vector<CoolingPoint> points;
    CirResult cirEstimate;
    double elasticBaseline = 0.0;
    double eIn = 0.0;
    double ePerpUsed = 0.0;
};

inline RunRecord run_one_member(const ExperimentConfig& e, const InteractionModel& model,
                                std::shared_ptr<const Grid> grid, std::uint64_t pointIdx,
                                std::uint64_t memberIdx) {
    RunRecord rec;
    RunPlan plan;
    plan.grid = std::move(grid);
    plan.guide = e.guide;
    plan.trap = e.trap;
    plan.interaction.model = &model;
    plan.stepper.dt = e.dt;
    plan.stepper.absorber = e.absorber;
    plan.stepper.backAction = true;
    plan.z0 = e.z0;
    plan.k0 = e.k0;
    plan.sigma = e.sigma0;
    plan.quiescentForce = e.quiescentForce;
    plan.window = e.window;
    plan.maxTime = e.maxTime;
    plan.recordStride = e.recordStride;
    plan.ionInit = sample_ion_initial(e.trap, e.eIn, e.geometry, e.seed,
                                      pointIdx * 1000003ULL + memberIdx);

    CollisionOutcome last;
    for (int c = 0; c < std::max(1, e.collisionsPerMember); ++c) {
        last = run_collision(plan);
        if (c == 0) rec.eIn = last.eIn;
        plan.ionInit = last.ionFinal;
        if (last.truncated) break;
    }
    rec.eOut = last.eOut;
    rec.tOut = last.tOut;
    rec.absorbed = last.absorbed;
    rec.normEnd = last.normEnd;
    rec.truncated = last.truncated;
    rec.flag = last.flag;
    return rec;
}

// Cooling curve over the ratio grid: per point, tune the potential, run the
// ensemble, and aggregate. Failures are flagged per point and the scan
// continues. The companion resonance estimate comes from a frozen-ion scan
// with the same guide and interaction family.
inline CoolingScanResult scan_cooling(const ExperimentConfig& e,
                                      const ExperimentConfig* companion = nullptr) {
    if (!e.hasTrap) throw SetupError("scan-cooling: config has no [trap] section");
    if (!e.hasModel) throw SetupError("scan-cooling: config has no [interaction] section");
    if (e.ratios.empty()) throw SetupError("scan-cooling: config has no [scan] section");
    if (!(e.eIn > 0.0)) throw SetupError("scan-cooling: run.e_in must be positive");
    if (!(e.k0 > 0.0)) throw SetupError("scan-cooling: no packet momentum configured");

    auto grid = build_grid(e.grid);
    const double aPerp = e.guide.aPerp();

    CoolingScanResult out;
    out.eIn = e.eIn;
    // default transverse energy in the baseline: one guide quantum
    out.ePerpUsed = e.ePerp >= 0.0 ? e.ePerp : e.guide.omegaPerp;
    out.elasticBaseline =
        elastic_baseline(e.atom.mass, e.ionSpecies.mass, e.eIn, e.eColl, out.ePerpUsed);

    out.points.resize(e.ratios.size());
    std::vector<InteractionModel> tuned(e.ratios.size());
    for (std::size_t i = 0; i < e.ratios.size(); ++i) {
        auto& pt = out.points[i];
        pt.ratio = e.ratios[i];
        pt.baseline = out.elasticBaseline;
        try {
            tuned[i] = tune_regularization(e.model, e.ratios[i], aPerp);
            pt.regularization = tuned[i].regularizationLength;
            pt.aS = aPerp / e.ratios[i];
        } catch (const std::exception& ex) {
            pt.failed = true;
            pt.flag = std::string("tuning: ") + ex.what();
        }
    }

    struct Job {
        int point, member;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < e.ratios.size(); ++i) {
        if (out.points[i].failed) continue;
        for (int m = 0; m < e.ensemble; ++m)
            jobs.push_back({static_cast<int>(i), m});
    }
    std::vector<RunRecord> results(jobs.size());
    parallel_for_indexed(static_cast<int>(jobs.size()), e.threads, [&](int j) {
        const Job job = jobs[j];
        try {
            results[j] = run_one_member(e, tuned[job.point], grid,
                                        static_cast<std::uint64_t>(job.point),
                                        static_cast<std::uint64_t>(job.member));
        } catch (const std::exception& ex) {
            results[j].truncated = true;
            results[j].flag = std::string("error: ") + ex.what();
            results[j].eOut = std::nan("");
        }
    });

    for (std::size_t j = 0; j < jobs.size(); ++j)
        out.points[jobs[j].point].records.push_back(results[j]);

    for (auto& pt : out.points) {
        if (pt.failed) continue;
        double sum = 0.0, sum2 = 0.0;
        int n = 0;
        for (const auto& r : pt.records) {
            if (r.truncated && r.flag.rfind("error:", 0) == 0) continue;
            sum += r.eOut;
            sum2 += r.eOut * r.eOut;
            ++n;
        }
        pt.okRuns = n;
        if (n == 0) {
            pt.failed = true;
            pt.flag = pt.records.empty() ? "no-runs" : pt.records.front().flag;
            continue;
        }
        pt.eOutMean = sum / n;
        if (n > 1) {
            const double var = std::max(0.0, (sum2 - sum * sum / n) / (n - 1));
            pt.eOutStdErr = std::sqrt(var / n);
        }
        for (const auto& r : pt.records)
            if (r.truncated && pt.flag.empty()) pt.flag = r.flag;
    }

    if (companion) {
        try {
            out.cirEstimate = scan_cir(*companion).cir;
        } catch (const std::exception&) {
            out.cirEstimate = CirResult{};
        }
    }
    return out;
}

// contiguous ratio interval around the curve minimum where the ensemble
// mean drops below the elastic baseline; edges linearly interpolated
struct CoolingWindow {
    bool exists = false;
    double lo = 0.0, hi = 0.0;
    double minRatio = 0.0, minValue = 0.0;
};

inline CoolingWindow sub_baseline_window(const CoolingScanResult& scan) {
    std::vector<double> x, y;
    for (const auto& pt : scan.points) {
        if (pt.failed) continue;
        x.push_back(pt.ratio);
        y.push_back(pt.eOutMean - scan.elasticBaseline);
    }
    CoolingWindow w;
    if (x.size() < 2) return w;
    std::size_t iMin = 0;
    for (std::size_t i = 1; i < x.size(); ++i)
        if (y[i] < y[iMin]) iMin = i;
    if (y[iMin] >= 0.0) return w;
    w.exists = true;
    w.minRatio = x[iMin];
    w.minValue = y[iMin] + scan.elasticBaseline;
    // march outwards to the baseline crossings
    std::size_t i = iMin;
    while (i > 0 && y[i - 1] < 0.0) --i;
    if (i == 0) {
        w.lo = x.front();
    } else {
        const double f = y[i - 1] / (y[i - 1] - y[i]);
        w.lo = x[i - 1] + f * (x[i] - x[i - 1]);
    }
    i = iMin;
    while (i + 1 < x.size() && y[i + 1] < 0.0) ++i;
    if (i + 1 == x.size()) {
        w.hi = x.back();
    } else {
        const double f = y[i] / (y[i] - y[i + 1]);
        w.hi = x[i] + f * (x[i + 1] - x[i]);
    }
    return w;
}

// --------------------------------------------------------------- emission

inline void write_cir_csv(const CirScanResult& scan, const std::string& path) {
    CsvWriter csv(path, {"ratio", "k", "Re_f", "Im_f", "T", "R", "g1D", "flags"});
    for (const auto& pt : scan.points) {
        if (pt.failed) {
            csv.row({format_g17(pt.ratio), "", "", "", "", "", "", "failed:" + pt.flag});
            continue;
        }
        for (const auto& a : pt.amplitudes) {
            std::string flags;
            if (a.flagged) flags = a.flag;
            if (pt.g1d.pole) flags += flags.empty() ? "pole" : ";pole";
            csv.row({format_g17(pt.ratio), format_g17(a.k), format_g17(a.f.real()),
                     format_g17(a.f.imag()), format_g17(a.T), format_g17(a.R),
                     pt.g1d.pole ? "inf" : format_g17(pt.g1d.g1d), flags});
        }
    }
}

inline void write_cooling_csv(const CoolingScanResult& scan, const std::string& path) {
    CsvWriter csv(path, {"ratio", "aS", "e_in", "e_out_mean", "e_out_stderr", "baseline",
                         "n_ok", "flags"});
    for (const auto& pt : scan.points) {
        if (pt.failed) {
            csv.row({format_g17(pt.ratio), "", format_g17(scan.eIn), "", "",
                     format_g17(scan.elasticBaseline), "0", "failed:" + pt.flag});
            continue;
        }
        csv.row({format_g17(pt.ratio), format_g17(pt.aS), format_g17(scan.eIn),
                 format_g17(pt.eOutMean), format_g17(pt.eOutStdErr),
                 format_g17(scan.elasticBaseline), std::to_string(pt.okRuns), pt.flag});
    }
}

inline void write_collision_csv(const CollisionOutcome& out, const std::string& path) {
    CsvWriter csv(path, {"t", "ion_energy", "ion_kinetic", "force_norm", "atom_norm"});
    for (std::size_t i = 0; i < out.ionEnergy.size(); ++i)
        csv.row({format_g17(out.ionEnergy.t[i]), format_g17(out.ionEnergy.v[i]),
                 format_g17(out.ionKinetic.v[i]), format_g17(out.forceNorm.v[i]),
                 format_g17(out.atomNorm.v[i])});
}

inline json make_provenance(const ExperimentConfig& e, double wallSeconds,
                            const std::vector<std::string>& pointFlags) {
    json j;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(e.configHash));
    j["configHash"] = hash;
    j["seed"] = e.seed;
#ifdef QQC_GIT_DESCRIBE
    j["gitDescribe"] = QQC_GIT_DESCRIBE;
#else
    j["gitDescribe"] = "unknown";
#endif
    j["wallTime"] = wallSeconds;
    j["pointFlags"] = pointFlags;
    return j;
}

}  // namespace qqc
