#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "qqc/dynamics.hpp"
#include "qqc/reference.hpp"

using namespace qqc;

namespace {

std::shared_ptr<const Grid> planar(int nz, double zHalf, int nx, double xHalf) {
    GridSpec s;
    s.mode = GridMode::planar2d;
    s.nz = nz;
    s.zHalf = zHalf;
    s.nx = nx;
    s.xHalf = xHalf;
    return build_grid(s);
}

double l2_diff(const AtomField& a, const AtomField& b) {
    const Grid& g = *a.grid;
    double acc = 0.0;
    for (int row = 0; row < g.rows; ++row) {
        const auto* pa = a.psi.data() + g.index(row, 0);
        const auto* pb = b.psi.data() + g.index(row, 0);
        double rowAcc = 0.0;
        for (int i = 0; i < g.nz; ++i) rowAcc += std::norm(pa[i] - pb[i]);
        acc += rowAcc * g.rowWeight[row];
    }
    return std::sqrt(acc * g.dz());
}

InteractionModel soft_model() {
    InteractionModel m;
    m.longRangeCoefficient = 0.05;
    m.regularizationLength = 0.75;  // wide enough that the grid resolves it
    m.reducedMass = 30.0 / 31.0;
    return m;
}

}  // namespace

TEST_CASE("without an interaction the two subsystems ignore each other", "[coupled]") {
    StepperConfig cfg;
    cfg.dt = 0.01;
    cfg.absorber.enabled = false;
    const PaulTrapConfig trap = linear_paul_trap(30.0, 8.0, 0.4, 0.03, IonMode::secular);
    CoupledSim sim(planar(128, 16.0, 16, 4.0), WaveguideConfig{1.0, 1.0}, trap,
                   InteractionTerm{}, cfg);
    sim.ion().r = {0.5, 0.2, 1.0};
    sim.ion().v = {0.1, 0.0, -0.3};
    sim.initPacket(0.0, 0.0, 2.0);
    const double e0 = ion_energy(trap, sim.ion());
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        sim.step();
        worst = std::max(worst, std::abs(ion_energy(trap, sim.ion()) - e0) / e0);
    }
    // ion feels only the trap: bounded Verlet oscillation at the shared dt
    CHECK(worst < 1e-5);
    const double expect = ref::gaussian_width(2.0, 5.0, 1.0);
    CHECK(std::abs(sim.field().widthZ() - expect) / expect < 1e-6);
    CHECK(sim.accumulatedImpulse()[2] == 0.0);
}

TEST_CASE("head-on geometry never leaves the xz plane", "[coupled]") {
    StepperConfig cfg;
    cfg.dt = 0.01;
    cfg.absorber.enabled = false;
    const InteractionModel model = soft_model();
    InteractionTerm term;
    term.model = &model;
    const PaulTrapConfig trap = linear_paul_trap(30.0, 8.0, 0.4, 0.03, IonMode::secular);
    CoupledSim sim(planar(128, 16.0, 24, 3.0), WaveguideConfig{1.0, 1.0}, trap, term, cfg);
    sim.ion().r = {0.4, 0.0, 0.2};
    sim.ion().v = {-0.1, 0.0, 0.3};
    sim.initPacket(-6.5, 1.2, 1.2);
    for (int i = 0; i < 800; ++i) sim.step();
    CHECK(std::abs(sim.ion().r[1]) < 1e-12);
    CHECK(std::abs(sim.ion().v[1]) < 1e-12);
    CHECK(std::abs(sim.accumulatedImpulse()[1]) < 1e-12);
    // and the collision actually happened
    CHECK(std::abs(sim.accumulatedImpulse()[2]) > 1e-4);
}

TEST_CASE("back-action impulse pairs with the atom momentum change", "[coupled]") {
    StepperConfig cfg;
    cfg.dt = 0.01;
    cfg.absorber.enabled = false;
    const InteractionModel model = soft_model();
    InteractionTerm term;
    term.model = &model;
    const PaulTrapConfig trap = linear_paul_trap(30.0, 8.0, 0.4, 0.03, IonMode::secular);
    CoupledSim sim(planar(128, 16.0, 24, 3.0), WaveguideConfig{1.0, 1.0}, trap, term, cfg);
    sim.initPacket(-6.5, 1.2, 1.2);
    const double p0 = sim.meanKz();
    const double e0 = sim.totalEnergy();
    double worstDrift = 0.0;
    for (int i = 0; i < 1200; ++i) {
        sim.step();
        if (i % 100 == 99)
            worstDrift = std::max(worstDrift, std::abs(sim.totalEnergy() - e0) / std::abs(e0));
    }
    const double dP = sim.meanKz() - p0;  // unit norm: mean k_z is the momentum
    const double impulse = sim.accumulatedImpulse()[2];
    INFO("atom dP = " << dP << ", ion impulse = " << impulse);
    CHECK(std::abs(impulse) > 1e-3);  // a real collision
    CHECK(std::abs(dP + impulse) / std::max(std::abs(dP), std::abs(impulse)) < 1e-4);
    CHECK(worstDrift < 1e-4);
}

TEST_CASE("an effectively infinite mass reproduces the frozen-ion field", "[coupled]") {
    const InteractionModel model = soft_model();
    InteractionTerm term;
    term.model = &model;
    auto grid = planar(128, 16.0, 24, 3.0);

    StepperConfig frozenCfg;
    frozenCfg.dt = 0.01;
    frozenCfg.absorber.enabled = false;
    frozenCfg.frozenIon = true;
    CoupledSim frozen(grid, WaveguideConfig{1.0, 1.0}, std::nullopt, term, frozenCfg);
    frozen.initPacket(-6.5, 1.2, 1.2);

    StepperConfig heavyCfg;
    heavyCfg.dt = 0.01;
    heavyCfg.absorber.enabled = false;
    const PaulTrapConfig trap = linear_paul_trap(1e9, 8.0, 0.4, 0.03, IonMode::secular);
    CoupledSim heavy(grid, WaveguideConfig{1.0, 1.0}, trap, term, heavyCfg);
    heavy.initPacket(-6.5, 1.2, 1.2);

    for (int i = 0; i < 1000; ++i) {
        frozen.step();
        heavy.step();
    }
    CHECK(l2_diff(frozen.field(), heavy.field()) < 1e-3);
    CHECK(std::abs(heavy.ion().r[2]) < 1e-6);
}
