#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "qqc/reference.hpp"
#include "qqc/traps.hpp"

using namespace qqc;

TEST_CASE("Mathieu stability classification", "[traps]") {
    CHECK(mathieu_stable(0.0, 0.2));
    CHECK(mathieu_stable(0.0, 0.5));
    CHECK_FALSE(mathieu_stable(0.0, 1.0));
    CHECK_FALSE(mathieu_stable(1.0, 0.1));  // inside the instability tongue at a = 1
    CHECK(mathieu_stable(0.05, 0.3));
    CHECK(mathieu_stable(-0.05, 0.5));
}

TEST_CASE("Mathieu instability edge on the q axis", "[traps]") {
    double lo = 0.7, hi = 1.1;
    REQUIRE(mathieu_stable(0.0, lo));
    REQUIRE_FALSE(mathieu_stable(0.0, hi));
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        (mathieu_stable(0.0, mid) ? lo : hi) = mid;
    }
    CHECK(std::abs(lo - ref::kMathieuEdgeQ) < 1e-5);
}

TEST_CASE("secular frequencies and trap validation", "[traps]") {
    const PaulTrapConfig trap = linear_paul_trap(10.0, 10.0, 0.2, 0.02, IonMode::rf);
    // x: a = -0.01, q = 0.2 -> (Omega/2) sqrt(a + q^2/2) = 0.5
    CHECK(trap.secularFrequency(0) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(trap.secularFrequency(1) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(trap.secularFrequency(2) == Catch::Approx(5.0 * std::sqrt(0.02)).epsilon(1e-12));
    CHECK_NOTHROW(trap.validate());
    CHECK(trap.defaultStep() * trap.driveFrequency < constants::two_pi / 10000.0);

    PaulTrapConfig bad = trap;
    bad.q = {1.2, -1.2, 0.0};  // beyond the first stability region
    CHECK_THROWS_AS(bad.validate(), StabilityError);
}

TEST_CASE("force is minus the gradient of the static potential", "[traps]") {
    const PaulTrapConfig trap = linear_paul_trap(7.0, 9.0, 0.3, 0.04, IonMode::secular);
    const std::array<double, 3> r{0.4, -0.7, 1.1};
    const auto f = ion_trap_force(trap, r, 0.37);
    const double h = 1e-6;
    for (int u = 0; u < 3; ++u) {
        auto rp = r, rm = r;
        rp[u] += h;
        rm[u] -= h;
        const double grad = (ion_trap_potential(trap, rp) - ion_trap_potential(trap, rm)) / (2.0 * h);
        CHECK(f[u] == Catch::Approx(-grad).margin(1e-6));
    }
}

namespace {
// dominant oscillation frequency from interpolated zero crossings
double crossing_frequency(const std::vector<double>& t, const std::vector<double>& x) {
    double first = 0.0, last = 0.0;
    int n = 0;
    for (std::size_t i = 1; i < x.size(); ++i) {
        if ((x[i - 1] < 0.0) == (x[i] < 0.0)) continue;
        const double tc = t[i - 1] + (t[i] - t[i - 1]) * x[i - 1] / (x[i - 1] - x[i]);
        if (n == 0) first = tc;
        last = tc;
        ++n;
    }
    if (n < 2) return 0.0;
    return constants::pi * (n - 1) / (last - first);
}
}  // namespace

TEST_CASE("rf trajectory oscillates at the secular frequency", "[traps]") {
    // Micromotion multiplies the slow envelope, so zero crossings of the full
    // rf trajectory sit at the secular crossings; q is small enough that the
    // lowest-order frequency formula is good to well under 1%.
    const PaulTrapConfig trap = linear_paul_trap(10.0, 10.0, 0.2, 0.02, IonMode::rf);
    IonState s;
    s.r = {1.0, 0.0, 0.8};
    const double dt = constants::two_pi / trap.driveFrequency / 200.0;
    const double tEnd = 30.0 * constants::two_pi / trap.secularFrequency(0);
    std::vector<double> t, x, z;
    double time = 0.0;
    while (time < tEnd) {
        t.push_back(time);
        x.push_back(s.r[0]);
        z.push_back(s.r[2]);
        step_ion_verlet(trap, s, time, dt);
        time += dt;
    }
    const double wx = crossing_frequency(t, x);
    const double wz = crossing_frequency(t, z);
    CHECK(std::abs(wx - trap.secularFrequency(0)) / trap.secularFrequency(0) < 0.01);
    // z has q = 0: the static-endcap formula is exact there
    CHECK(std::abs(wz - trap.secularFrequency(2)) / trap.secularFrequency(2) < 1e-4);
}

TEST_CASE("secular-mode energy stays put over ten thousand steps", "[traps]") {
    const PaulTrapConfig trap = linear_paul_trap(10.0, 10.0, 0.2, 0.02, IonMode::secular);
    IonState s;
    s.r = {1.0, -0.5, 0.8};
    s.v = {0.0, 0.3, -0.1};
    const double dt = trap.defaultStep();
    const double e0 = ion_energy(trap, s);
    double worst = 0.0;
    double time = 0.0;
    for (int i = 0; i < 10000; ++i) {
        step_ion_verlet(trap, s, time, dt);
        time += dt;
        worst = std::max(worst, std::abs(ion_energy(trap, s) - e0) / e0);
    }
    CHECK(worst < 1e-8);
}
