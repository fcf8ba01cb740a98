#include <doctest.h>

#include <cmath>
#include <random>

#include "gridrisk/powerflow.hpp"
#include "gridrisk/topology.hpp"
#include "helpers.hpp"

using namespace gridrisk;

namespace {

// Closed-form solution of the lossless two-bus case with Q = 0 load:
// writing V2 = u + jw against the unit slack, the load equations give
// w = -P*x and u^2 - u + w^2 = 0.
struct TwoBusOracle {
    double v2, theta2;
    TwoBusOracle(double p_load, double x) {
        const double w = -p_load * x;
        const double u = (1.0 + std::sqrt(1.0 - 4.0 * w * w)) / 2.0;
        v2 = std::hypot(u, w);
        theta2 = std::atan2(w, u);
    }
};

// Mismatch recomputation that shares no code with the solver: plain dense
// power equations evaluated at the returned state against the solution's
// declared injection targets.
double recompute_mismatch(const GridCase& grid, const std::vector<ComponentRef>& outages,
                          const PowerFlowSolution& sol) {
    const AdmittanceMatrix ybus = build_ybus(grid, outages);
    const Eigen::MatrixXcd y = Eigen::MatrixXcd(ybus.y);
    const int n = grid.n_bus();
    Eigen::VectorXcd v(n);
    for (int b = 0; b < n; ++b) v[b] = std::polar(sol.v_mag[b], sol.v_ang[b]);
    double norm = 0.0;
    for (int i = 0; i < n; ++i) {
        if (sol.bus_role[i] == PowerFlowSolution::BusRole::DeEnergized ||
            sol.bus_role[i] == PowerFlowSolution::BusRole::Anchor)
            continue;
        std::complex<double> injected = 0.0;
        for (int k = 0; k < n; ++k) injected += y(i, k) * v[k];
        const std::complex<double> s = v[i] * std::conj(injected);
        norm = std::max(norm, std::abs(sol.p_spec[i] - s.real()));
        if (sol.bus_role[i] == PowerFlowSolution::BusRole::PQ)
            norm = std::max(norm, std::abs(sol.q_spec[i] - s.imag()));
    }
    return norm;
}

// Three machines, distinct headroom, for the redispatch rule.
GridCase three_gen_case(double h0, double h1, double h2) {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, 0.9, 1.1},
        {1, BusKind::PV, 1.0, 0.0, 0.0, 0.9, 1.1},
        {2, BusKind::PV, 1.0, 3.0, 0.5, 0.9, 1.1},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.01, 0.1, 0.0, 1.0, 10.0, true},
        {1, ComponentClass::Line, 1, 2, 0.01, 0.1, 0.0, 1.0, 10.0, true},
        {2, ComponentClass::Line, 0, 2, 0.01, 0.1, 0.0, 1.0, 10.0, true},
    };
    std::vector<Generator> gens = {
        {0, 0, 1.0, 0.0, 1.0 + h0, -5.0, 5.0, 100.0, 4.0, 2.0, 0.3, true},
        {1, 1, 1.0, 0.0, 1.0 + h1, -5.0, 5.0, 100.0, 4.0, 2.0, 0.3, true},
        {2, 2, 1.0, 0.0, 1.0 + h2, -5.0, 5.0, 100.0, 4.0, 2.0, 0.3, true},
    };
    return make_grid_case("three-gen", 100.0, 50.0, std::move(buses), std::move(branches),
                          std::move(gens));
}

} // namespace

TEST_SUITE("powerflow") {

TEST_CASE("redispatch without generator outages is the base dispatch") {
    const GridCase grid = three_gen_case(0.5, 1.5, 0.0);
    const Dispatch base = base_dispatch(grid);
    const Dispatch d = redispatch(grid, {{ComponentClass::Line, 0}});
    CHECK(d.feasible);
    CHECK(d.gen_p == base.gen_p);
}

TEST_CASE("lost generation spreads proportionally to headroom") {
    const GridCase grid = three_gen_case(0.5, 1.5, 0.0);
    const Dispatch d = redispatch(grid, {{ComponentClass::Generator, 0}});
    REQUIRE(d.feasible);
    CHECK(d.gen_p.count(0) == 0); // outaged unit absent
    CHECK(d.gen_p.at(1) == doctest::Approx(2.0).epsilon(1e-12)); // all headroom used here
    CHECK(d.gen_p.at(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("redispatch beyond total headroom is an infeasibility marker") {
    const GridCase grid = three_gen_case(0.5, 0.2, 0.1);
    const Dispatch d = redispatch(grid, {{ComponentClass::Generator, 0}});
    CHECK_FALSE(d.feasible);
    CHECK(d.unserved_p == doctest::Approx(1.0 - 0.3).epsilon(1e-12));
    CHECK(d.gen_p.at(1) == doctest::Approx(1.2)); // pinned at p_max
    CHECK(d.gen_p.at(2) == doctest::Approx(1.1));
}

TEST_CASE("post-redispatch totals conserve pre-contingency generation") {
    const GridCase& grid = testutil::ieee118();
    const Dispatch base = base_dispatch(grid);
    double total_before = 0.0;
    for (const auto& [id, p] : base.gen_p) total_before += p;

    std::mt19937 rng(5);
    std::uniform_int_distribution<int> pick(0, grid.n_generators() - 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ComponentRef> outages = {{ComponentClass::Generator, pick(rng)}};
        if (trial % 2) {
            int other = pick(rng);
            if (other != outages[0].id) outages.push_back({ComponentClass::Generator, other});
        }
        const Dispatch d = redispatch(grid, outages);
        REQUIRE(d.feasible);
        double total_after = 0.0;
        for (const auto& [id, p] : d.gen_p) total_after += p;
        CHECK(total_after == doctest::Approx(total_before).epsilon(1e-12));
    }
}

TEST_CASE("two-bus solve matches the closed form") {
    const GridCase grid = testutil::two_bus(1.0, 0.0, 0.1);
    SolveOptions tight;
    tight.tol_pf = 1e-12; // oracle comparison at 1e-10 needs headroom
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid), tight);
    REQUIRE(sol.converged);
    const TwoBusOracle oracle(1.0, 0.1);
    CHECK(std::abs(sol.v_mag[1] - oracle.v2) < 1e-10);
    CHECK(std::abs(sol.v_ang[1] - oracle.theta2) < 1e-10);
    CHECK(sol.slack_p == doctest::Approx(1.0).epsilon(1e-9)); // lossless line
}

TEST_CASE("zero-load network converges instantly to setpoints") {
    const GridCase grid = testutil::two_bus(0.0, 0.0);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 1);
    CHECK(sol.v_mag[0] == 1.0);
    CHECK(sol.v_mag[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sol.v_ang[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("load beyond the static transfer limit diverges") {
    // lossless limit at unit voltage: P_max = V^2 / (2x) = 5 pu
    for (double p : {5.5, 12.0}) {
        const GridCase grid = testutil::two_bus(p, 0.0, 0.1);
        const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
        CHECK_FALSE(sol.converged);
        CHECK_FALSE(sol.failure_reason.empty());
    }
}

TEST_CASE("fixture base case converges with power balance") {
    const GridCase& grid = testutil::ieee118();
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    CHECK(sol.iterations <= 10);

    // generation - load - losses = 0, losses from test-side branch currents
    double generation = 0.0;
    for (const auto& [id, p] : sol.gen_p) generation += p;
    double load = 0.0;
    for (const Bus& bus : grid.buses) load += bus.load_p;
    double losses = 0.0;
    for (const Branch& br : grid.branches) {
        const std::complex<double> vf = std::polar(sol.v_mag[br.from_bus], sol.v_ang[br.from_bus]);
        const std::complex<double> vt = std::polar(sol.v_mag[br.to_bus], sol.v_ang[br.to_bus]);
        const std::complex<double> ys = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> yc(0.0, br.b_shunt / 2.0);
        const double a = br.tap_ratio;
        const std::complex<double> i_f = (ys + yc) / (a * a) * vf - ys / a * vt;
        const std::complex<double> i_t = (ys + yc) * vt - ys / a * vf;
        losses += (vf * std::conj(i_f)).real() + (vt * std::conj(i_t)).real();
    }
    CHECK(std::abs(generation - load - losses) < 1e-6);
}

TEST_CASE("mismatch certificate: independent recompute agrees") {
    const GridCase& grid = testutil::ieee118();
    const std::vector<std::vector<ComponentRef>> cases = {
        {},
        {{ComponentClass::Line, 17}},
        {{ComponentClass::Generator, 5}},
        {{ComponentClass::Line, 3}, {ComponentClass::Transformer, 2}},
    };
    for (const auto& outages : cases) {
        const Dispatch d = redispatch(grid, outages);
        const PowerFlowSolution sol = solve_power_flow(grid, outages, d);
        REQUIRE(sol.converged);
        const double recomputed = recompute_mismatch(grid, outages, sol);
        CHECK(recomputed < 1e-8);
        CHECK(std::abs(recomputed - sol.max_mismatch) < 1e-12);
    }
}

TEST_CASE("warm start lands on the flat-start fixed point") {
    const GridCase& grid = testutil::ieee118();
    const PowerFlowSolution base = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(base.converged);

    const std::vector<std::vector<ComponentRef>> cases = {
        {{ComponentClass::Line, 0}},
        {{ComponentClass::Line, 17}},
        {{ComponentClass::Generator, 8}},
    };
    for (const auto& outages : cases) {
        const Dispatch d = redispatch(grid, outages);
        SolveOptions flat;
        const PowerFlowSolution cold = solve_power_flow(grid, outages, d, flat);
        SolveOptions warm;
        warm.warm_start = &base;
        const PowerFlowSolution hot = solve_power_flow(grid, outages, d, warm);
        REQUIRE(cold.converged);
        REQUIRE(hot.converged);
        CHECK((cold.v_mag - hot.v_mag).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((cold.v_ang - hot.v_ang).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("clean solution reports no violations") {
    const GridCase grid = testutil::two_bus(1.0, 0.0, 0.1, 0.0, /*rating=*/2.0);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    const ViolationReport report = check_limits(sol, grid);
    CHECK_FALSE(report.any);
    CHECK(report.thermal.empty());
    CHECK(report.voltage.empty());
}

TEST_CASE("thermal overload lists the loaded end") {
    // rating below the actual ~1 pu transfer
    const GridCase grid = testutil::two_bus(1.0, 0.0, 0.1, 0.0, /*rating=*/0.9);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    const ViolationReport report = check_limits(sol, grid);
    CHECK(report.any);
    REQUIRE(!report.thermal.empty());
    CHECK(report.thermal.front().first == ComponentRef{ComponentClass::Line, 0});
    CHECK(report.thermal.front().second > 1.0);
    CHECK(report.thermal.front().second ==
          doctest::Approx(sol.branch_flow[0][0] / 0.9).epsilon(1e-12));
}

TEST_CASE("voltage band violation lists bus, value and bound") {
    const TwoBusOracle oracle(2.0, 0.1);
    const GridCase grid = testutil::two_bus(2.0, 0.0, 0.1, 0.0, 50.0, /*vmin=*/0.98, 1.5);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    REQUIRE(oracle.v2 < 0.98);
    const ViolationReport report = check_limits(sol, grid);
    CHECK(report.any);
    REQUIRE(report.voltage.size() == 1);
    CHECK(report.voltage[0].bus == 1);
    CHECK(report.voltage[0].v == doctest::Approx(oracle.v2).epsilon(1e-9));
    CHECK(report.voltage[0].bound == 0.98);
}

TEST_CASE("check_limits on a non-converged solution is a contract error") {
    PowerFlowSolution bad;
    bad.converged = false;
    CHECK_THROWS_AS(check_limits(bad, testutil::two_bus()), std::logic_error);
}

TEST_CASE("reactive limits pin the bus at its bound") {
    // PV machine with a tight reactive ceiling feeding a var-hungry load
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, 0.5, 1.5},
        {1, BusKind::PV, 1.05, 0.5, 0.45, 0.5, 1.5},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.02, 0.2, 0.0, 1.0, 50.0, true},
    };
    std::vector<Generator> gens = {
        {0, 0, 0.5, 0.0, 5.0, -5.0, 5.0, 100.0, 4.0, 2.0, 0.3, true},
        {1, 1, 0.3, 0.0, 1.0, -0.1, 0.1, 100.0, 4.0, 2.0, 0.3, true},
    };
    const GridCase grid = make_grid_case("q-limited", 100.0, 50.0, buses, branches, gens);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    CHECK(sol.bus_role[1] == PowerFlowSolution::BusRole::PQ); // switched off voltage control
    CHECK(sol.gen_q.at(1) == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(sol.v_mag[1] < 1.05);
}

TEST_CASE("anchor outside the main island demands re-anchoring") {
    const GridCase grid = testutil::two_bus();
    SolveOptions options;
    options.anchor_bus = 1; // stranded side after the line outage
    CHECK_THROWS_AS(
        solve_power_flow(grid, {{ComponentClass::Line, 0}}, base_dispatch(grid), options),
        ValidationError);
}

TEST_CASE("island without sources reports no_source") {
    // slack bus carries no machine and the only generator is outaged
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.3, 0.1, 0.9, 1.1},
        {1, BusKind::PV, 1.0, 0.0, 0.0, 0.9, 1.1},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.01, 0.1, 0.0, 1.0, 10.0, true},
    };
    std::vector<Generator> gens = {{0, 1, 0.3, 0.0, 2.0, -1.0, 1.0, 100.0, 4.0, 2.0, 0.3, true}};
    const GridCase grid = make_grid_case("sourceless", 100.0, 50.0, buses, branches, gens);
    const PowerFlowSolution sol =
        solve_power_flow(grid, {{ComponentClass::Generator, 0}},
                         redispatch(grid, {{ComponentClass::Generator, 0}}));
    CHECK_FALSE(sol.converged);
    CHECK(sol.failure_reason == "no_source");
}

} // TEST_SUITE
