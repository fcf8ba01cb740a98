#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

#include "gridrisk/smallsignal.hpp"
#include "helpers.hpp"

using namespace gridrisk;

namespace {

// Characteristic polynomial via the Faddeev-LeVerrier recurrence followed by
// Durand-Kerner root finding: an eigenvalue oracle sharing nothing with the
// QR path under test.
std::vector<std::complex<double>> charpoly_roots(const Eigen::MatrixXd& a) {
    const int n = static_cast<int>(a.rows());
    std::vector<double> coeff(n + 1, 0.0); // p(x) = x^n + c1 x^(n-1) + ... + cn
    coeff[0] = 1.0;
    Eigen::MatrixXd m = a;
    double c = -m.trace();
    coeff[1] = c;
    for (int k = 2; k <= n; ++k) {
        m = a * (m + c * Eigen::MatrixXd::Identity(n, n));
        c = -m.trace() / k;
        coeff[k] = c;
    }

    using C = std::complex<double>;
    auto eval = [&](C x) {
        C acc = coeff[0];
        for (int k = 1; k <= n; ++k) acc = acc * x + coeff[k];
        return acc;
    };
    std::vector<C> roots(n);
    const C seed(0.4, 0.9);
    C power = 1.0;
    for (int k = 0; k < n; ++k) {
        power *= seed;
        roots[k] = power;
    }
    for (int iter = 0; iter < 600; ++iter) {
        double movement = 0.0;
        for (int k = 0; k < n; ++k) {
            C denom = 1.0;
            for (int j = 0; j < n; ++j)
                if (j != k) denom *= roots[k] - roots[j];
            const C delta = eval(roots[k]) / denom;
            roots[k] -= delta;
            movement = std::max(movement, std::abs(delta));
        }
        if (movement < 1e-13) break;
    }
    return roots;
}

void check_spectrum_match(const std::vector<std::complex<double>>& got,
                          std::vector<std::complex<double>> expected, double tol) {
    REQUIRE(got.size() == expected.size());
    for (const auto& lambda : got) {
        double best = 1e100;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            const double d = std::abs(lambda - expected[i]);
            if (d < best) {
                best = d;
                best_idx = i;
            }
        }
        CHECK(best < tol);
        expected.erase(expected.begin() + best_idx);
    }
}

StateMatrix wrap(Eigen::MatrixXd a) {
    StateMatrix m;
    m.a = std::move(a);
    return m;
}

// SMIB oracle quantities recovered from the solved operating point with
// plain phasor arithmetic.
struct SmibOracle {
    double k, m, d;
    SmibOracle(const GridCase& grid, const PowerFlowSolution& sol, double x_line) {
        const Generator& machine = grid.generators[1];
        const Generator& reference = grid.generators[0];
        const double omega_s = 2.0 * M_PI * grid.frequency;
        const double x_total = machine.xd_transient * grid.base_mva / machine.mva_base + x_line +
                               reference.xd_transient * grid.base_mva / reference.mva_base;

        auto internal_emf = [&](const Generator& g) {
            const std::complex<double> v = std::polar(sol.v_mag[g.bus], sol.v_ang[g.bus]);
            const std::complex<double> s(sol.gen_p.at(g.id), sol.gen_q.at(g.id));
            const std::complex<double> i = std::conj(s / v);
            const double x = g.xd_transient * grid.base_mva / g.mva_base;
            return v + std::complex<double>(0.0, x) * i;
        };
        const std::complex<double> e1 = internal_emf(machine);
        const std::complex<double> e0 = internal_emf(reference);
        const double delta0 = std::arg(e1) - std::arg(e0);
        k = std::abs(e1) * std::abs(e0) * std::cos(delta0) / x_total;
        m = 2.0 * machine.inertia_h * machine.mva_base / (omega_s * grid.base_mva);
        d = machine.damping_d * machine.mva_base / grid.base_mva;
    }
    std::vector<std::complex<double>> eigenpair() const {
        const std::complex<double> disc =
            std::sqrt(std::complex<double>(d * d / (m * m) - 4.0 * k / m, 0.0));
        return {(-d / m + disc) / 2.0, (-d / m - disc) / 2.0};
    }
};

LinearizationResult linearize_smib(const GridCase& grid, PowerFlowSolution& sol_out) {
    sol_out = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol_out.converged);
    return linearize(grid, {}, sol_out, dynamics_from_case(grid));
}

} // namespace

TEST_SUITE("smallsignal") {

TEST_CASE("SMIB eigenpair matches the analytic quadratic") {
    const double x_line = 0.4;
    const GridCase grid = testutil::smib(0.5, 2.0, x_line);
    PowerFlowSolution sol;
    const LinearizationResult lin = linearize_smib(grid, sol);
    REQUIRE(lin.status == LinearizeStatus::Ok);
    REQUIRE(lin.matrix.a.rows() == 2);
    CHECK(lin.matrix.reference_id == 0);
    REQUIRE(lin.matrix.machine_ids == std::vector<int>{1});

    const SmibOracle oracle(grid, sol, x_line);
    const EigenOutcome eig = compute_eigenvalues(lin.matrix);
    REQUIRE(eig.ok);
    const double scale = std::abs(oracle.eigenpair()[0]);
    check_spectrum_match(eig.report.eigenvalues, oracle.eigenpair(), 1e-6 * std::max(1.0, scale));
    CHECK_FALSE(eig.report.unstable); // positive damping
}

TEST_CASE("undamped machine at zero transfer gives a pure imaginary pair") {
    const double x_line = 0.4;
    const GridCase grid = testutil::smib(0.0, 0.0, x_line);
    PowerFlowSolution sol;
    const LinearizationResult lin = linearize_smib(grid, sol);
    REQUIRE(lin.status == LinearizeStatus::Ok);

    const SmibOracle oracle(grid, sol, x_line);
    const EigenOutcome eig = compute_eigenvalues(lin.matrix);
    REQUIRE(eig.ok);
    const double w0 = std::sqrt(oracle.k / oracle.m);
    for (const auto& lambda : eig.report.eigenvalues) {
        CHECK(std::abs(lambda.real()) < 1e-9);
        CHECK(std::abs(std::abs(lambda.imag()) - w0) < 1e-6 * w0);
    }
    // spectral abscissa 0 falls under the non-negative rule
    CHECK(eig.report.unstable);
}

TEST_CASE("two identical machines leave one relative swing mode") {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, 0.5, 1.5},
        {1, BusKind::PV, 1.0, 0.0, 0.0, 0.5, 1.5},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.0, 0.3, 0.0, 1.0, 50.0, true},
    };
    std::vector<Generator> gens = {
        {0, 0, 0.0, 0.0, 2.0, -5.0, 5.0, 100.0, 4.0, 2.0, 0.2, true},
        {1, 1, 0.4, 0.0, 2.0, -5.0, 5.0, 100.0, 4.0, 2.0, 0.2, true},
    };
    const GridCase grid = make_grid_case("twin", 100.0, 50.0, buses, branches, gens);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    const LinearizationResult lin = linearize(grid, {}, sol, dynamics_from_case(grid));
    REQUIRE(lin.status == LinearizeStatus::Ok);
    REQUIRE(lin.matrix.a.rows() == 2);
    CHECK(lin.matrix.reference_id == 0); // tie on p_max broken by id

    // identical machines: the inter-machine mode solves
    // lambda^2 + (D/M) lambda + 2K/M = 0, K recovered by hand from the
    // series chain between the internal nodes.
    const double omega_s = 2.0 * M_PI * grid.frequency;
    const double m = 2.0 * 4.0 * 100.0 / (omega_s * 100.0);
    const double d = 2.0 * 100.0 / 100.0;
    const double x_total = 0.2 + 0.3 + 0.2;
    auto emf = [&](const Generator& g) {
        const std::complex<double> v = std::polar(sol.v_mag[g.bus], sol.v_ang[g.bus]);
        const std::complex<double> s(sol.gen_p.at(g.id), sol.gen_q.at(g.id));
        return v + std::complex<double>(0.0, 0.2) * std::conj(s / v);
    };
    const std::complex<double> e0 = emf(grid.generators[0]);
    const std::complex<double> e1 = emf(grid.generators[1]);
    const double k = std::abs(e0) * std::abs(e1) * std::cos(std::arg(e1) - std::arg(e0)) / x_total;

    const std::complex<double> disc =
        std::sqrt(std::complex<double>(d * d / (m * m) - 8.0 * k / m, 0.0));
    std::vector<std::complex<double>> expected = {(-d / m + disc) / 2.0, (-d / m - disc) / 2.0};
    const EigenOutcome eig = compute_eigenvalues(lin.matrix);
    REQUIRE(eig.ok);
    check_spectrum_match(eig.report.eigenvalues, expected, 1e-6 * std::abs(expected[0]));
}

TEST_CASE("diagonal matrix spectrum") {
    Eigen::MatrixXd a(2, 2);
    a << -1, 0, 0, -2;
    const EigenOutcome eig = compute_eigenvalues(wrap(a));
    REQUIRE(eig.ok);
    check_spectrum_match(eig.report.eigenvalues, {{-1.0, 0.0}, {-2.0, 0.0}}, 1e-12);
    CHECK(eig.report.spectral_abscissa == doctest::Approx(-1.0));
    CHECK_FALSE(eig.report.unstable);
}

TEST_CASE("rotation matrix sits on the boundary and is unstable") {
    Eigen::MatrixXd a(2, 2);
    a << 0, 1, -1, 0;
    const EigenOutcome eig = compute_eigenvalues(wrap(a));
    REQUIRE(eig.ok);
    check_spectrum_match(eig.report.eigenvalues, {{0.0, 1.0}, {0.0, -1.0}}, 1e-12);
    CHECK(std::abs(eig.report.spectral_abscissa) < 1e-12);
    CHECK(eig.report.unstable); // non-negative real part rule
}

TEST_CASE("random spectra match the characteristic-polynomial oracle") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> entry(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd a(10, 10);
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) a(i, j) = entry(rng);
        const EigenOutcome eig = compute_eigenvalues(wrap(a));
        REQUIRE(eig.ok);
        CHECK(eig.report.eigenvalues.size() == 10);
        check_spectrum_match(eig.report.eigenvalues, charpoly_roots(a), 1e-6);
    }
}

TEST_CASE("eigenvalue sum reproduces the trace") {
    std::mt19937 rng(123);
    std::uniform_real_distribution<double> entry(-2.0, 2.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 4 + trial;
        Eigen::MatrixXd a(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = entry(rng);
        const EigenOutcome eig = compute_eigenvalues(wrap(a));
        REQUIRE(eig.ok);
        std::complex<double> sum = 0.0;
        for (const auto& lambda : eig.report.eigenvalues) sum += lambda;
        CHECK(std::abs(sum.real() - a.trace()) < 1e-8 * a.norm());
        CHECK(std::abs(sum.imag()) < 1e-8 * a.norm());
    }
}

TEST_CASE("complex eigenvalues close under conjugation") {
    std::mt19937 rng(321);
    std::uniform_real_distribution<double> entry(-1.5, 1.5);
    Eigen::MatrixXd a(8, 8);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) a(i, j) = entry(rng);
    const EigenOutcome eig = compute_eigenvalues(wrap(a));
    REQUIRE(eig.ok);
    for (const auto& lambda : eig.report.eigenvalues) {
        if (std::abs(lambda.imag()) < 1e-12) continue;
        double best = 1e100;
        for (const auto& mate : eig.report.eigenvalues)
            best = std::min(best, std::abs(mate - std::conj(lambda)));
        CHECK(best < 1e-9);
    }
}

TEST_CASE("uniform angle shifts leave the state matrix unchanged") {
    const GridCase grid = testutil::smib(0.5);
    PowerFlowSolution sol;
    const LinearizationResult lin = linearize_smib(grid, sol);
    REQUIRE(lin.status == LinearizeStatus::Ok);

    PowerFlowSolution shifted = sol;
    shifted.v_ang.array() += 0.37;
    const LinearizationResult lin2 = linearize(grid, {}, shifted, dynamics_from_case(grid));
    REQUIRE(lin2.status == LinearizeStatus::Ok);
    // the shift enters only through rounded phasor rotations
    CHECK((lin.matrix.a - lin2.matrix.a).norm() < 1e-9 * (1.0 + lin.matrix.a.norm()));
}

TEST_CASE("more damping moves the oscillatory pair left") {
    double previous = 0.0;
    bool first = true;
    // stay under D^2 < 4MK so the pair remains complex
    for (double d : {0.02, 0.08, 0.2, 0.3}) {
        const GridCase grid = testutil::smib(0.5, d);
        PowerFlowSolution sol;
        const LinearizationResult lin = linearize_smib(grid, sol);
        REQUIRE(lin.status == LinearizeStatus::Ok);
        const SmibOracle oracle(grid, sol, 0.4);
        REQUIRE(oracle.d * oracle.d < 4.0 * oracle.m * oracle.k); // still oscillatory
        const EigenOutcome eig = compute_eigenvalues(lin.matrix);
        REQUIRE(eig.ok);
        const double re = eig.report.eigenvalues.front().real();
        if (!first) CHECK(re < previous - 1e-9);
        previous = re;
        first = false;
    }
}

TEST_CASE("single-machine island degenerates without a verdict") {
    const GridCase grid = testutil::two_bus(0.2, 0.05);
    const PowerFlowSolution sol = solve_power_flow(grid, {}, base_dispatch(grid));
    REQUIRE(sol.converged);
    const LinearizationResult lin = linearize(grid, {}, sol, dynamics_from_case(grid));
    CHECK(lin.status == LinearizeStatus::Degenerate);
}

TEST_CASE("linearize insists on a converged solution") {
    PowerFlowSolution bad;
    bad.converged = false;
    CHECK_THROWS_AS(linearize(testutil::smib(), {}, bad, dynamics_from_case(testutil::smib())),
                    std::logic_error);
}

TEST_CASE("dynamics CSV overrides per machine") {
    const GridCase grid = testutil::smib();
    const std::string csv =
        "generator_id,h_seconds,d_pu,xd_transient_pu\n"
        "1,6.5,1.2,0.22\n";
    const DynamicParams params = load_dynamics_csv(csv, grid);
    CHECK(params.per_generator.at(1).inertia_h == 6.5);
    CHECK(params.per_generator.at(1).damping_d == 1.2);
    CHECK(params.per_generator.at(1).xd_transient == 0.22);
    CHECK(params.per_generator.at(0).inertia_h == grid.generators[0].inertia_h);
    CHECK(params.omega_s == doctest::Approx(2.0 * M_PI * 50.0));
}

TEST_CASE("dynamics CSV rejects unknown machines and bad values") {
    const GridCase grid = testutil::smib();
    CHECK_THROWS_AS(
        load_dynamics_csv("generator_id,h_seconds,d_pu,xd_transient_pu\n9,4,2,0.3\n", grid),
        ValidationError);
    CHECK_THROWS_AS(
        load_dynamics_csv("generator_id,h_seconds,d_pu,xd_transient_pu\n1,-4,2,0.3\n", grid),
        ValidationError);
    CHECK_THROWS_AS(load_dynamics_csv("id,h\n1,4\n", grid), ParseError);
}

} // TEST_SUITE
