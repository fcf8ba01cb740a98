#include "gridrisk/smallsignal.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace gridrisk {

DynamicParams dynamics_from_case(const GridCase& grid) {
    DynamicParams params;
    params.omega_s = 2.0 * M_PI * grid.frequency;
    for (const Generator& g : grid.generators)
        params.per_generator[g.id] = {g.inertia_h, g.damping_d, g.xd_transient};
    return params;
}

DynamicParams load_dynamics_csv(const std::string& text, const GridCase& grid) {
    DynamicParams params = dynamics_from_case(grid);

    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    std::vector<std::string> breaches;
    while (std::getline(in, line)) {
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        const std::string t = line.substr(first, last - first + 1);
        if (t.empty() || t[0] == '#') continue;

        std::vector<std::string> fields;
        std::istringstream ls(t);
        std::string field;
        while (std::getline(ls, field, ',')) fields.push_back(field);
        if (!header_seen) {
            if (fields.size() != 4)
                throw ParseError("expected header 'generator_id,h_seconds,d_pu,xd_transient_pu'",
                                 line_no);
            header_seen = true;
            continue;
        }
        if (fields.size() != 4)
            throw ParseError("expected 4 fields, got " + std::to_string(fields.size()), line_no);
        try {
            const int id = std::stoi(fields[0]);
            const MachineDynamics dyn{std::stod(fields[1]), std::stod(fields[2]),
                                      std::stod(fields[3])};
            if (!grid.has_component({ComponentClass::Generator, id})) {
                breaches.push_back("line " + std::to_string(line_no) +
                                   ": unknown generator id " + std::to_string(id));
                continue;
            }
            if (dyn.inertia_h <= 0 || dyn.xd_transient <= 0) {
                breaches.push_back("line " + std::to_string(line_no) +
                                   ": inertia and transient reactance must be positive");
                continue;
            }
            params.per_generator[id] = dyn;
        } catch (const std::exception&) {
            throw ParseError("non-numeric field", line_no);
        }
    }
    if (!breaches.empty()) throw ValidationError(std::move(breaches));
    return params;
}

LinearizationResult linearize(const GridCase& grid, const std::vector<ComponentRef>& outages,
                              const PowerFlowSolution& solution, const DynamicParams& params) {
    if (!solution.converged)
        throw std::logic_error("linearize requires a converged power-flow solution");

    LinearizationResult result;

    // Machines: generators with a solved operating point (= in service,
    // not outaged, inside the main island).
    std::vector<int> machines; // indices into grid.generators
    for (std::size_t gi = 0; gi < grid.generators.size(); ++gi)
        if (solution.gen_p.count(grid.generators[gi].id)) machines.push_back(static_cast<int>(gi));
    const int m = static_cast<int>(machines.size());
    if (m < 2) {
        result.status = LinearizeStatus::Degenerate;
        result.reason = "fewer than 2 machines in the main island";
        return result;
    }

    // Network restricted to energized buses, loads converted to constant
    // impedance at the solved voltages.
    const int n = grid.n_bus();
    std::vector<int> compact(n, -1);
    int n_e = 0;
    for (int b = 0; b < n; ++b)
        if (solution.energized[b]) compact[b] = n_e++;

    const AdmittanceMatrix ybus = build_ybus(grid, outages);
    using Complex = std::complex<double>;
    std::vector<Eigen::Triplet<Complex>> entries;
    for (int k = 0; k < ybus.y.outerSize(); ++k)
        for (Eigen::SparseMatrix<Complex>::InnerIterator it(ybus.y, k); it; ++it) {
            const int i = static_cast<int>(it.row());
            if (compact[i] < 0 || compact[k] < 0) continue;
            entries.emplace_back(compact[i], compact[k], it.value());
        }
    for (int b = 0; b < n; ++b) {
        if (compact[b] < 0) continue;
        const Bus& bus = grid.buses[b];
        if (bus.load_p == 0.0 && bus.load_q == 0.0) continue;
        const double v2 = solution.v_mag[b] * solution.v_mag[b];
        entries.emplace_back(compact[b], compact[b], Complex(bus.load_p, -bus.load_q) / v2);
    }

    // Machine internal branches: EMF behind x'd (converted to system base).
    std::vector<Complex> emf(m);
    std::vector<double> m_coeff(m), d_coeff(m);
    for (int k = 0; k < m; ++k) {
        const Generator& g = grid.generators[machines[k]];
        const MachineDynamics& dyn = params.per_generator.at(g.id);
        const double xd_sys = dyn.xd_transient * grid.base_mva / g.mva_base;
        const Complex v_term = std::polar(solution.v_mag[g.bus], solution.v_ang[g.bus]);
        const Complex s_gen(solution.gen_p.at(g.id), solution.gen_q.at(g.id));
        const Complex i_gen = std::conj(s_gen / v_term);
        emf[k] = v_term + Complex(0.0, xd_sys) * i_gen;
        const Complex y_g = 1.0 / Complex(0.0, xd_sys);
        entries.emplace_back(compact[g.bus], compact[g.bus], y_g);
        entries.emplace_back(n_e + k, n_e + k, y_g);
        entries.emplace_back(compact[g.bus], n_e + k, -y_g);
        entries.emplace_back(n_e + k, compact[g.bus], -y_g);

        m_coeff[k] = 2.0 * dyn.inertia_h * g.mva_base / (params.omega_s * grid.base_mva);
        d_coeff[k] = dyn.damping_d * g.mva_base / grid.base_mva;
    }

    // Kron reduction to the internal nodes: Y_red = Y_GG - Y_GN Y_NN^-1 Y_NG.
    Eigen::SparseMatrix<Complex> y_aug(n_e + m, n_e + m);
    y_aug.setFromTriplets(entries.begin(), entries.end());
    Eigen::SparseMatrix<Complex> y_nn = y_aug.topLeftCorner(n_e, n_e);
    Eigen::MatrixXcd y_ng = Eigen::MatrixXcd(y_aug.topRightCorner(n_e, m));
    Eigen::MatrixXcd y_gn = Eigen::MatrixXcd(y_aug.bottomLeftCorner(m, n_e));
    Eigen::MatrixXcd y_gg = Eigen::MatrixXcd(y_aug.bottomRightCorner(m, m));

    Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu;
    lu.analyzePattern(y_nn);
    lu.factorize(y_nn);
    if (lu.info() != Eigen::Success) {
        result.status = LinearizeStatus::Failed;
        result.reason = "kron reduction singular";
        return result;
    }
    Eigen::MatrixXcd solved = lu.solve(y_ng);
    if (!solved.allFinite()) {
        result.status = LinearizeStatus::Failed;
        result.reason = "kron reduction singular";
        return result;
    }
    const Eigen::MatrixXcd y_red = y_gg - y_gn * solved;

    // Synchronizing-torque matrix K = dP_e/ddelta at the solved angles.
    // Rows sum to zero by construction (P_e depends on angle differences
    // only), which is what eliminates the rigid-body mode below.
    Eigen::MatrixXd k_mat = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> e_mag(m), delta(m);
    for (int k = 0; k < m; ++k) {
        e_mag[k] = std::abs(emf[k]);
        delta[k] = std::arg(emf[k]);
    }
    for (int i = 0; i < m; ++i) {
        double diag = 0.0;
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            const double g_ij = y_red(i, j).real();
            const double b_ij = y_red(i, j).imag();
            const double d_ij = delta[i] - delta[j];
            const double k_ij = e_mag[i] * e_mag[j] * (g_ij * std::sin(d_ij) - b_ij * std::cos(d_ij));
            k_mat(i, j) = k_ij;
            diag -= k_ij;
        }
        k_mat(i, i) = diag;
    }

    // Reference machine: largest p_max, smallest id on ties.
    int ref = 0;
    for (int k = 1; k < m; ++k) {
        const Generator& g = grid.generators[machines[k]];
        const Generator& best = grid.generators[machines[ref]];
        if (g.p_max > best.p_max || (g.p_max == best.p_max && g.id < best.id)) ref = k;
    }

    // Relative-angle assembly: x = [delta_i - delta_ref; omega_i - omega_ref].
    // Relative-speed damping uses each machine's own D/M; the formulation is
    // exact when D/M is uniform across machines.
    std::vector<int> others;
    for (int k = 0; k < m; ++k)
        if (k != ref) others.push_back(k);
    const int dim = m - 1;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * dim, 2 * dim);
    for (int i = 0; i < dim; ++i) {
        a(i, dim + i) = 1.0;
        const int mi = others[i];
        for (int j = 0; j < dim; ++j) {
            const int mj = others[j];
            a(dim + i, j) = -(k_mat(mi, mj) / m_coeff[mi] - k_mat(ref, mj) / m_coeff[ref]);
        }
        a(dim + i, dim + i) = -d_coeff[mi] / m_coeff[mi];
    }

    result.status = LinearizeStatus::Ok;
    result.matrix.a = std::move(a);
    result.matrix.reference_id = grid.generators[machines[ref]].id;
    for (int k : others) result.matrix.machine_ids.push_back(grid.generators[machines[k]].id);
    if (!result.matrix.a.allFinite()) {
        result.status = LinearizeStatus::Failed;
        result.reason = "non-finite state matrix";
    }
    return result;
}

EigenOutcome compute_eigenvalues(const StateMatrix& matrix, double eps_stab) {
    EigenOutcome outcome;
    const Eigen::Index dim = matrix.a.rows();
    if (dim == 0) {
        outcome.ok = true;
        outcome.report.spectral_abscissa = -std::numeric_limits<double>::infinity();
        return outcome;
    }
    if (!matrix.a.allFinite()) {
        outcome.reason = "non-finite state matrix";
        return outcome;
    }

    Eigen::EigenSolver<Eigen::MatrixXd> solver(matrix.a, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        outcome.reason = "eigensolve failed";
        return outcome;
    }

    outcome.ok = true;
    SpectralReport& report = outcome.report;
    report.eigenvalues.reserve(dim);
    report.spectral_abscissa = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dim; ++i) {
        const std::complex<double> lambda = solver.eigenvalues()[i];
        report.eigenvalues.push_back(lambda);
        if (lambda.real() > report.spectral_abscissa ||
            (lambda.real() == report.spectral_abscissa &&
             std::abs(lambda.imag()) > std::abs(report.dominant_mode.imag()))) {
            report.spectral_abscissa = lambda.real();
            report.dominant_mode = lambda;
        }
    }
    report.unstable = report.spectral_abscissa >= -eps_stab;
    return outcome;
}

} // namespace gridrisk
