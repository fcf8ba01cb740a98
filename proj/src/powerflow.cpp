#include "gridrisk/powerflow.hpp"

#include <cmath>
#include <set>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "gridrisk/topology.hpp"

namespace gridrisk {

Dispatch base_dispatch(const GridCase& grid) {
    Dispatch d;
    for (const Generator& g : grid.generators) {
        if (!g.in_service) continue;
        d.gen_p[g.id] = g.p_set;
        d.gen_v[g.id] = grid.buses[g.bus].voltage_setpoint;
    }
    return d;
}

Dispatch redispatch(const GridCase& grid, const std::vector<ComponentRef>& outages) {
    return redispatch(grid, outages, base_dispatch(grid));
}

Dispatch redispatch(const GridCase& grid, const std::vector<ComponentRef>& outages,
                    const Dispatch& start) {
    std::set<int> outaged_gen_ids;
    for (const ComponentRef& ref : outages)
        if (ref.cls == ComponentClass::Generator)
            outaged_gen_ids.insert(grid.generators[grid.generator_index_of(ref)].id);

    Dispatch d = start;
    double lost = 0.0;
    for (int id : outaged_gen_ids) {
        auto it = d.gen_p.find(id);
        if (it == d.gen_p.end()) continue; // already out of service
        lost += it->second;
        d.gen_p.erase(it);
        d.gen_v.erase(id);
    }
    if (lost <= 0.0) return d;

    double total_headroom = 0.0;
    for (const auto& [id, p] : d.gen_p) {
        const Generator& g = grid.generators[grid.generator_index_of({ComponentClass::Generator, id})];
        total_headroom += std::max(0.0, g.p_max - p);
    }

    const double distributed = std::min(lost, total_headroom);
    if (total_headroom > 0.0) {
        for (auto& [id, p] : d.gen_p) {
            const Generator& g =
                grid.generators[grid.generator_index_of({ComponentClass::Generator, id})];
            const double headroom = std::max(0.0, g.p_max - p);
            p = std::min(g.p_max, p + distributed * headroom / total_headroom);
        }
    }
    if (lost > total_headroom + 1e-12) {
        d.feasible = false;
        d.unserved_p = lost - total_headroom;
    }
    return d;
}

namespace {

enum class Role { Anchor, PV, PQ, DeEnergized };

struct SolveContext {
    std::vector<Role> role;
    Eigen::VectorXd p_spec, q_spec, v_spec;
    std::vector<int> theta_index, v_index; // -1 when fixed
    std::vector<int> theta_bus, v_bus;     // unknown index -> bus
};

void index_unknowns(SolveContext& ctx, int n) {
    ctx.theta_index.assign(n, -1);
    ctx.v_index.assign(n, -1);
    ctx.theta_bus.clear();
    ctx.v_bus.clear();
    for (int b = 0; b < n; ++b) {
        if (ctx.role[b] == Role::DeEnergized || ctx.role[b] == Role::Anchor) continue;
        ctx.theta_index[b] = static_cast<int>(ctx.theta_bus.size());
        ctx.theta_bus.push_back(b);
        if (ctx.role[b] == Role::PQ) {
            ctx.v_index[b] = static_cast<int>(ctx.v_bus.size());
            ctx.v_bus.push_back(b);
        }
    }
}

void calc_injections(const Eigen::SparseMatrix<std::complex<double>>& y, const Eigen::VectorXd& vm,
                     const Eigen::VectorXd& va, Eigen::VectorXd& p, Eigen::VectorXd& q) {
    p.setZero(vm.size());
    q.setZero(vm.size());
    for (int k = 0; k < y.outerSize(); ++k) {
        for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(y, k); it; ++it) {
            const int i = static_cast<int>(it.row());
            const double g = it.value().real();
            const double b = it.value().imag();
            const double angle = va[i] - va[k];
            const double vv = vm[i] * vm[k];
            p[i] += vv * (g * std::cos(angle) + b * std::sin(angle));
            q[i] += vv * (g * std::sin(angle) - b * std::cos(angle));
        }
    }
}

double mismatch_norm(const SolveContext& ctx, const Eigen::VectorXd& p_calc,
                     const Eigen::VectorXd& q_calc) {
    double norm = 0.0;
    for (int b : ctx.theta_bus) norm = std::max(norm, std::abs(ctx.p_spec[b] - p_calc[b]));
    for (int b : ctx.v_bus) norm = std::max(norm, std::abs(ctx.q_spec[b] - q_calc[b]));
    return norm;
}

// One Newton-Raphson descent to tolerance. Returns true on convergence and
// always leaves the final mismatch of the current state in `norm_out`.
bool newton_loop(const SolveContext& ctx, const Eigen::SparseMatrix<std::complex<double>>& y,
                 Eigen::VectorXd& vm, Eigen::VectorXd& va, double tol, int max_iter,
                 int& iterations, double& norm_out, std::string& reason) {
    const int n_theta = static_cast<int>(ctx.theta_bus.size());
    const int n_v = static_cast<int>(ctx.v_bus.size());
    const int dim = n_theta + n_v;
    Eigen::VectorXd p_calc, q_calc;

    for (int iter = 0;; ++iter) {
        calc_injections(y, vm, va, p_calc, q_calc);
        norm_out = mismatch_norm(ctx, p_calc, q_calc);
        if (!std::isfinite(norm_out)) {
            reason = "diverged";
            return false;
        }
        if (norm_out < tol) return true;
        if (iter >= max_iter) {
            reason = "max_iter";
            return false;
        }

        Eigen::VectorXd rhs(dim);
        for (int k = 0; k < n_theta; ++k) rhs[k] = ctx.p_spec[ctx.theta_bus[k]] - p_calc[ctx.theta_bus[k]];
        for (int k = 0; k < n_v; ++k) rhs[n_theta + k] = ctx.q_spec[ctx.v_bus[k]] - q_calc[ctx.v_bus[k]];

        std::vector<Eigen::Triplet<double>> entries;
        entries.reserve(static_cast<std::size_t>(y.nonZeros()) * 4);
        auto add = [&](int row, int col, double value) {
            if (row >= 0 && col >= 0) entries.emplace_back(row, col, value);
        };
        auto trow = [&](int bus) { return ctx.theta_index[bus]; };
        auto vcol = [&](int bus) { return ctx.v_index[bus] >= 0 ? n_theta + ctx.v_index[bus] : -1; };
        for (int k = 0; k < y.outerSize(); ++k) {
            for (Eigen::SparseMatrix<std::complex<double>>::InnerIterator it(y, k); it; ++it) {
                const int i = static_cast<int>(it.row());
                const double g = it.value().real();
                const double b = it.value().imag();
                if (ctx.role[i] == Role::DeEnergized) continue;
                if (i == k) {
                    // dP_i/dtheta_i, dP_i/dV_i, dQ_i/dtheta_i, dQ_i/dV_i
                    add(trow(i), trow(i), -q_calc[i] - b * vm[i] * vm[i]);
                    add(trow(i), vcol(i), p_calc[i] / vm[i] + g * vm[i]);
                    add(vcol(i), trow(i), p_calc[i] - g * vm[i] * vm[i]);
                    add(vcol(i), vcol(i), q_calc[i] / vm[i] - b * vm[i]);
                } else {
                    const double angle = va[i] - va[k];
                    const double c = std::cos(angle), s = std::sin(angle);
                    const double vv = vm[i] * vm[k];
                    add(trow(i), trow(k), vv * (g * s - b * c));
                    add(trow(i), vcol(k), vm[i] * (g * c + b * s));
                    add(vcol(i), trow(k), -vv * (g * c + b * s));
                    add(vcol(i), vcol(k), vm[i] * (g * s - b * c));
                }
            }
        }
        Eigen::SparseMatrix<double> jac(dim, dim);
        jac.setFromTriplets(entries.begin(), entries.end());

        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
        lu.analyzePattern(jac);
        lu.factorize(jac);
        if (lu.info() != Eigen::Success) {
            reason = "singular";
            return false;
        }
        const Eigen::VectorXd dx = lu.solve(rhs);
        if (!dx.allFinite()) {
            reason = "singular";
            return false;
        }
        for (int k = 0; k < n_theta; ++k) va[ctx.theta_bus[k]] += dx[k];
        for (int k = 0; k < n_v; ++k) vm[ctx.v_bus[k]] += dx[n_theta + k];
        ++iterations;
    }
}

} // namespace

PowerFlowSolution solve_power_flow(const GridCase& grid, const std::vector<ComponentRef>& outages,
                                   const Dispatch& dispatch, const SolveOptions& options) {
    const int n = grid.n_bus();
    const IslandPartition partition = find_islands(grid, outages);

    std::set<int> outaged_gens;
    for (const ComponentRef& ref : outages)
        if (ref.cls == ComponentClass::Generator) outaged_gens.insert(grid.generator_index_of(ref));

    PowerFlowSolution sol;
    sol.energized.assign(n, false);
    for (int b = 0; b < n; ++b) sol.energized[b] = partition.labels[b] == partition.main_island;

    const int anchor = options.anchor_bus >= 0 ? options.anchor_bus : grid.slack_bus;
    if (anchor < 0 || anchor >= n)
        throw ValidationError("anchor bus " + std::to_string(anchor) + " does not exist");
    if (!sol.energized[anchor])
        throw ValidationError("slack/anchor bus " + std::to_string(anchor) +
                              " lies outside the main island; re-anchor the solve to a generator "
                              "bus inside it");
    sol.anchor_bus = anchor;

    // Active generators: in service, not outaged, electrically inside the
    // main island.
    std::vector<bool> gen_active(grid.generators.size(), false);
    double island_capacity = 0.0;
    for (std::size_t gi = 0; gi < grid.generators.size(); ++gi) {
        const Generator& g = grid.generators[gi];
        gen_active[gi] = g.in_service && !outaged_gens.count(static_cast<int>(gi)) &&
                         sol.energized[g.bus] && dispatch.gen_p.count(g.id);
        if (gen_active[gi]) island_capacity += g.p_max;
    }

    SolveContext ctx;
    ctx.role.assign(n, Role::DeEnergized);
    ctx.p_spec.setZero(n);
    ctx.q_spec.setZero(n);
    ctx.v_spec.setOnes(n);
    double island_load = 0.0;
    for (int b = 0; b < n; ++b) {
        if (!sol.energized[b]) continue;
        ctx.role[b] = Role::PQ;
        ctx.p_spec[b] = -grid.buses[b].load_p;
        ctx.q_spec[b] = -grid.buses[b].load_q;
        island_load += grid.buses[b].load_p;
    }
    for (std::size_t gi = 0; gi < grid.generators.size(); ++gi) {
        if (!gen_active[gi]) continue;
        const Generator& g = grid.generators[gi];
        ctx.role[g.bus] = Role::PV;
        ctx.p_spec[g.bus] += dispatch.gen_p.at(g.id);
        auto vit = dispatch.gen_v.find(g.id);
        ctx.v_spec[g.bus] = vit != dispatch.gen_v.end() ? vit->second
                                                        : grid.buses[g.bus].voltage_setpoint;
    }
    ctx.role[anchor] = Role::Anchor;
    ctx.v_spec[anchor] = grid.buses[anchor].voltage_setpoint;

    if (island_capacity <= 0.0 && island_load > 1e-9) {
        sol.converged = false;
        sol.failure_reason = "no_source";
        sol.v_mag.setZero(n);
        sol.v_ang.setZero(n);
        sol.branch_flow.assign(grid.branches.size(), {0.0, 0.0});
        return sol;
    }

    const AdmittanceMatrix ybus = build_ybus(grid, outages);

    // Flat start: V at setpoint where controlled, 1.0 elsewhere, angles zero.
    sol.v_mag.setZero(n);
    sol.v_ang.setZero(n);
    for (int b = 0; b < n; ++b) {
        if (ctx.role[b] == Role::DeEnergized) continue;
        sol.v_mag[b] = ctx.role[b] == Role::PQ ? 1.0 : ctx.v_spec[b];
    }
    if (options.warm_start && options.warm_start->v_mag.size() == n) {
        for (int b = 0; b < n; ++b) {
            if (ctx.role[b] == Role::DeEnergized || !options.warm_start->energized[b]) continue;
            if (ctx.role[b] == Role::PQ) sol.v_mag[b] = options.warm_start->v_mag[b];
            sol.v_ang[b] = options.warm_start->v_ang[b];
        }
        // re-reference to this solve's anchor
        const double shift = sol.v_ang[anchor];
        for (int b = 0; b < n; ++b)
            if (ctx.role[b] != Role::DeEnergized) sol.v_ang[b] -= shift;
    }

    // PV buses whose reactive output hits a limit become PQ at that limit;
    // limited buses may revert when the voltage crosses the setpoint again.
    const int max_switch_events = 2 * std::max(1, grid.n_generators());
    std::vector<int> limit_state(n, 0); // 0 free, +1 at qmax, -1 at qmin
    auto bus_q_range = [&](int b, double& qmin, double& qmax) {
        qmin = 0.0;
        qmax = 0.0;
        for (int gi : grid.generators_at_bus[b]) {
            if (!gen_active[gi]) continue;
            qmin += grid.generators[gi].q_min;
            qmax += grid.generators[gi].q_max;
        }
    };

    int switch_events = 0;
    bool converged = false;
    Eigen::VectorXd p_calc, q_calc;
    while (true) {
        index_unknowns(ctx, n);
        double norm = 0.0;
        std::string reason;
        const bool ok = newton_loop(ctx, ybus.y, sol.v_mag, sol.v_ang, options.tol_pf,
                                    options.max_iter, sol.iterations, norm, reason);
        sol.max_mismatch = norm;
        if (!ok) {
            sol.failure_reason = reason;
            converged = false;
            break;
        }

        calc_injections(ybus.y, sol.v_mag, sol.v_ang, p_calc, q_calc);
        bool switched = false;
        for (int b = 0; b < n; ++b) {
            if (grid.generators_at_bus[b].empty() || b == anchor ||
                ctx.role[b] == Role::DeEnergized)
                continue;
            bool any_active = false;
            for (int gi : grid.generators_at_bus[b]) any_active |= gen_active[gi];
            if (!any_active) continue;
            double qmin, qmax;
            bus_q_range(b, qmin, qmax);
            const double q_gen = q_calc[b] + grid.buses[b].load_q;
            bool bus_switched = false;
            if (limit_state[b] == 0) {
                if (q_gen > qmax + 1e-9) {
                    limit_state[b] = 1;
                    ctx.role[b] = Role::PQ;
                    ctx.q_spec[b] = qmax - grid.buses[b].load_q;
                    bus_switched = true;
                } else if (q_gen < qmin - 1e-9) {
                    limit_state[b] = -1;
                    ctx.role[b] = Role::PQ;
                    ctx.q_spec[b] = qmin - grid.buses[b].load_q;
                    bus_switched = true;
                }
            } else if ((limit_state[b] == 1 && sol.v_mag[b] > ctx.v_spec[b] + 1e-9) ||
                       (limit_state[b] == -1 && sol.v_mag[b] < ctx.v_spec[b] - 1e-9)) {
                limit_state[b] = 0;
                ctx.role[b] = Role::PV;
                sol.v_mag[b] = ctx.v_spec[b];
                bus_switched = true;
            }
            if (bus_switched) {
                switched = true;
                ++switch_events;
            }
        }
        if (!switched) {
            converged = true;
            break;
        }
        if (switch_events > max_switch_events) {
            sol.failure_reason = "q_limit_cycling";
            converged = false;
            break;
        }
    }
    sol.converged = converged;
    sol.bus_role.assign(n, PowerFlowSolution::BusRole::DeEnergized);
    sol.p_spec.setZero(n);
    sol.q_spec.setZero(n);
    for (int b = 0; b < n; ++b) {
        switch (ctx.role[b]) {
        case Role::Anchor: sol.bus_role[b] = PowerFlowSolution::BusRole::Anchor; break;
        case Role::PV: sol.bus_role[b] = PowerFlowSolution::BusRole::PV; break;
        case Role::PQ: sol.bus_role[b] = PowerFlowSolution::BusRole::PQ; break;
        case Role::DeEnergized: break;
        }
        sol.p_spec[b] = ctx.p_spec[b];
        sol.q_spec[b] = ctx.q_spec[b];
    }

    // Branch flows from the final voltages, energized branches only.
    sol.branch_flow.assign(grid.branches.size(), {0.0, 0.0});
    std::set<int> outaged_branches;
    for (const ComponentRef& ref : outages)
        if (ref.cls != ComponentClass::Generator) outaged_branches.insert(grid.branch_index_of(ref));
    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const Branch& br = grid.branches[i];
        if (!br.in_service || outaged_branches.count(static_cast<int>(i))) continue;
        if (!sol.energized[br.from_bus] || !sol.energized[br.to_bus]) continue;
        const std::complex<double> vf = std::polar(sol.v_mag[br.from_bus], sol.v_ang[br.from_bus]);
        const std::complex<double> vt = std::polar(sol.v_mag[br.to_bus], sol.v_ang[br.to_bus]);
        const std::complex<double> y_series = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> y_charge(0.0, br.b_shunt / 2.0);
        const double a = br.tap_ratio;
        const std::complex<double> i_from = (y_series + y_charge) / (a * a) * vf - y_series / a * vt;
        const std::complex<double> i_to = (y_series + y_charge) * vt - y_series / a * vf;
        sol.branch_flow[i] = {std::abs(vf * std::conj(i_from)), std::abs(vt * std::conj(i_to))};
    }

    if (converged) {
        calc_injections(ybus.y, sol.v_mag, sol.v_ang, p_calc, q_calc);
        sol.slack_p = p_calc[anchor] + grid.buses[anchor].load_p;
        for (std::size_t gi = 0; gi < grid.generators.size(); ++gi)
            if (gen_active[gi] && grid.generators[gi].bus != anchor)
                sol.gen_p[grid.generators[gi].id] = dispatch.gen_p.at(grid.generators[gi].id);
        double anchor_pmax = 0.0;
        for (int gi : grid.generators_at_bus[anchor])
            if (gen_active[gi]) anchor_pmax += grid.generators[gi].p_max;
        for (int gi : grid.generators_at_bus[anchor]) {
            if (!gen_active[gi]) continue;
            const Generator& g = grid.generators[gi];
            sol.gen_p[g.id] = anchor_pmax > 0 ? sol.slack_p * g.p_max / anchor_pmax : sol.slack_p;
        }
        // Reactive output split across a bus's units proportionally to range.
        for (int b = 0; b < n; ++b) {
            if (ctx.role[b] == Role::DeEnergized || grid.generators_at_bus[b].empty()) continue;
            std::vector<int> active;
            double total_range = 0.0;
            for (int gi : grid.generators_at_bus[b]) {
                if (!gen_active[gi]) continue;
                active.push_back(gi);
                total_range += grid.generators[gi].q_max - grid.generators[gi].q_min;
            }
            if (active.empty()) continue;
            const double q_gen = q_calc[b] + grid.buses[b].load_q;
            for (int gi : active) {
                const Generator& g = grid.generators[gi];
                const double weight = total_range > 0
                                          ? (g.q_max - g.q_min) / total_range
                                          : 1.0 / static_cast<double>(active.size());
                sol.gen_q[g.id] = q_gen * weight;
            }
        }
    }
    return sol;
}

ViolationReport check_limits(const PowerFlowSolution& solution, const GridCase& grid) {
    if (!solution.converged)
        throw std::logic_error("check_limits requires a converged power-flow solution");

    ViolationReport report;
    auto scan_class = [&](const std::vector<int>& index) {
        for (int id = 0; id < static_cast<int>(index.size()); ++id) {
            const int bi = index[id];
            if (bi < 0) continue;
            const Branch& br = grid.branches[bi];
            for (int end = 0; end < 2; ++end) {
                const double loading = solution.branch_flow[bi][end] / br.rating;
                if (loading > 1.0) report.thermal.push_back({br.ref(), loading});
            }
        }
    };
    scan_class(grid.line_branch_index);
    scan_class(grid.transformer_branch_index);

    for (const Bus& bus : grid.buses) {
        if (!solution.energized[bus.id]) continue;
        const double v = solution.v_mag[bus.id];
        if (v < bus.vmin) report.voltage.push_back({bus.id, v, bus.vmin});
        else if (v > bus.vmax) report.voltage.push_back({bus.id, v, bus.vmax});
    }
    report.any = !report.thermal.empty() || !report.voltage.empty();
    return report;
}

} // namespace gridrisk
