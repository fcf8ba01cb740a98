#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridrisk/grid_model.hpp"

namespace gridrisk {

// Target operating point for a solve. Outaged generators are absent from
// the maps. `feasible` is false when lost generation exceeded the remaining
// headroom; the dispatch then has every remaining unit at p_max and
// `unserved_p` carries the shortfall.
struct Dispatch {
    std::map<int, double> gen_p; // generator id -> pu
    std::map<int, double> gen_v; // generator id -> pu voltage setpoint
    bool feasible = true;
    double unserved_p = 0.0;
};

// Pre-contingency dispatch: every in-service generator at its p_set.
Dispatch base_dispatch(const GridCase& grid);

// Redistributes generation lost to `outages` across the remaining
// in-service units proportionally to headroom (p_max - p_set).
Dispatch redispatch(const GridCase& grid, const std::vector<ComponentRef>& outages);

// Same rule, but starting from an arbitrary prior dispatch (used when
// ordered pairs are redispatched sequentially).
Dispatch redispatch(const GridCase& grid, const std::vector<ComponentRef>& outages,
                    const Dispatch& start);

struct SolveOptions {
    double tol_pf = 1e-8;
    int max_iter = 20;
    // Bus used as the angle/balance reference. -1 keeps the case slack; the
    // caller must re-anchor when the slack is outaged or isolated.
    int anchor_bus = -1;
    const struct PowerFlowSolution* warm_start = nullptr;
};

struct PowerFlowSolution {
    enum class BusRole { Anchor, PV, PQ, DeEnergized };

    Eigen::VectorXd v_mag;  // pu per bus, 0 for de-energized buses
    Eigen::VectorXd v_ang;  // rad per bus
    std::vector<bool> energized;
    // Role and injection targets the solve actually used (PV buses that hit
    // a reactive limit appear as PQ at that limit). Lets callers recompute
    // the mismatch without reaching into the solver.
    std::vector<BusRole> bus_role;
    Eigen::VectorXd p_spec, q_spec;
    // Apparent-power flow magnitude (pu) at each end of each branch,
    // index-aligned with grid.branches; [from, to].
    std::vector<std::array<double, 2>> branch_flow;
    std::map<int, double> gen_q; // solved reactive output per active generator, pu
    // Solved active output: the dispatch target, except at the anchor bus
    // whose units share the slack injection proportionally to p_max.
    std::map<int, double> gen_p;
    double slack_p = 0.0;        // net injection picked up at the anchor bus, pu
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
    std::string failure_reason;  // "singular", "max_iter", "q_limit_cycling", "no_source"
    int anchor_bus = -1;
};

// Newton-Raphson AC power flow on the main island of the post-outage
// network, polar mismatch form, flat start unless warm_start given.
// Throws ValidationError when the requested anchor lies outside the main
// island (caller must re-anchor).
PowerFlowSolution solve_power_flow(const GridCase& grid, const std::vector<ComponentRef>& outages,
                                   const Dispatch& dispatch, const SolveOptions& options = {});

struct ViolationReport {
    // One entry per branch end whose loading exceeds the rating.
    std::vector<std::pair<ComponentRef, double>> thermal;
    struct VoltageViolation {
        int bus;
        double v;
        double bound;
    };
    std::vector<VoltageViolation> voltage;
    bool any = false;
};

// Thermal and voltage-band screening of a converged solution. Calling this
// on a non-converged solution is a contract error.
ViolationReport check_limits(const PowerFlowSolution& solution, const GridCase& grid);

} // namespace gridrisk
