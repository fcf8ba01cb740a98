#pragma once

#include <complex>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "gridrisk/grid_model.hpp"
#include "gridrisk/powerflow.hpp"

namespace gridrisk {

struct MachineDynamics {
    double inertia_h;    // s, machine base
    double damping_d;    // pu torque/speed, machine base
    double xd_transient; // pu, machine base
};

// Resolved per-machine dynamic data for a linearization.
struct DynamicParams {
    std::map<int, MachineDynamics> per_generator; // generator id -> params
    double omega_s = 0.0;                         // 2*pi*frequency, rad/s
};

DynamicParams dynamics_from_case(const GridCase& grid);

// CSV with header `generator_id,h_seconds,d_pu,xd_transient_pu`. Rows
// override the case values; generators without a row keep them.
DynamicParams load_dynamics_csv(const std::string& text, const GridCase& grid);

// Swing dynamics in relative angles w.r.t. the reference machine (largest
// p_max in the main island). Dimension 2*(m-1) for m machines; the
// rigid-body mode is eliminated by construction, not filtered.
struct StateMatrix {
    Eigen::MatrixXd a;
    std::vector<int> machine_ids; // non-reference generator ids, matrix order
    int reference_id = -1;
};

enum class LinearizeStatus {
    Ok,
    Degenerate, // fewer than 2 machines in the main island; no model built
    Failed,     // numerical failure; scenario must be flagged severe
};

struct LinearizationResult {
    LinearizeStatus status = LinearizeStatus::Failed;
    StateMatrix matrix;
    std::string reason;
};

// Classical multimachine model at the solved operating point: constant
// voltage behind transient reactance, loads as constant impedance at the
// solved voltages, network Kron-reduced to the generator internal nodes.
LinearizationResult linearize(const GridCase& grid, const std::vector<ComponentRef>& outages,
                              const PowerFlowSolution& solution, const DynamicParams& params);

struct SpectralReport {
    std::vector<std::complex<double>> eigenvalues; // 1/s
    double spectral_abscissa = 0.0;
    bool unstable = false;
    std::complex<double> dominant_mode{0.0, 0.0};
};

struct EigenOutcome {
    bool ok = false;
    SpectralReport report;
    std::string reason;
};

// Full dense non-symmetric spectrum. A state is unstable when the spectral
// abscissa reaches -eps_stab (guard band around the non-negative rule).
EigenOutcome compute_eigenvalues(const StateMatrix& matrix, double eps_stab = 1e-9);

} // namespace gridrisk
