#pragma once

#include <complex>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "gridrisk/errors.hpp"

namespace gridrisk {

enum class BusKind { Slack, PV, PQ };

enum class ComponentClass { Line, Transformer, Generator };

const char* to_string(ComponentClass cls);
std::optional<ComponentClass> component_class_from_string(const std::string& s);

// Identity of an outage-able element. Lines, transformers and generators
// each have their own dense id space.
struct ComponentRef {
    ComponentClass cls;
    int id;

    auto operator<=>(const ComponentRef&) const = default;

    std::string str() const { return std::string(to_string(cls)) + ":" + std::to_string(id); }
};

std::optional<ComponentRef> parse_component_ref(const std::string& text);

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double voltage_setpoint = 1.0; // pu, meaningful for PV/Slack
    double load_p = 0.0;           // pu on system base
    double load_q = 0.0;           // pu
    double vmin = 0.9;             // pu
    double vmax = 1.1;             // pu
};

struct Branch {
    int id = 0;                    // dense per class
    ComponentClass kind = ComponentClass::Line;
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;                // pu series resistance
    double x = 0.0;                // pu series reactance, nonzero
    double b_shunt = 0.0;          // pu total line charging
    double tap_ratio = 1.0;        // from-side ideal tap, 1.0 for lines
    double rating = 0.0;           // pu apparent-power limit on system base
    bool in_service = true;

    ComponentRef ref() const { return {kind, id}; }
};

struct Generator {
    int id = 0;
    int bus = 0;
    double p_set = 0.0;            // pu on system base
    double p_min = 0.0;            // pu
    double p_max = 0.0;            // pu
    double q_min = 0.0;            // pu
    double q_max = 0.0;            // pu
    double mva_base = 100.0;       // machine MVA base
    double inertia_h = 4.0;        // s, on machine base
    double damping_d = 2.0;        // pu torque/speed, on machine base
    double xd_transient = 0.3;     // pu, on machine base
    bool in_service = true;

    ComponentRef ref() const { return {ComponentClass::Generator, id}; }
};

// Immutable network description. All per-unit quantities are on base_mva.
// Construct via make_grid_case so the cross-reference tables below are
// consistent; instances are safe to share read-only across threads.
struct GridCase {
    std::string name;
    double base_mva = 100.0;
    double frequency = 50.0; // Hz
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;
    // Original external bus ids, index-aligned with buses (ids are compacted
    // to 0..n-1 at load time; this map is for reporting only).
    std::vector<int> external_bus_ids;

    // Derived lookups, filled by make_grid_case.
    int slack_bus = -1;
    std::vector<int> line_branch_index;        // line id -> index into branches
    std::vector<int> transformer_branch_index; // transformer id -> index into branches
    std::vector<int> generator_index;          // generator id -> index into generators
    std::vector<std::vector<int>> generators_at_bus;

    int n_bus() const { return static_cast<int>(buses.size()); }
    int n_lines() const { return static_cast<int>(line_branch_index.size()); }
    int n_transformers() const { return static_cast<int>(transformer_branch_index.size()); }
    int n_generators() const { return static_cast<int>(generators.size()); }

    // Branch array index for a line/transformer ref, generator array index
    // for a generator ref. Unknown ref -> ValidationError.
    int branch_index_of(const ComponentRef& ref) const;
    int generator_index_of(const ComponentRef& ref) const;
    bool has_component(const ComponentRef& ref) const;
};

// Validates every invariant (collecting all breaches) and fills the derived
// lookup tables. The only sanctioned way to obtain a GridCase.
GridCase make_grid_case(std::string name, double base_mva, double frequency,
                        std::vector<Bus> buses, std::vector<Branch> branches,
                        std::vector<Generator> generators,
                        std::vector<int> external_bus_ids = {});

// Sparse complex bus-admittance matrix.
struct AdmittanceMatrix {
    int dimension = 0;
    Eigen::SparseMatrix<std::complex<double>> y;
};

// Admittance matrix of the network with the given components outaged.
// Transformer taps are applied on the from side; generator outages do not
// alter Y. Unknown refs -> ValidationError.
AdmittanceMatrix build_ybus(const GridCase& grid, const std::vector<ComponentRef>& outages = {});

// Deterministic outage universe: lines by id, then transformers by id, then
// generators by id.
std::vector<ComponentRef> component_universe(const GridCase& grid);

} // namespace gridrisk
