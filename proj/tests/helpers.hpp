#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gridrisk/case_io.hpp"
#include "gridrisk/grid_model.hpp"

namespace testutil {

using namespace gridrisk;

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open ", path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline std::string fixture_path() { return std::string(GRIDRISK_DATA_DIR) + "/ieee118.json"; }

inline const GridCase& ieee118() {
    static const GridCase grid = parse_native_case(read_file(fixture_path())).grid;
    return grid;
}

// Fresh scratch directory under the system temp root.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static int counter = 0;
    const auto dir = std::filesystem::temp_directory_path() / "gridrisk_tests" /
                     (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Slack generator at bus 0 feeding a PQ load at bus 1 over one line.
inline GridCase two_bus(double load_p = 1.0, double load_q = 0.0, double x = 0.1, double r = 0.0,
                        double rating = 50.0, double vmin = 0.5, double vmax = 1.5) {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, vmin, vmax},
        {1, BusKind::PQ, 1.0, load_p, load_q, vmin, vmax},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, r, x, 0.0, 1.0, rating, true},
    };
    std::vector<Generator> gens = {
        {0, 0, load_p, 0.0, load_p + 10.0, -10.0, 10.0, 100.0, 4.0, 2.0, 0.3, true},
    };
    return make_grid_case("two-bus", 100.0, 50.0, std::move(buses), std::move(branches),
                          std::move(gens));
}

// Triangle 0-1-2, generator at the slack, light loads.
inline GridCase ring3() {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, 0.9, 1.1},
        {1, BusKind::PQ, 1.0, 0.2, 0.05, 0.9, 1.1},
        {2, BusKind::PQ, 1.0, 0.3, 0.05, 0.9, 1.1},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.01, 0.1, 0.0, 1.0, 10.0, true},
        {1, ComponentClass::Line, 1, 2, 0.01, 0.1, 0.0, 1.0, 10.0, true},
        {2, ComponentClass::Line, 0, 2, 0.01, 0.1, 0.0, 1.0, 10.0, true},
    };
    std::vector<Generator> gens = {
        {0, 0, 0.5, 0.0, 5.0, -5.0, 5.0, 100.0, 4.0, 2.0, 0.3, true},
    };
    return make_grid_case("ring3", 100.0, 50.0, std::move(buses), std::move(branches),
                          std::move(gens));
}

// One line, one transformer, one generator: the smallest mixed-class
// universe (N = 3).
inline GridCase three_component() {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, 0.9, 1.1},
        {1, BusKind::PQ, 1.0, 0.4, 0.1, 0.9, 1.1},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.01, 0.1, 0.0, 1.0, 10.0, true},
        {0, ComponentClass::Transformer, 0, 1, 0.005, 0.08, 0.0, 1.0, 10.0, true},
    };
    std::vector<Generator> gens = {
        {0, 0, 0.5, 0.0, 5.0, -5.0, 5.0, 100.0, 4.0, 2.0, 0.3, true},
    };
    return make_grid_case("three-component", 100.0, 50.0, std::move(buses), std::move(branches),
                          std::move(gens));
}

// Meshed 5-bus case with three machines; N = 6 + 1 + 3 = 10.
inline GridCase toy_grid() {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.02, 0.0, 0.0, 0.9, 1.1},
        {1, BusKind::PQ, 1.0, 0.6, 0.18, 0.9, 1.1},
        {2, BusKind::PV, 1.02, 0.2, 0.05, 0.9, 1.1},
        {3, BusKind::PQ, 1.0, 0.5, 0.15, 0.9, 1.1},
        {4, BusKind::PV, 1.02, 0.0, 0.0, 0.9, 1.1},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.02, 0.08, 0.02, 1.0, 3.0, true},
        {1, ComponentClass::Line, 1, 2, 0.02, 0.08, 0.02, 1.0, 3.0, true},
        {2, ComponentClass::Line, 2, 3, 0.02, 0.08, 0.02, 1.0, 3.0, true},
        {3, ComponentClass::Line, 3, 4, 0.02, 0.08, 0.02, 1.0, 3.0, true},
        {4, ComponentClass::Line, 0, 2, 0.03, 0.12, 0.02, 1.0, 3.0, true},
        {5, ComponentClass::Line, 1, 3, 0.03, 0.12, 0.02, 1.0, 3.0, true},
        {0, ComponentClass::Transformer, 0, 4, 0.005, 0.06, 0.0, 0.99, 3.0, true},
    };
    std::vector<Generator> gens = {
        {0, 0, 0.6, 0.0, 3.0, -2.0, 2.0, 120.0, 4.5, 2.0, 0.28, true},
        {1, 2, 0.4, 0.0, 1.5, -1.0, 1.0, 80.0, 3.5, 2.0, 0.32, true},
        {2, 4, 0.3, 0.0, 1.0, -1.0, 1.0, 60.0, 3.0, 2.0, 0.35, true},
    };
    return make_grid_case("toy-grid", 100.0, 50.0, std::move(buses), std::move(branches),
                          std::move(gens));
}

// Single machine against a near-infinite bus (huge inertia reference).
inline GridCase smib(double p_set = 0.5, double damping = 2.0, double x_line = 0.4,
                     double ref_h = 1e9) {
    std::vector<Bus> buses = {
        {0, BusKind::Slack, 1.0, 0.0, 0.0, 0.5, 1.5},
        {1, BusKind::PV, 1.0, 0.0, 0.0, 0.5, 1.5},
    };
    std::vector<Branch> branches = {
        {0, ComponentClass::Line, 0, 1, 0.0, x_line, 0.0, 1.0, 50.0, true},
    };
    std::vector<Generator> gens = {
        // reference surrogate: enormous inertia, negligible reactance
        {0, 0, 0.0, 0.0, 50.0, -50.0, 50.0, 100.0, ref_h, 0.0, 1e-4, true},
        {1, 1, p_set, 0.0, 1.0, -10.0, 10.0, 100.0, 4.0, damping, 0.3, true},
    };
    return make_grid_case("smib", 100.0, 50.0, std::move(buses), std::move(branches),
                          std::move(gens));
}

} // namespace testutil
