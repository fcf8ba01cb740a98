#include "gridrisk/grid_model.hpp"

#include <algorithm>
#include <set>

namespace gridrisk {

const char* to_string(ComponentClass cls) {
    switch (cls) {
    case ComponentClass::Line: return "line";
    case ComponentClass::Transformer: return "transformer";
    case ComponentClass::Generator: return "generator";
    }
    return "?";
}

std::optional<ComponentClass> component_class_from_string(const std::string& s) {
    std::string lower;
    lower.reserve(s.size());
    for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "line") return ComponentClass::Line;
    if (lower == "transformer") return ComponentClass::Transformer;
    if (lower == "generator") return ComponentClass::Generator;
    return std::nullopt;
}

std::optional<ComponentRef> parse_component_ref(const std::string& text) {
    auto colon = text.find(':');
    if (colon == std::string::npos) return std::nullopt;
    auto cls = component_class_from_string(text.substr(0, colon));
    if (!cls) return std::nullopt;
    const std::string id_part = text.substr(colon + 1);
    if (id_part.empty()) return std::nullopt;
    for (char c : id_part)
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    try {
        return ComponentRef{*cls, std::stoi(id_part)};
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int GridCase::branch_index_of(const ComponentRef& ref) const {
    const std::vector<int>* table = nullptr;
    if (ref.cls == ComponentClass::Line) table = &line_branch_index;
    else if (ref.cls == ComponentClass::Transformer) table = &transformer_branch_index;
    else throw ValidationError("not a branch component: " + ref.str());
    if (ref.id < 0 || ref.id >= static_cast<int>(table->size()) || (*table)[ref.id] < 0)
        throw ValidationError("unknown component reference: " + ref.str());
    return (*table)[ref.id];
}

int GridCase::generator_index_of(const ComponentRef& ref) const {
    if (ref.cls != ComponentClass::Generator)
        throw ValidationError("not a generator component: " + ref.str());
    if (ref.id < 0 || ref.id >= static_cast<int>(generator_index.size()) || generator_index[ref.id] < 0)
        throw ValidationError("unknown component reference: " + ref.str());
    return generator_index[ref.id];
}

bool GridCase::has_component(const ComponentRef& ref) const {
    const std::vector<int>* table = nullptr;
    switch (ref.cls) {
    case ComponentClass::Line: table = &line_branch_index; break;
    case ComponentClass::Transformer: table = &transformer_branch_index; break;
    case ComponentClass::Generator: table = &generator_index; break;
    }
    return ref.id >= 0 && ref.id < static_cast<int>(table->size()) && (*table)[ref.id] >= 0;
}

namespace {

void build_index(const std::vector<int>& ids, std::vector<int>& table,
                 const char* what, std::vector<std::string>& breaches) {
    int max_id = -1;
    for (int id : ids) max_id = std::max(max_id, id);
    table.assign(max_id + 1, -1);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0) {
            breaches.push_back(std::string(what) + " id " + std::to_string(id) + " is negative");
            continue;
        }
        if (table[id] >= 0) {
            breaches.push_back(std::string("duplicate ") + what + " id " + std::to_string(id));
            continue;
        }
        table[id] = static_cast<int>(i);
    }
}

} // namespace

GridCase make_grid_case(std::string name, double base_mva, double frequency,
                        std::vector<Bus> buses, std::vector<Branch> branches,
                        std::vector<Generator> generators,
                        std::vector<int> external_bus_ids) {
    GridCase grid;
    grid.name = std::move(name);
    grid.base_mva = base_mva;
    grid.frequency = frequency;
    grid.buses = std::move(buses);
    grid.branches = std::move(branches);
    grid.generators = std::move(generators);
    grid.external_bus_ids = std::move(external_bus_ids);

    std::vector<std::string> breaches;
    if (base_mva <= 0) breaches.push_back("base_mva must be positive");
    if (frequency <= 0) breaches.push_back("frequency must be positive");

    const int n = grid.n_bus();
    std::vector<bool> seen(n, false);
    int slack_count = 0;
    for (const Bus& bus : grid.buses) {
        if (bus.id < 0 || bus.id >= n) {
            breaches.push_back("bus id " + std::to_string(bus.id) + " outside dense range 0.." +
                               std::to_string(n - 1));
            continue;
        }
        if (seen[bus.id]) breaches.push_back("duplicate bus id " + std::to_string(bus.id));
        seen[bus.id] = true;
        if (bus.kind == BusKind::Slack) {
            ++slack_count;
            grid.slack_bus = bus.id;
        }
        if (!(0 < bus.vmin && bus.vmin < bus.vmax))
            breaches.push_back("bus " + std::to_string(bus.id) +
                               ": voltage bounds must satisfy 0 < vmin < vmax");
    }
    if (slack_count == 0 && n > 0) breaches.push_back("no slack bus");
    if (slack_count > 1) {
        std::string ids;
        for (const Bus& bus : grid.buses)
            if (bus.kind == BusKind::Slack) ids += (ids.empty() ? "" : ", ") + std::to_string(bus.id);
        breaches.push_back("more than one slack bus: buses " + ids);
    }
    // Buses must come sorted by id so index == id everywhere downstream.
    std::sort(grid.buses.begin(), grid.buses.end(),
              [](const Bus& a, const Bus& b) { return a.id < b.id; });

    std::vector<int> line_ids, xfmr_ids, gen_ids;
    for (const Branch& br : grid.branches) {
        (br.kind == ComponentClass::Line ? line_ids : xfmr_ids).push_back(br.id);
        const std::string label = br.ref().str();
        if (br.kind == ComponentClass::Generator) breaches.push_back(label + ": branch kind cannot be generator");
        if (br.from_bus < 0 || br.from_bus >= n || br.to_bus < 0 || br.to_bus >= n)
            breaches.push_back(label + ": endpoint references a nonexistent bus");
        if (br.from_bus == br.to_bus) breaches.push_back(label + ": from_bus equals to_bus");
        if (br.x == 0.0) breaches.push_back(label + ": series reactance x must be nonzero");
        if (br.rating <= 0.0) breaches.push_back(label + ": rating must be positive");
        if (br.tap_ratio <= 0.0) breaches.push_back(label + ": tap_ratio must be positive");
    }
    for (const Generator& g : grid.generators) {
        gen_ids.push_back(g.id);
        const std::string label = g.ref().str();
        if (g.bus < 0 || g.bus >= n) breaches.push_back(label + ": references a nonexistent bus");
        if (!(g.p_min <= g.p_set && g.p_set <= g.p_max))
            breaches.push_back(label + ": p_set outside [p_min, p_max]");
        if (g.mva_base <= 0) breaches.push_back(label + ": mva_base must be positive");
        if (g.inertia_h <= 0) breaches.push_back(label + ": inertia_h must be positive");
        if (g.xd_transient <= 0) breaches.push_back(label + ": xd_transient must be positive");
    }

    std::vector<int> line_table, xfmr_table, gen_table;
    build_index(line_ids, line_table, "line", breaches);
    build_index(xfmr_ids, xfmr_table, "transformer", breaches);
    build_index(gen_ids, gen_table, "generator", breaches);

    if (!breaches.empty()) throw ValidationError(std::move(breaches));

    // Rebuild the per-class tables against positions in the combined branch list.
    grid.line_branch_index.assign(line_table.size(), -1);
    grid.transformer_branch_index.assign(xfmr_table.size(), -1);
    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const Branch& br = grid.branches[i];
        if (br.kind == ComponentClass::Line) grid.line_branch_index[br.id] = static_cast<int>(i);
        else grid.transformer_branch_index[br.id] = static_cast<int>(i);
    }
    grid.generator_index.assign(gen_table.size(), -1);
    grid.generators_at_bus.assign(n, {});
    for (std::size_t i = 0; i < grid.generators.size(); ++i) {
        grid.generator_index[grid.generators[i].id] = static_cast<int>(i);
        grid.generators_at_bus[grid.generators[i].bus].push_back(static_cast<int>(i));
    }
    if (grid.external_bus_ids.empty()) {
        grid.external_bus_ids.resize(n);
        for (int i = 0; i < n; ++i) grid.external_bus_ids[i] = i;
    }
    return grid;
}

AdmittanceMatrix build_ybus(const GridCase& grid, const std::vector<ComponentRef>& outages) {
    std::set<int> outaged_branches;
    for (const ComponentRef& ref : outages) {
        if (ref.cls == ComponentClass::Generator) {
            grid.generator_index_of(ref); // existence check only
            continue;
        }
        outaged_branches.insert(grid.branch_index_of(ref));
    }

    using Triplet = Eigen::Triplet<std::complex<double>>;
    std::vector<Triplet> entries;
    entries.reserve(4 * grid.branches.size());
    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const Branch& br = grid.branches[i];
        if (!br.in_service || outaged_branches.count(static_cast<int>(i))) continue;
        const std::complex<double> y_series = 1.0 / std::complex<double>(br.r, br.x);
        const std::complex<double> y_charge(0.0, br.b_shunt / 2.0);
        const double a = br.tap_ratio;
        entries.emplace_back(br.from_bus, br.from_bus, (y_series + y_charge) / (a * a));
        entries.emplace_back(br.to_bus, br.to_bus, y_series + y_charge);
        entries.emplace_back(br.from_bus, br.to_bus, -y_series / a);
        entries.emplace_back(br.to_bus, br.from_bus, -y_series / a);
    }

    AdmittanceMatrix ybus;
    ybus.dimension = grid.n_bus();
    ybus.y.resize(grid.n_bus(), grid.n_bus());
    ybus.y.setFromTriplets(entries.begin(), entries.end());
    return ybus;
}

std::vector<ComponentRef> component_universe(const GridCase& grid) {
    std::vector<ComponentRef> universe;
    universe.reserve(grid.n_lines() + grid.n_transformers() + grid.n_generators());
    for (int id = 0; id < grid.n_lines(); ++id)
        universe.push_back({ComponentClass::Line, id});
    for (int id = 0; id < grid.n_transformers(); ++id)
        universe.push_back({ComponentClass::Transformer, id});
    for (int id = 0; id < grid.n_generators(); ++id)
        universe.push_back({ComponentClass::Generator, id});
    return universe;
}

} // namespace gridrisk
