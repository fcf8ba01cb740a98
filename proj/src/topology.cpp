#include "gridrisk/topology.hpp"

#include <set>

namespace gridrisk {

IslandPartition find_islands(const GridCase& grid, const std::vector<ComponentRef>& outages) {
    std::set<int> outaged_branches;
    for (const ComponentRef& ref : outages) {
        if (ref.cls == ComponentClass::Generator) {
            grid.generator_index_of(ref);
            continue; // generators carry no connectivity
        }
        outaged_branches.insert(grid.branch_index_of(ref));
    }
    const std::set<int> outaged_generators = [&] {
        std::set<int> s;
        for (const ComponentRef& ref : outages)
            if (ref.cls == ComponentClass::Generator) s.insert(grid.generator_index_of(ref));
        return s;
    }();

    const int n = grid.n_bus();
    std::vector<std::vector<int>> adjacency(n);
    for (std::size_t i = 0; i < grid.branches.size(); ++i) {
        const Branch& br = grid.branches[i];
        if (!br.in_service || outaged_branches.count(static_cast<int>(i))) continue;
        adjacency[br.from_bus].push_back(br.to_bus);
        adjacency[br.to_bus].push_back(br.from_bus);
    }

    IslandPartition partition;
    partition.labels.assign(n, -1);
    std::vector<int> stack;
    // Scanning seeds in bus-id order makes island indices follow the
    // smallest contained bus id.
    for (int seed = 0; seed < n; ++seed) {
        if (partition.labels[seed] >= 0) continue;
        const int island = partition.island_count++;
        stack.push_back(seed);
        partition.labels[seed] = island;
        while (!stack.empty()) {
            const int bus = stack.back();
            stack.pop_back();
            for (int next : adjacency[bus]) {
                if (partition.labels[next] >= 0) continue;
                partition.labels[next] = island;
                stack.push_back(next);
            }
        }
    }

    // Main island: the slack bus's island when it still holds in-service
    // generation, otherwise the island with the largest in-service capacity.
    std::vector<double> capacity(partition.island_count, 0.0);
    for (std::size_t i = 0; i < grid.generators.size(); ++i) {
        const Generator& g = grid.generators[i];
        if (!g.in_service || outaged_generators.count(static_cast<int>(i))) continue;
        capacity[partition.labels[g.bus]] += g.p_max;
    }
    int main = grid.slack_bus >= 0 ? partition.labels[grid.slack_bus] : 0;
    if (n > 0 && (grid.slack_bus < 0 || capacity[main] <= 0.0)) {
        for (int island = 0; island < partition.island_count; ++island)
            if (capacity[island] > capacity[main]) main = island;
    }
    partition.main_island = main;

    for (const Bus& bus : grid.buses)
        if (partition.labels[bus.id] != main) partition.islanded_load += bus.load_p;
    return partition;
}

} // namespace gridrisk
