#pragma once

#include <vector>

#include "gridrisk/grid_model.hpp"

namespace gridrisk {

// Connected components of the bus graph induced by in-service, non-outaged
// branches. Islands are indexed in order of their smallest contained bus id.
struct IslandPartition {
    std::vector<int> labels;    // bus id -> island index
    int island_count = 0;
    int main_island = 0;        // island used as the solve reference
    double islanded_load = 0.0; // pu active load outside the main island
};

IslandPartition find_islands(const GridCase& grid, const std::vector<ComponentRef>& outages = {});

// Any fragmentation is a failure of maximum severity.
inline bool is_severe_islanding(const IslandPartition& partition) {
    return partition.island_count > 1;
}

} // namespace gridrisk
