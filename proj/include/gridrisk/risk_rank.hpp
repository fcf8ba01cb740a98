#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gridrisk/case_io.hpp"
#include "gridrisk/engine.hpp"

namespace gridrisk {

struct RiskEntry {
    ComponentRef ref;
    double lambda = 0.0;           // 1/year
    double n1_contribution = 0.0;  // failure-events/year
    double n2_contribution = 0.0;  // failure-events/year
    double r_total() const { return n1_contribution + n2_contribution; }
};

// Entries sorted by total risk descending; ties broken by component
// universe order (lines, transformers, generators, each by id).
struct RiskRanking {
    std::vector<RiskEntry> combined;
    std::vector<RiskEntry> per_class(ComponentClass cls) const;
};

// Expected annual frequency of an outage scenario: lambda_i for a single
// outage, lambda_i*lambda_j for an ordered pair (independent failures).
// The base scenario has no frequency; asking for one is a contract error.
double scenario_frequency(const Scenario& scenario, const ReliabilityTable& table);

// R_i = F_i S_i + sum over ordered pairs containing i of F_ij S_ij. Every
// severe ordered pair (i, j) credits lambda_i*lambda_j to both R_i and R_j,
// so an unordered severe pair contributes twice to each participant.
// `unordered_pairs` halves the pair contributions instead.
RiskRanking compute_risk(const std::vector<ScenarioResult>& results, const ReliabilityTable& table,
                         const GridCase& grid, bool unordered_pairs = false);

// Streaming aggregation over a completed run directory. Refuses when the
// manifest is missing, belongs to a different case, or disagrees with the
// record count in the results file.
RiskRanking compute_risk_from_run(const std::filesystem::path& run_dir,
                                  const ReliabilityTable& table, const GridCase& grid,
                                  bool unordered_pairs = false);

// ranking.csv / ranking.json / plotdata.csv plus one CSV per component
// class. top_k > 0 trims the combined report and the plot data.
void emit_reports(const RiskRanking& ranking, const GridCase& grid,
                  const std::filesystem::path& out_dir, int top_k = 0);

// Fixed-width table for terminal output.
std::string format_ranking_table(const RiskRanking& ranking, const GridCase& grid, int top_k);

} // namespace gridrisk
