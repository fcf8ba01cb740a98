#include "gridrisk/risk_rank.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace gridrisk {

using nlohmann::json;

std::vector<RiskEntry> RiskRanking::per_class(ComponentClass cls) const {
    std::vector<RiskEntry> out;
    for (const RiskEntry& e : combined)
        if (e.ref.cls == cls) out.push_back(e);
    return out;
}

double scenario_frequency(const Scenario& scenario, const ReliabilityTable& table) {
    switch (scenario.order()) {
    case 1: return table.lambda_for(scenario.outages[0]);
    case 2: return table.lambda_for(scenario.outages[0]) * table.lambda_for(scenario.outages[1]);
    default:
        throw std::logic_error("the base scenario has no outage frequency");
    }
}

namespace {

struct Accumulator {
    std::map<ComponentRef, RiskEntry> entries;

    explicit Accumulator(const GridCase& grid, const ReliabilityTable& table) {
        for (const ComponentRef& ref : component_universe(grid)) {
            RiskEntry e;
            e.ref = ref;
            e.lambda = table.lambda_for(ref);
            entries.emplace(ref, e);
        }
    }

    void add(const ScenarioResult& r, const ReliabilityTable& table, bool unordered_pairs) {
        if (!r.severity || r.outages.empty()) return;
        if (r.outages.size() == 1) {
            entries.at(r.outages[0]).n1_contribution += table.lambda_for(r.outages[0]);
            return;
        }
        const double weight = (unordered_pairs ? 0.5 : 1.0) * table.lambda_for(r.outages[0]) *
                              table.lambda_for(r.outages[1]);
        entries.at(r.outages[0]).n2_contribution += weight;
        entries.at(r.outages[1]).n2_contribution += weight;
    }

    RiskRanking finish(const GridCase& grid) {
        RiskRanking ranking;
        for (const ComponentRef& ref : component_universe(grid))
            ranking.combined.push_back(entries.at(ref));
        std::stable_sort(ranking.combined.begin(), ranking.combined.end(),
                         [](const RiskEntry& a, const RiskEntry& b) {
                             return a.r_total() > b.r_total();
                         });
        return ranking;
    }
};

} // namespace

RiskRanking compute_risk(const std::vector<ScenarioResult>& results, const ReliabilityTable& table,
                         const GridCase& grid, bool unordered_pairs) {
    Accumulator acc(grid, table);
    for (const ScenarioResult& r : results) acc.add(r, table, unordered_pairs);
    return acc.finish(grid);
}

RiskRanking compute_risk_from_run(const std::filesystem::path& run_dir,
                                  const ReliabilityTable& table, const GridCase& grid,
                                  bool unordered_pairs) {
    const auto manifest_path = run_dir / "manifest.json";
    const auto results_path = run_dir / "results.jsonl";
    if (!std::filesystem::exists(manifest_path))
        throw ValidationError("no manifest.json in " + run_dir.string() +
                              " (run incomplete or wrong directory)");
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("cannot read " + manifest_path.string());
    const std::string manifest_text((std::istreambuf_iterator<char>(mf)),
                                    std::istreambuf_iterator<char>());
    const RunManifest manifest = manifest_from_json(manifest_text);

    if (manifest.case_checksum != case_checksum(grid))
        throw ValidationError("manifest case checksum " + manifest.case_checksum +
                              " does not match the supplied case");
    const ScenarioSet set(grid, manifest.config.max_order, manifest.config.include_base);
    if (manifest.total() != set.count() || manifest.total_n1 != set.n1_count() ||
        manifest.total_n2 != set.n2_count())
        throw ValidationError("manifest totals do not match the enumeration for this case");

    std::ifstream in(results_path);
    if (!in) throw IoError("cannot read " + results_path.string());
    Accumulator acc(grid, table);
    std::string line;
    std::int64_t records = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        acc.add(result_from_jsonl(line), table, unordered_pairs);
        ++records;
    }
    if (records != manifest.evaluated)
        throw ValidationError("results file holds " + std::to_string(records) +
                              " records but the manifest reports " +
                              std::to_string(manifest.evaluated));
    return acc.finish(grid);
}

namespace {

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

void write_entries_csv(const std::filesystem::path& path, const std::vector<RiskEntry>& entries,
                       int limit) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "rank,component,class,lambda_per_year,n1_risk,n2_risk,total_risk\n";
    int rank = 0;
    for (const RiskEntry& e : entries) {
        if (limit > 0 && rank >= limit) break;
        ++rank;
        out << rank << ',' << e.ref.str() << ',' << to_string(e.ref.cls) << ','
            << format_value(e.lambda) << ',' << format_value(e.n1_contribution) << ','
            << format_value(e.n2_contribution) << ',' << format_value(e.r_total()) << '\n';
    }
    if (!out) throw IoError("write failure on " + path.string());
}

} // namespace

void emit_reports(const RiskRanking& ranking, const GridCase& grid,
                  const std::filesystem::path& out_dir, int top_k) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string());

    write_entries_csv(out_dir / "ranking.csv", ranking.combined, top_k);
    write_entries_csv(out_dir / "ranking_lines.csv", ranking.per_class(ComponentClass::Line), 0);
    write_entries_csv(out_dir / "ranking_transformers.csv",
                      ranking.per_class(ComponentClass::Transformer), 0);
    write_entries_csv(out_dir / "ranking_generators.csv",
                      ranking.per_class(ComponentClass::Generator), 0);

    json doc = json::array();
    for (const RiskEntry& e : ranking.combined) {
        json item;
        item["component"] = e.ref.str();
        item["class"] = to_string(e.ref.cls);
        item["lambda_per_year"] = e.lambda;
        item["n1_risk"] = e.n1_contribution;
        item["n2_risk"] = e.n2_contribution;
        item["total_risk"] = e.r_total();
        doc.push_back(std::move(item));
    }
    std::ofstream jf(out_dir / "ranking.json");
    jf << doc.dump(2) << "\n";
    if (!jf) throw IoError("cannot write ranking.json");

    // Stacked-bar source: one row per component, N-1 and N-2 shares.
    std::ofstream pf(out_dir / "plotdata.csv");
    pf << "component,n1_risk,n2_risk\n";
    int rows = 0;
    for (const RiskEntry& e : ranking.combined) {
        if (top_k > 0 && rows >= top_k) break;
        ++rows;
        pf << e.ref.str() << ',' << format_value(e.n1_contribution) << ','
           << format_value(e.n2_contribution) << '\n';
    }
    if (!pf) throw IoError("cannot write plotdata.csv");
    (void)grid;
}

std::string format_ranking_table(const RiskRanking& ranking, const GridCase& grid, int top_k) {
    (void)grid;
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%4s  %-16s  %12s  %12s  %12s  %12s\n", "rank", "component",
                  "lambda", "n1_risk", "n2_risk", "total_risk");
    out << buf;
    int rank = 0;
    for (const RiskEntry& e : ranking.combined) {
        if (top_k > 0 && rank >= top_k) break;
        ++rank;
        std::snprintf(buf, sizeof(buf), "%4d  %-16s  %12.6f  %12.6f  %12.6f  %12.6f\n", rank,
                      e.ref.str().c_str(), e.lambda, e.n1_contribution, e.n2_contribution,
                      e.r_total());
        out << buf;
    }
    return out.str();
}

} // namespace gridrisk
