#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "gridrisk/case_io.hpp"
#include "gridrisk/powerflow.hpp"
#include "gridrisk/smallsignal.hpp"
#include "gridrisk/topology.hpp"

namespace gridrisk {

// Why a post-contingency state was classified severe. Closed set; anything
// unexpected maps to InternalError and still counts as severe.
enum class Reason {
    PfDiverged,
    LimitViolation,
    Islanding,
    SmallSignal,
    LinearizationFailed,
    RedispatchInfeasible,
    InternalError,
};

const char* to_string(Reason reason);
std::optional<Reason> reason_from_string(const std::string& s);

// One unit of work: an outage set of 0, 1 or 2 components.
struct Scenario {
    std::string id; // pure function of the ordered outage list
    std::vector<ComponentRef> outages;
    std::int64_t order_index = 0;
    int order() const { return static_cast<int>(outages.size()); }
};

std::string scenario_id(const std::vector<ComponentRef>& outages);

// Deterministic enumeration: base (optional), every N-1 in component
// universe order, then every ordered N-2 pair (i, j), j != i, lexicographic.
// Indexable so workers can pull scenarios without materializing the set.
class ScenarioSet {
public:
    ScenarioSet(const GridCase& grid, int max_order, bool include_base);

    std::int64_t count() const { return count_; }
    std::int64_t base_count() const { return include_base_ ? 1 : 0; }
    std::int64_t n1_count() const;
    std::int64_t n2_count() const;
    Scenario at(std::int64_t index) const;
    const std::vector<ComponentRef>& universe() const { return universe_; }

private:
    std::vector<ComponentRef> universe_;
    int max_order_;
    bool include_base_;
    std::int64_t count_;
};

struct EngineConfig {
    int max_order = 2;
    bool include_base = true;
    int workers = 1;
    double tol_pf = 1e-8;
    int max_iter = 20;
    double eps_stab = 1e-9;
    bool sequential_redispatch = false; // evaluate ordered pairs independently
    bool warm_start = false;            // start solves from the base solution
    // 0 evaluates the full enumeration; otherwise a deterministic
    // evenly-strided sample of this many scenarios.
    std::int64_t limit = 0;
    std::size_t reorder_capacity = 1024;
    // Test hook: stop pulling work after this many records were persisted,
    // simulating an interrupted run. -1 disables.
    std::int64_t stop_after = -1;
};

struct ScenarioResult {
    std::string id;
    std::vector<ComponentRef> outages;
    bool pf_converged = false;
    int island_count = 1;
    std::optional<double> spectral_abscissa;
    int severity = 0;
    std::vector<Reason> reasons;
    double runtime_ms = 0.0;
    // Summary only (not part of the persisted record schema).
    int thermal_violations = 0;
    int voltage_violations = 0;
};

std::string result_to_jsonl(const ScenarioResult& result);
ScenarioResult result_from_jsonl(const std::string& line);

// Full severity pipeline for one scenario: islands, redispatch, power flow
// on the main island (re-anchored when the slack is outaged or isolated),
// limits, then linearization + eigenvalues when the flow converged and the
// island keeps at least two machines. Numerical failures become severe
// results with reason codes, never exceptions.
ScenarioResult evaluate_scenario(const GridCase& grid, const Scenario& scenario,
                                 const EngineConfig& config, const DynamicParams& params,
                                 const PowerFlowSolution* base_solution = nullptr);

struct RunManifest {
    std::string case_checksum;
    EngineConfig config;
    std::int64_t total_base = 0, total_n1 = 0, total_n2 = 0; // full enumeration
    std::int64_t total() const { return total_base + total_n1 + total_n2; }
    std::int64_t selected = 0;  // after --limit sampling
    std::int64_t evaluated = 0; // records in the results file
    std::int64_t resumed = 0;   // records inherited from an interrupted run
    std::int64_t stable = 0, severe = 0, pf_converged = 0;
    std::map<std::string, std::int64_t> by_reason;
    double wall_time_s = 0.0;
    std::vector<std::int64_t> tasks_per_worker;
    bool completed = false;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);

// Evaluates every selected scenario under a bounded worker pool and writes
// results.jsonl (one record per scenario, enumeration order), run_meta.json
// (written before any work; guards resumes) and manifest.json (written
// last). A rerun over an existing output directory resumes: persisted
// records are kept, the partial trailing line (if any) is dropped.
RunManifest run_all(const GridCase& grid, const EngineConfig& config,
                    const std::filesystem::path& out_dir, const DynamicParams& params);

// Reorders out-of-order completions back into index order with bounded
// buffering. push() blocks while the buffer is full, except for the next
// expected index which is always accepted; producers must acquire indices
// in nondecreasing order or the sink can deadlock.
class OrderedResultSink {
public:
    OrderedResultSink(std::function<void(std::int64_t, const ScenarioResult&)> emit,
                      std::int64_t first_index, std::size_t capacity);

    void push(std::int64_t index, ScenarioResult result);
    std::int64_t next_index() const;
    std::size_t high_water() const { return high_water_; }

private:
    std::function<void(std::int64_t, const ScenarioResult&)> emit_;
    mutable std::mutex mutex_;
    std::condition_variable space_;
    std::map<std::int64_t, ScenarioResult> pending_;
    std::int64_t next_;
    std::size_t capacity_;
    std::size_t high_water_ = 0;
};

} // namespace gridrisk
