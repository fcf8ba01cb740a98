#include "gridrisk/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridrisk {

using nlohmann::json;

const char* to_string(Reason reason) {
    switch (reason) {
    case Reason::PfDiverged: return "pf_diverged";
    case Reason::LimitViolation: return "limit_violation";
    case Reason::Islanding: return "islanding";
    case Reason::SmallSignal: return "small_signal";
    case Reason::LinearizationFailed: return "linearization_failed";
    case Reason::RedispatchInfeasible: return "redispatch_infeasible";
    case Reason::InternalError: return "internal_error";
    }
    return "?";
}

std::optional<Reason> reason_from_string(const std::string& s) {
    static const std::map<std::string, Reason> table = {
        {"pf_diverged", Reason::PfDiverged},
        {"limit_violation", Reason::LimitViolation},
        {"islanding", Reason::Islanding},
        {"small_signal", Reason::SmallSignal},
        {"linearization_failed", Reason::LinearizationFailed},
        {"redispatch_infeasible", Reason::RedispatchInfeasible},
        {"internal_error", Reason::InternalError},
    };
    auto it = table.find(s);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

std::string scenario_id(const std::vector<ComponentRef>& outages) {
    if (outages.empty()) return "base";
    if (outages.size() == 1) return "n1:" + outages[0].str();
    return "n2:" + outages[0].str() + "+" + outages[1].str();
}

ScenarioSet::ScenarioSet(const GridCase& grid, int max_order, bool include_base)
    : universe_(component_universe(grid)), max_order_(max_order), include_base_(include_base) {
    if (max_order < 1 || max_order > 2)
        throw ValidationError("max_order must be 1 or 2");
    const std::int64_t n = static_cast<std::int64_t>(universe_.size());
    count_ = (include_base_ ? 1 : 0) + n + (max_order_ >= 2 ? n * (n - 1) : 0);
}

std::int64_t ScenarioSet::n1_count() const { return static_cast<std::int64_t>(universe_.size()); }

std::int64_t ScenarioSet::n2_count() const {
    const std::int64_t n = static_cast<std::int64_t>(universe_.size());
    return max_order_ >= 2 ? n * (n - 1) : 0;
}

Scenario ScenarioSet::at(std::int64_t index) const {
    if (index < 0 || index >= count_)
        throw ValidationError("scenario index " + std::to_string(index) + " out of range");
    Scenario s;
    s.order_index = index;
    std::int64_t i = index;
    if (include_base_) {
        if (i == 0) {
            s.id = scenario_id({});
            return s;
        }
        --i;
    }
    const std::int64_t n = static_cast<std::int64_t>(universe_.size());
    if (i < n) {
        s.outages = {universe_[i]};
        s.id = scenario_id(s.outages);
        return s;
    }
    i -= n;
    const std::int64_t first = i / (n - 1);
    const std::int64_t rest = i % (n - 1);
    const std::int64_t second = rest < first ? rest : rest + 1;
    s.outages = {universe_[first], universe_[second]};
    s.id = scenario_id(s.outages);
    return s;
}

// ---------------------------------------------------------------------------

namespace {

// Slack-loss rule: keep the case slack while it sits in the main island and
// still has live generation (or hosts none at all); otherwise re-anchor at
// the bus of the largest-capacity live machine inside the island.
int pick_anchor(const GridCase& grid, const IslandPartition& partition,
                const std::set<int>& outaged_gen_indices) {
    const int main = partition.main_island;
    auto gen_live = [&](int gi) {
        const Generator& g = grid.generators[gi];
        return g.in_service && !outaged_gen_indices.count(gi) && partition.labels[g.bus] == main;
    };

    const int slack = grid.slack_bus;
    const bool slack_in_main = slack >= 0 && partition.labels[slack] == main;
    if (slack_in_main) {
        const auto& at_slack = grid.generators_at_bus[slack];
        bool any_live = false;
        for (int gi : at_slack) any_live |= gen_live(gi);
        if (at_slack.empty() || any_live) return slack;
    }

    int best = -1;
    for (std::size_t gi = 0; gi < grid.generators.size(); ++gi) {
        if (!gen_live(static_cast<int>(gi))) continue;
        if (best < 0 || grid.generators[gi].p_max > grid.generators[best].p_max ||
            (grid.generators[gi].p_max == grid.generators[best].p_max &&
             grid.generators[gi].id < grid.generators[best].id))
            best = static_cast<int>(gi);
    }
    if (best >= 0) return grid.generators[best].bus;
    if (slack_in_main) return slack;
    for (int b = 0; b < grid.n_bus(); ++b)
        if (partition.labels[b] == main) return b;
    return slack;
}

} // namespace

ScenarioResult evaluate_scenario(const GridCase& grid, const Scenario& scenario,
                                 const EngineConfig& config, const DynamicParams& params,
                                 const PowerFlowSolution* base_solution) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioResult result;
    result.id = scenario.id;
    result.outages = scenario.outages;

    std::set<Reason> reasons;
    try {
        const IslandPartition partition = find_islands(grid, scenario.outages);
        result.island_count = partition.island_count;
        if (is_severe_islanding(partition)) reasons.insert(Reason::Islanding);

        Dispatch dispatch;
        if (config.sequential_redispatch && scenario.order() == 2) {
            dispatch = redispatch(grid, {scenario.outages[0]});
            dispatch = redispatch(grid, {scenario.outages[1]}, dispatch);
        } else {
            dispatch = redispatch(grid, scenario.outages);
        }
        if (!dispatch.feasible) reasons.insert(Reason::RedispatchInfeasible);

        std::set<int> outaged_gens;
        for (const ComponentRef& ref : scenario.outages)
            if (ref.cls == ComponentClass::Generator)
                outaged_gens.insert(grid.generator_index_of(ref));

        SolveOptions options;
        options.tol_pf = config.tol_pf;
        options.max_iter = config.max_iter;
        options.anchor_bus = pick_anchor(grid, partition, outaged_gens);
        if (config.warm_start && base_solution && base_solution->converged)
            options.warm_start = base_solution;

        const PowerFlowSolution solution =
            solve_power_flow(grid, scenario.outages, dispatch, options);
        result.pf_converged = solution.converged;
        if (!solution.converged) {
            reasons.insert(Reason::PfDiverged);
        } else {
            const ViolationReport violations = check_limits(solution, grid);
            result.thermal_violations = static_cast<int>(violations.thermal.size());
            result.voltage_violations = static_cast<int>(violations.voltage.size());
            if (violations.any) reasons.insert(Reason::LimitViolation);

            const LinearizationResult lin = linearize(grid, scenario.outages, solution, params);
            if (lin.status == LinearizeStatus::Ok) {
                const EigenOutcome eig = compute_eigenvalues(lin.matrix, config.eps_stab);
                if (eig.ok) {
                    result.spectral_abscissa = eig.report.spectral_abscissa;
                    if (eig.report.unstable) reasons.insert(Reason::SmallSignal);
                } else {
                    reasons.insert(Reason::LinearizationFailed);
                }
            } else if (lin.status == LinearizeStatus::Failed) {
                reasons.insert(Reason::LinearizationFailed);
            }
            // Degenerate islands (fewer than 2 machines) carry no small-signal
            // verdict; severity is decided by the other criteria.
        }
    } catch (const std::exception&) {
        reasons.insert(Reason::InternalError);
    }

    result.reasons.assign(reasons.begin(), reasons.end());
    result.severity = result.reasons.empty() ? 0 : 1;
    result.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------

std::string result_to_jsonl(const ScenarioResult& result) {
    json j;
    j["id"] = result.id;
    json outages = json::array();
    for (const ComponentRef& ref : result.outages) outages.push_back(ref.str());
    j["outages"] = std::move(outages);
    j["pf_converged"] = result.pf_converged;
    j["island_count"] = result.island_count;
    j["spectral_abscissa"] =
        result.spectral_abscissa ? json(*result.spectral_abscissa) : json(nullptr);
    j["severity"] = result.severity;
    json reasons = json::array();
    for (Reason r : result.reasons) reasons.push_back(to_string(r));
    j["reason"] = std::move(reasons);
    j["runtime_ms"] = result.runtime_ms;
    return j.dump();
}

ScenarioResult result_from_jsonl(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad result record: ") + e.what());
    }
    ScenarioResult r;
    try {
        r.id = j.at("id").get<std::string>();
        for (const auto& item : j.at("outages")) {
            auto ref = parse_component_ref(item.get<std::string>());
            if (!ref) throw ParseError("bad component ref in record " + r.id);
            r.outages.push_back(*ref);
        }
        r.pf_converged = j.at("pf_converged").get<bool>();
        r.island_count = j.at("island_count").get<int>();
        if (!j.at("spectral_abscissa").is_null())
            r.spectral_abscissa = j.at("spectral_abscissa").get<double>();
        r.severity = j.at("severity").get<int>();
        for (const auto& item : j.at("reason")) {
            auto reason = reason_from_string(item.get<std::string>());
            if (!reason) throw ParseError("unknown reason in record " + r.id);
            r.reasons.push_back(*reason);
        }
        r.runtime_ms = j.value("runtime_ms", 0.0);
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad result record: ") + e.what());
    }
    return r;
}

// ---------------------------------------------------------------------------

OrderedResultSink::OrderedResultSink(std::function<void(std::int64_t, const ScenarioResult&)> emit,
                                     std::int64_t first_index, std::size_t capacity)
    : emit_(std::move(emit)), next_(first_index), capacity_(std::max<std::size_t>(capacity, 1)) {}

void OrderedResultSink::push(std::int64_t index, ScenarioResult result) {
    std::unique_lock lock(mutex_);
    // The next expected index is always admitted so the pipeline can drain.
    space_.wait(lock, [&] { return index == next_ || pending_.size() < capacity_; });
    if (index == next_) {
        emit_(index, result);
        ++next_;
        auto it = pending_.begin();
        while (it != pending_.end() && it->first == next_) {
            emit_(it->first, it->second);
            ++next_;
            it = pending_.erase(it);
        }
    } else {
        pending_.emplace(index, std::move(result));
        high_water_ = std::max(high_water_, pending_.size());
    }
    space_.notify_all();
}

std::int64_t OrderedResultSink::next_index() const {
    std::lock_guard lock(mutex_);
    return next_;
}

// ---------------------------------------------------------------------------

namespace {

// Only the knobs that change result content take part in the resume guard;
// worker count and buffering do not.
std::string config_fingerprint(const EngineConfig& c) {
    json j;
    j["max_order"] = c.max_order;
    j["include_base"] = c.include_base;
    j["tol_pf"] = c.tol_pf;
    j["max_iter"] = c.max_iter;
    j["eps_stab"] = c.eps_stab;
    j["sequential_redispatch"] = c.sequential_redispatch;
    j["warm_start"] = c.warm_start;
    j["limit"] = c.limit;
    return j.dump();
}

std::vector<std::int64_t> select_indices(std::int64_t total, std::int64_t limit) {
    std::vector<std::int64_t> selected;
    if (limit <= 0 || limit >= total) {
        selected.resize(total);
        for (std::int64_t i = 0; i < total; ++i) selected[i] = i;
        return selected;
    }
    if (limit == 1) return {0};
    // Evenly strided sample including the first and last scenario.
    selected.reserve(limit);
    const double step = static_cast<double>(total - 1) / static_cast<double>(limit - 1);
    for (std::int64_t t = 0; t < limit; ++t)
        selected.push_back(std::llround(static_cast<double>(t) * step));
    return selected;
}

std::uint64_t unordered_pair_key(const GridCase& grid, const ComponentRef& a,
                                 const ComponentRef& b) {
    auto position = [&](const ComponentRef& ref) -> std::uint64_t {
        switch (ref.cls) {
        case ComponentClass::Line: return ref.id;
        case ComponentClass::Transformer: return grid.n_lines() + ref.id;
        case ComponentClass::Generator: return grid.n_lines() + grid.n_transformers() + ref.id;
        }
        return 0;
    };
    std::uint64_t pa = position(a), pb = position(b);
    if (pa > pb) std::swap(pa, pb);
    const std::uint64_t n = static_cast<std::uint64_t>(grid.n_lines()) + grid.n_transformers() +
                            grid.n_generators();
    return pa * n + pb;
}

void accumulate(RunManifest& manifest, const ScenarioResult& r) {
    ++manifest.evaluated;
    if (r.severity) {
        ++manifest.severe;
        for (Reason reason : r.reasons) ++manifest.by_reason[to_string(reason)];
    } else {
        ++manifest.stable;
    }
    if (r.pf_converged) ++manifest.pf_converged;
}

} // namespace

std::string manifest_to_json(const RunManifest& m) {
    json j;
    j["case_checksum"] = m.case_checksum;
    json cfg;
    cfg["max_order"] = m.config.max_order;
    cfg["include_base"] = m.config.include_base;
    cfg["workers"] = m.config.workers;
    cfg["tol_pf"] = m.config.tol_pf;
    cfg["max_iter"] = m.config.max_iter;
    cfg["eps_stab"] = m.config.eps_stab;
    cfg["sequential_redispatch"] = m.config.sequential_redispatch;
    cfg["warm_start"] = m.config.warm_start;
    cfg["limit"] = m.config.limit;
    j["config"] = std::move(cfg);
    j["totals"] = {{"base", m.total_base},
                   {"n1", m.total_n1},
                   {"n2", m.total_n2},
                   {"total", m.total()},
                   {"selected", m.selected},
                   {"evaluated", m.evaluated},
                   {"resumed", m.resumed}};
    j["counts"] = {{"stable", m.stable},
                   {"severe", m.severe},
                   {"pf_converged", m.pf_converged},
                   {"by_reason", m.by_reason}};
    // scheduling facts live under one key so determinism comparisons can
    // drop exactly this field
    j["runtime"] = {{"wall_time_s", m.wall_time_s}, {"tasks_per_worker", m.tasks_per_worker}};
    j["completed"] = m.completed;
    return j.dump(2);
}

RunManifest manifest_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bad manifest: ") + e.what());
    }
    RunManifest m;
    try {
        m.case_checksum = j.at("case_checksum").get<std::string>();
        const json& cfg = j.at("config");
        m.config.max_order = cfg.at("max_order").get<int>();
        m.config.include_base = cfg.at("include_base").get<bool>();
        m.config.workers = cfg.at("workers").get<int>();
        m.config.tol_pf = cfg.at("tol_pf").get<double>();
        m.config.max_iter = cfg.at("max_iter").get<int>();
        m.config.eps_stab = cfg.at("eps_stab").get<double>();
        m.config.sequential_redispatch = cfg.at("sequential_redispatch").get<bool>();
        m.config.warm_start = cfg.at("warm_start").get<bool>();
        m.config.limit = cfg.at("limit").get<std::int64_t>();
        const json& totals = j.at("totals");
        m.total_base = totals.at("base").get<std::int64_t>();
        m.total_n1 = totals.at("n1").get<std::int64_t>();
        m.total_n2 = totals.at("n2").get<std::int64_t>();
        m.selected = totals.at("selected").get<std::int64_t>();
        m.evaluated = totals.at("evaluated").get<std::int64_t>();
        m.resumed = totals.at("resumed").get<std::int64_t>();
        const json& counts = j.at("counts");
        m.stable = counts.at("stable").get<std::int64_t>();
        m.severe = counts.at("severe").get<std::int64_t>();
        m.pf_converged = counts.at("pf_converged").get<std::int64_t>();
        for (auto it = counts.at("by_reason").begin(); it != counts.at("by_reason").end(); ++it)
            m.by_reason[it.key()] = it.value().get<std::int64_t>();
        m.wall_time_s = j.at("runtime").at("wall_time_s").get<double>();
        m.tasks_per_worker =
            j.at("runtime").at("tasks_per_worker").get<std::vector<std::int64_t>>();
        m.completed = j.at("completed").get<bool>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad manifest: ") + e.what());
    }
    return m;
}

RunManifest run_all(const GridCase& grid, const EngineConfig& config,
                    const std::filesystem::path& out_dir, const DynamicParams& params) {
    if (config.workers < 1) throw ValidationError("workers must be >= 1");
    if (config.tol_pf <= 0 || config.eps_stab <= 0 || config.max_iter <= 0)
        throw ValidationError("tolerances and iteration limits must be positive");

    const auto wall0 = std::chrono::steady_clock::now();
    const ScenarioSet set(grid, config.max_order, config.include_base);
    const std::vector<std::int64_t> selected = select_indices(set.count(), config.limit);

    RunManifest manifest;
    manifest.case_checksum = case_checksum(grid);
    manifest.config = config;
    manifest.total_base = set.base_count();
    manifest.total_n1 = set.n1_count();
    manifest.total_n2 = set.n2_count();
    manifest.selected = static_cast<std::int64_t>(selected.size());
    manifest.tasks_per_worker.assign(config.workers, 0);

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string());
    const auto results_path = out_dir / "results.jsonl";
    const auto meta_path = out_dir / "run_meta.json";
    const auto manifest_path = out_dir / "manifest.json";

    // Resume guard: the output directory is bound to one (case, config) pair.
    json meta;
    meta["case_checksum"] = manifest.case_checksum;
    meta["config_fingerprint"] = config_fingerprint(config);
    meta["selected"] = manifest.selected;
    if (std::filesystem::exists(meta_path)) {
        std::ifstream in(meta_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        json existing;
        try {
            existing = json::parse(text);
        } catch (const json::parse_error&) {
            throw ValidationError("existing run_meta.json is unreadable; refusing to resume in " +
                                  out_dir.string());
        }
        if (existing != meta)
            throw ValidationError(
                "refusing to resume: case checksum or configuration differs from the run that "
                "created " + out_dir.string());
    } else {
        std::ofstream out(meta_path);
        out << meta.dump(2) << "\n";
        if (!out) throw IoError("cannot write " + meta_path.string());
    }

    // Scan any existing results: keep complete, id-consistent records and
    // drop a partial trailing line (a record is complete iff it ends in \n).
    std::int64_t done = 0;
    std::uintmax_t keep_bytes = 0;
    if (std::filesystem::exists(results_path)) {
        std::ifstream in(results_path, std::ios::binary);
        if (!in) throw IoError("cannot read " + results_path.string());
        const std::string content((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
        std::size_t start = 0;
        while (true) {
            const std::size_t nl = content.find('\n', start);
            if (nl == std::string::npos) break;
            const std::string line = content.substr(start, nl - start);
            if (line.empty())
                throw ValidationError("corrupt results file: empty record line");
            if (done >= manifest.selected)
                throw ValidationError("results file has more records than the run selects");
            ScenarioResult r = result_from_jsonl(line);
            const Scenario expected = set.at(selected[done]);
            if (r.id != expected.id)
                throw ValidationError("results file does not match enumeration order: record " +
                                      std::to_string(done) + " is '" + r.id + "', expected '" +
                                      expected.id + "'");
            accumulate(manifest, r);
            ++done;
            start = nl + 1;
            keep_bytes = start;
        }
        in.close();
        if (std::filesystem::file_size(results_path) != keep_bytes)
            std::filesystem::resize_file(results_path, keep_bytes);
    }
    manifest.resumed = done;

    std::ofstream out(results_path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot open " + results_path.string() + " for writing");

    // Base solution doubles as the warm start and is cheap relative to the run.
    PowerFlowSolution base_solution;
    if (config.warm_start) {
        SolveOptions options;
        options.tol_pf = config.tol_pf;
        options.max_iter = config.max_iter;
        base_solution = solve_power_flow(grid, {}, base_dispatch(grid), options);
    }

    const std::int64_t remaining = manifest.selected - done;
    std::atomic<std::int64_t> next{0};
    std::atomic<bool> abort{false};
    std::int64_t persisted_this_run = 0;

    OrderedResultSink sink(
        [&](std::int64_t, const ScenarioResult& r) {
            out << result_to_jsonl(r) << "\n";
            accumulate(manifest, r);
            ++persisted_this_run;
            if (persisted_this_run % 256 == 0) out.flush();
            if (config.stop_after >= 0 && persisted_this_run >= config.stop_after)
                abort.store(true, std::memory_order_relaxed);
        },
        0, std::max(config.reorder_capacity, static_cast<std::size_t>(config.workers) + 1));

    // Unordered-pair dedup: the first ordered evaluation of a pair is reused
    // for its mirror. Results are pure, so a concurrent double evaluation is
    // only wasted work, never a different record.
    std::mutex cache_mutex;
    std::unordered_map<std::uint64_t, ScenarioResult> pair_cache;

    auto evaluate_at = [&](std::int64_t position) {
        const Scenario scenario = set.at(selected[done + position]);
        if (scenario.order() == 2 && !config.sequential_redispatch) {
            const std::uint64_t key =
                unordered_pair_key(grid, scenario.outages[0], scenario.outages[1]);
            {
                std::lock_guard lock(cache_mutex);
                auto it = pair_cache.find(key);
                if (it != pair_cache.end()) {
                    ScenarioResult r = std::move(it->second);
                    pair_cache.erase(it);
                    r.id = scenario.id;
                    r.outages = scenario.outages;
                    return r;
                }
            }
            ScenarioResult r = evaluate_scenario(grid, scenario, config, params,
                                                 config.warm_start ? &base_solution : nullptr);
            {
                std::lock_guard lock(cache_mutex);
                pair_cache.emplace(key, r);
            }
            return r;
        }
        return evaluate_scenario(grid, scenario, config, params,
                                 config.warm_start ? &base_solution : nullptr);
    };

    auto worker_loop = [&](int worker_id) {
        while (!abort.load(std::memory_order_relaxed)) {
            const std::int64_t k = next.fetch_add(1);
            if (k >= remaining) break;
            ScenarioResult r = evaluate_at(k);
            ++manifest.tasks_per_worker[worker_id];
            sink.push(k, std::move(r));
        }
    };

#ifdef _OPENMP
    if (config.workers > 1) {
#pragma omp parallel num_threads(config.workers)
        { worker_loop(omp_get_thread_num()); }
    } else {
        worker_loop(0); // serial reference path
    }
#else
    worker_loop(0);
#endif

    out.flush();
    if (!out) throw IoError("write failure on " + results_path.string());
    out.close();

    manifest.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    manifest.completed = manifest.evaluated == manifest.selected;
    if (manifest.completed) {
        std::ofstream mf(manifest_path);
        mf << manifest_to_json(manifest) << "\n";
        if (!mf) throw IoError("cannot write " + manifest_path.string());
    }
    return manifest;
}

} // namespace gridrisk
