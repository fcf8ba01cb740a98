#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "gridrisk/case_io.hpp"
#include "gridrisk/engine.hpp"
#include "gridrisk/risk_rank.hpp"
#include "gridrisk/smallsignal.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitInternal = 4;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw gridrisk::IoError("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Native documents are JSON objects; anything else goes to the MATPOWER
// parser.
gridrisk::CaseDocument load_case(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{')
        return gridrisk::parse_native_case(text);
    return gridrisk::parse_matpower_case(text);
}

int default_workers() {
    if (const char* env = std::getenv("GRIDRISK_WORKERS")) {
        const int value = std::atoi(env);
        if (value >= 1) return value;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

int cmd_validate(const std::string& case_path) {
    const gridrisk::CaseDocument doc = load_case(case_path);
    for (const std::string& w : doc.warnings) std::cerr << "warning: " << w << "\n";
    const gridrisk::GridCase& grid = doc.grid;
    std::printf("buses=%d lines=%d transformers=%d generators=%d\n", grid.n_bus(), grid.n_lines(),
                grid.n_transformers(), grid.n_generators());
    std::printf("base_mva=%g frequency=%g slack_bus=%d checksum=%s\n", grid.base_mva,
                grid.frequency, grid.slack_bus, doc.checksum.c_str());
    return kExitOk;
}

struct RunArgs {
    std::string case_path;
    std::string out_dir;
    std::string reliability_path;
    std::string dynamics_path;
    int order = 2;
    bool no_base = false;
    int workers = default_workers();
    double tol_pf = 1e-8;
    int max_iter = 20;
    double eps_stab = 1e-9;
    bool sequential_redispatch = false;
    bool warm_start = false;
    std::int64_t limit = 0;
};

int cmd_run(const RunArgs& args) {
    const gridrisk::CaseDocument doc = load_case(args.case_path);
    for (const std::string& w : doc.warnings) std::cerr << "warning: " << w << "\n";

    // rank-time data, but validate it now so a bad file fails fast
    if (!args.reliability_path.empty())
        gridrisk::load_reliability(read_file(args.reliability_path), doc.grid);

    gridrisk::DynamicParams params = args.dynamics_path.empty()
                                         ? gridrisk::dynamics_from_case(doc.grid)
                                         : gridrisk::load_dynamics_csv(
                                               read_file(args.dynamics_path), doc.grid);

    gridrisk::EngineConfig config;
    config.max_order = args.order;
    config.include_base = !args.no_base;
    config.workers = args.workers;
    config.tol_pf = args.tol_pf;
    config.max_iter = args.max_iter;
    config.eps_stab = args.eps_stab;
    config.sequential_redispatch = args.sequential_redispatch;
    config.warm_start = args.warm_start;
    config.limit = args.limit;

    const gridrisk::RunManifest manifest =
        gridrisk::run_all(doc.grid, config, args.out_dir, params);

    const double stable_fraction =
        manifest.evaluated > 0 ? 100.0 * static_cast<double>(manifest.stable) /
                                     static_cast<double>(manifest.evaluated)
                               : 0.0;
    std::printf("evaluated states: %lld of %lld enumerated (base=%lld n1=%lld n2=%lld)\n",
                static_cast<long long>(manifest.evaluated),
                static_cast<long long>(manifest.total()),
                static_cast<long long>(manifest.total_base),
                static_cast<long long>(manifest.total_n1),
                static_cast<long long>(manifest.total_n2));
    if (manifest.resumed > 0)
        std::printf("resumed run: %lld records reused from a previous attempt\n",
                    static_cast<long long>(manifest.resumed));
    std::printf("stable=%lld (%.2f%%) severe=%lld wall=%.1fs workers=%d\n",
                static_cast<long long>(manifest.stable), stable_fraction,
                static_cast<long long>(manifest.severe), manifest.wall_time_s, config.workers);
    std::printf("results: %s\n", (std::filesystem::path(args.out_dir) / "results.jsonl").c_str());
    return kExitOk;
}

struct RankArgs {
    std::string results_path;
    std::string case_path;
    std::string reliability_path;
    std::string out_dir;
    int top_k = 20;
    bool unordered_pairs = false;
};

int cmd_rank(const RankArgs& args) {
    const gridrisk::CaseDocument doc = load_case(args.case_path);
    const gridrisk::ReliabilityTable table =
        args.reliability_path.empty()
            ? gridrisk::default_reliability()
            : gridrisk::load_reliability(read_file(args.reliability_path), doc.grid);

    // Accept either the run directory or its results.jsonl.
    std::filesystem::path run_dir(args.results_path);
    if (!std::filesystem::is_directory(run_dir)) run_dir = run_dir.parent_path();

    const gridrisk::RiskRanking ranking =
        gridrisk::compute_risk_from_run(run_dir, table, doc.grid, args.unordered_pairs);

    const std::filesystem::path out_dir =
        args.out_dir.empty() ? run_dir : std::filesystem::path(args.out_dir);
    gridrisk::emit_reports(ranking, doc.grid, out_dir, args.top_k);
    std::cout << gridrisk::format_ranking_table(ranking, doc.grid, args.top_k);
    std::printf("reports written to %s\n", out_dir.c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contingency screening and probabilistic risk ranking"};
    app.require_subcommand(1);

    std::string validate_path;
    CLI::App* validate = app.add_subcommand("validate", "parse a case and report its structure");
    validate->add_option("case", validate_path, "case file (native JSON or MATPOWER .m)")
        ->required();

    RunArgs run_args;
    CLI::App* run = app.add_subcommand("run", "evaluate the contingency set");
    run->add_option("--case", run_args.case_path, "case file")->required();
    run->add_option("--out", run_args.out_dir, "output directory")->required();
    run->add_option("--reliability", run_args.reliability_path, "reliability CSV (rank-time data; accepted here for config echo)");
    run->add_option("--dynamics", run_args.dynamics_path, "machine dynamics CSV");
    run->add_option("--order", run_args.order, "contingency depth (1 or 2)")
        ->check(CLI::IsMember({1, 2}));
    run->add_flag("--no-base", run_args.no_base, "skip the base (no-outage) scenario");
    run->add_option("--workers", run_args.workers, "worker threads (default $GRIDRISK_WORKERS)");
    run->add_option("--tol-pf", run_args.tol_pf, "power-flow mismatch tolerance, pu");
    run->add_option("--max-iter", run_args.max_iter, "Newton-Raphson iteration cap");
    run->add_option("--eps-stab", run_args.eps_stab, "stability classification guard band");
    run->add_flag("--sequential-redispatch", run_args.sequential_redispatch,
                  "redispatch ordered pairs one outage at a time (disables pair dedup)");
    run->add_flag("--warm-start", run_args.warm_start, "start solves from the base solution");
    run->add_option("--limit", run_args.limit,
                    "evaluate a deterministic evenly-strided sample of this many scenarios");

    RankArgs rank_args;
    CLI::App* rank = app.add_subcommand("rank", "compute the risk ranking from run results");
    rank->add_option("--results", rank_args.results_path, "run directory or results.jsonl")
        ->required();
    rank->add_option("--case", rank_args.case_path, "case file")->required();
    rank->add_option("--reliability", rank_args.reliability_path, "reliability CSV");
    rank->add_option("--out", rank_args.out_dir, "report directory (default: run directory)");
    rank->add_option("--top", rank_args.top_k, "rows in the combined report");
    rank->add_flag("--unordered-pairs", rank_args.unordered_pairs,
                   "count each unordered pair once (halves N-2 contributions)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (validate->parsed()) return cmd_validate(validate_path);
        if (run->parsed()) return cmd_run(run_args);
        if (rank->parsed()) return cmd_rank(rank_args);
        return kExitValidation;
    } catch (const gridrisk::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const gridrisk::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const gridrisk::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
