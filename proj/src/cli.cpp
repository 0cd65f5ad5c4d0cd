#include "rubra/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "rubra/permute.hpp"
#include "rubra/report.hpp"
#include "rubra/runner.hpp"
#include "rubra/sim.hpp"

namespace rubra::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartialFailure = 1;
constexpr int kExitUsage = 2;

/// Loads a score-position profile from a JSON file. Accepts either fraction
/// rows (the analyze output format) or percent rows tagged "units":"percent"
/// (handy for typing in externally measured tables).
PositionProfile load_profile_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open profile '" + path.string() + "'");
    json j;
    in >> j;
    if (j.value("units", "fraction") == "percent") {
        auto rows = j.at("rows").get<std::vector<std::vector<double>>>();
        for (auto& row : rows) {
            for (double& v : row) v /= 100.0;
        }
        std::vector<int> undefined;
        if (j.contains("undefined_rows")) j["undefined_rows"].get_to(undefined);
        return PositionProfile::from_fractions(std::move(rows), undefined);
    }
    return j.get<PositionProfile>();
}

std::vector<Permutation> load_orderings_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open orderings file '" + path.string() + "'");
    std::vector<Permutation> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(Permutation::parse(line));
    }
    if (out.empty()) throw DomainError("orderings file '" + path.string() + "' is empty");
    return out;
}

std::vector<RunRecord> load_store_records(const std::filesystem::path& path) {
    RunStore store(path);
    return store.records();
}

struct PermuteArgs {
    int k = 5;
};

int cmd_permute(const PermuteArgs& args, std::ostream& out) {
    const BalancedSet set = generate_balanced_set(args.k);
    for (const Permutation& p : set.orderings) out << p.to_string() << '\n';
    return kExitOk;
}

struct RunArgs {
    std::string plan_path;
    std::string store_path;
    std::string dataset_override;
    std::string mode_override;
    std::string endpoint_override;
    std::string model_override;
    std::string orderings_file;
    double temperature_override = -1.0;
    std::int64_t seed_override = -1;
    int max_inflight_override = 0;
    long long limit = -1;
    int probe_instances = 0;
    bool do_probe = false;
    std::string out_path;
};

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
    RunPlan plan = RunPlan::load(args.plan_path);
    if (!args.dataset_override.empty()) plan.dataset_path = args.dataset_override;
    if (!args.mode_override.empty()) plan.mode = run_mode_from_string(args.mode_override);
    if (!args.endpoint_override.empty()) plan.http.endpoint = args.endpoint_override;
    if (!args.model_override.empty()) plan.http.model_name = args.model_override;
    if (args.temperature_override >= 0.0) plan.http.temperature = args.temperature_override;
    if (args.seed_override >= 0) plan.seed = static_cast<std::uint64_t>(args.seed_override);
    if (args.max_inflight_override > 0) plan.max_inflight = args.max_inflight_override;
    if (!args.orderings_file.empty()) {
        plan.custom_orderings = load_orderings_file(args.orderings_file);
        plan.mode = RunMode::custom;
    }

    const Dataset dataset = ingest_dataset(plan.dataset_path);
    if (!dataset.issues.empty()) {
        for (const DatasetIssue& issue : dataset.issues) {
            err << plan.dataset_path << ":" << issue.line << ": " << issue.message << '\n';
        }
        err << "dataset rejected with " << dataset.issues.size() << " error(s)\n";
        return kExitUsage;
    }

    const std::unique_ptr<Judge> judge = plan.make_judge(dataset.k);
    RunStore store(args.store_path);
    RunnerOptions options;
    options.max_dispatches = args.limit;

    if (args.do_probe) {
        const ProbeResult result =
            probe(plan, dataset, *judge, store, args.probe_instances, options);
        if (!result.balanced) {
            err << "warning: probe orderings are not a balanced family\n";
        }
        out << report::profile_text(result.profile);
        if (!args.out_path.empty()) {
            report::write_json(args.out_path, json(result.profile));
            out << "profile written to " << args.out_path << '\n';
        }
        const RunSummary& s = result.summary;
        out << "probe trials: completed " << s.completed << ", cached " << s.cached_skipped
            << ", parse-failed " << s.parse_failed << ", transport-failed "
            << s.transport_failed << '\n';
        return s.parse_failed + s.transport_failed > 0 ? kExitPartialFailure : kExitOk;
    }

    const RunSummary s = execute(plan, dataset, *judge, store, options);
    out << "completed " << s.completed << ", cached " << s.cached_skipped << ", parse-failed "
        << s.parse_failed << ", transport-failed " << s.transport_failed << ", dispatched "
        << s.dispatched << '\n';
    if (s.stopped_at_limit) out << "stopped at dispatch limit; rerun to continue\n";
    return s.parse_failed + s.transport_failed > 0 ? kExitPartialFailure : kExitOk;
}

struct AnalyzeArgs {
    std::string store_path;
    std::string human_dataset;
    std::string out_dir;
    std::string mode = "permutation";
    bool position_dist = false;
    bool profile = false;
    bool sigma = false;
    bool correlations = false;
};

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
    const std::vector<RunRecord> records = load_store_records(args.store_path);
    if (records.empty()) {
        err << "store '" << args.store_path << "' has no records\n";
        return kExitUsage;
    }
    const AggregationMode mode = aggregation_mode_from_string(args.mode);
    const bool all = !args.position_dist && !args.profile && !args.sigma && !args.correlations;
    const std::filesystem::path out_dir =
        args.out_dir.empty() ? std::filesystem::path(".") : std::filesystem::path(args.out_dir);

    if (all || args.position_dist) {
        const PositionDistribution dist = position_distribution(records);
        if (!dist.balanced_source) {
            err << "warning: records do not come from a balanced ordering family\n";
        }
        out << "== position selection distribution ==\n"
            << report::position_distribution_text(dist) << '\n';
        report::write_text(out_dir / "position_distribution.txt",
                           report::position_distribution_text(dist));
        report::write_json(out_dir / "position_distribution.json",
                           report::position_distribution_json(dist));
    }

    if (all || args.profile) {
        const PositionProfile profile = score_position_profile(records);
        out << "== score-position profile ==\n" << report::profile_text(profile) << '\n';
        report::write_text(out_dir / "score_position_profile.txt",
                           report::profile_text(profile));
        report::write_json(out_dir / "score_position_profile.json", json(profile));

        // bias cost over the canonical rotations, when every touched row exists
        const BalancedSet rotations = generate_balanced_set(profile.k());
        try {
            const std::vector<OrderingCost> costs =
                bias_cost_table(profile, rotations.orderings);
            const OrderingCost best = min_bias_ordering(profile, rotations.orderings);
            out << "== bias cost (canonical rotations) ==\n"
                << report::bias_cost_text(costs, best.index) << '\n';
            report::write_text(out_dir / "bias_cost.txt",
                               report::bias_cost_text(costs, best.index));
            report::write_json(out_dir / "bias_cost.json",
                               report::bias_cost_json(costs, best.index));
        } catch (const DomainError& e) {
            err << "bias cost skipped: " << e.what() << '\n';
        }
    }

    if (all || args.sigma) {
        const ConsistencyReport sigma = within_item_sigma(records);
        out << "== within-item sigma ==\n" << report::sigma_text(sigma) << '\n';
        report::write_text(out_dir / "sigma.txt", report::sigma_text(sigma));
        report::write_json(out_dir / "sigma.json", json(sigma));
    }

    if (args.correlations) {
        if (args.human_dataset.empty()) {
            err << "--correlations needs --human <dataset with human_scores>\n";
            return kExitUsage;
        }
        const Dataset human_ds = ingest_dataset(args.human_dataset);
        const auto human = human_ds.human_scores();
        if (human.empty()) {
            err << "no human scores in '" << args.human_dataset << "'\n";
            return kExitUsage;
        }
        const CorrelationReport overall = correlation_report(records, human, mode);
        out << "== correlation vs human ==\n" << report::correlation_text(overall) << '\n';
        report::write_text(out_dir / "correlations.txt", report::correlation_text(overall));
        report::write_json(out_dir / "correlations.json", report::correlation_json(overall));

        const OrderingCorrelations per = per_ordering_correlations(records, human);
        if (per.by_ordering.size() > 1) {
            int k = records.front().permutation.k();
            const BalancedSet rotations = generate_balanced_set(k);
            out << "== per-ordering correlations ==\n"
                << report::per_ordering_text(per, rotations.orderings) << '\n';
            report::write_text(out_dir / "per_ordering_correlations.txt",
                               report::per_ordering_text(per, rotations.orderings));
            json per_json = json::object();
            for (const auto& [index, rep] : per.by_ordering) {
                json entry = report::correlation_json(rep);
                try {
                    entry["pearson_rank"] = ordering_rank(per, index, CorrelationMetric::pearson);
                    entry["spearman_rank"] =
                        ordering_rank(per, index, CorrelationMetric::spearman);
                } catch (const DomainError&) {
                    // undefined metric for this ordering: rank omitted
                }
                per_json[std::to_string(index)] = entry;
            }
            report::write_json(out_dir / "per_ordering_correlations.json", per_json);
        }
    }
    return kExitOk;
}

struct SelectArgs {
    std::string store_path;
    std::string profile_path;
    std::string candidates_file;
    std::string out_path;
};

int cmd_select_ordering(const SelectArgs& args, std::ostream& out, std::ostream& err) {
    if (args.profile_path.empty() && args.store_path.empty()) {
        err << "select-ordering needs --store or --profile\n";
        return kExitUsage;
    }
    PositionProfile profile;
    if (!args.profile_path.empty()) {
        profile = load_profile_file(args.profile_path);
    } else {
        profile = score_position_profile(load_store_records(args.store_path));
    }

    std::vector<Permutation> candidates;
    if (!args.candidates_file.empty()) {
        candidates = load_orderings_file(args.candidates_file);
    } else {
        candidates = generate_balanced_set(profile.k()).orderings;
    }

    std::vector<OrderingCost> costs;
    OrderingCost best;
    try {
        costs = bias_cost_table(profile, candidates);
        best = min_bias_ordering(profile, candidates);
    } catch (const DomainError& e) {
        err << e.what() << '\n';
        return kExitUsage;
    }

    out << report::bias_cost_text(costs, best.index);
    out << "recommended ordering: " << best.ordering.to_string() << " (bias cost "
        << report::percent(best.cost) << " %)\n";
    if (!args.out_path.empty()) {
        json j = report::bias_cost_json(costs, best.index);
        j["recommended"] = best.ordering.to_string();
        j["recommended_cost"] = best.cost;
        report::write_json(args.out_path, j);
    }
    return kExitOk;
}

struct SimulateArgs {
    std::string params_path;
    std::string out_dir = ".";
    bool serial = false;
};

int cmd_simulate(const SimulateArgs& args, std::ostream& out, std::ostream& err) {
    std::ifstream in(args.params_path, std::ios::binary);
    if (!in) {
        err << "cannot open params '" << args.params_path << "'\n";
        return kExitUsage;
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        err << "params file is not valid JSON: " << e.what() << '\n';
        return kExitUsage;
    }

    SyntheticJudgeParams params;
    long long draws = 50000;
    int items = 200;
    int trials_per_item = 0;
    int replications = 20;
    try {
        params = j.get<SyntheticJudgeParams>();
        params.validate();
        if (j.contains("draws")) j["draws"].get_to(draws);
        if (j.contains("items")) j["items"].get_to(items);
        if (j.contains("trials_per_item")) j["trials_per_item"].get_to(trials_per_item);
        if (j.contains("replications")) j["replications"].get_to(replications);
    } catch (const std::exception& e) {
        err << "invalid synthetic params: " << e.what() << '\n';
        return kExitUsage;
    }
    const int k = params.k();
    if (trials_per_item <= 0) trials_per_item = 2 * k;
    const Execution exec = args.serial ? Execution::serial : Execution::parallel;
    const std::filesystem::path out_dir(args.out_dir);

    // draw study: position distribution + profile against the exact expectation
    const BalancedSet set = generate_balanced_set(k);
    const std::vector<RunRecord> records = simulate_draws(params, set.orderings, draws, exec);
    const PositionDistribution dist = position_distribution(records);
    const PositionProfile observed = score_position_profile(records);
    const PositionProfile expected = expected_position_profile(params, set);

    double max_diff = 0.0;
    for (int s = 1; s <= k; ++s) {
        if (!observed.defined(s) || !expected.defined(s)) continue;
        for (int p = 1; p <= k; ++p) {
            max_diff = std::max(max_diff, std::abs(observed.at(s, p) - expected.at(s, p)));
        }
    }

    out << "== simulated position distribution (" << draws << " draws) ==\n"
        << report::position_distribution_text(dist) << '\n';
    out << "== simulated score-position profile ==\n" << report::profile_text(observed) << '\n';
    out << "== exact expectation ==\n" << report::profile_text(expected);
    out << "max |observed - expected| = " << report::fixed(max_diff, 4) << "\n\n";
    report::write_text(out_dir / "position_distribution.txt",
                       report::position_distribution_text(dist));
    report::write_json(out_dir / "position_distribution.json",
                       report::position_distribution_json(dist));
    report::write_json(out_dir / "score_position_profile.json", json(observed));
    report::write_json(out_dir / "expected_profile.json", json(expected));

    // permutation-vs-repeat calibration replications
    json reps = json::array();
    int perm_mae_wins = 0;
    int perm_r_wins = 0;
    std::vector<std::vector<std::string>> rows;
    for (int rep = 0; rep < replications; ++rep) {
        SyntheticJudgeParams rep_params = params;
        rep_params.seed = stream_seed(params.seed, "replication|" + std::to_string(rep));
        const CalibrationOutcome o =
            simulate_calibration(rep_params, items, trials_per_item, exec);
        const bool mae_win = o.perm_mae < o.rep_mae;
        const bool r_win = o.perm_r && o.rep_r && *o.perm_r > *o.rep_r;
        perm_mae_wins += mae_win;
        perm_r_wins += r_win;
        rows.push_back({std::to_string(rep), report::fixed(o.perm_mae, 4),
                        report::fixed(o.rep_mae, 4),
                        o.perm_r ? report::fixed(*o.perm_r, 4) : "undefined",
                        o.rep_r ? report::fixed(*o.rep_r, 4) : "undefined",
                        report::fixed(o.perm_mean_sigma, 3),
                        report::fixed(o.rep_mean_sigma, 3)});
        reps.push_back({{"replication", rep},
                        {"perm_mae", o.perm_mae},
                        {"rep_mae", o.rep_mae},
                        {"perm_r", o.perm_r ? json(*o.perm_r) : json()},
                        {"rep_r", o.rep_r ? json(*o.rep_r) : json()},
                        {"perm_rho", o.perm_rho ? json(*o.perm_rho) : json()},
                        {"rep_rho", o.rep_rho ? json(*o.rep_rho) : json()},
                        {"perm_mean_sigma", o.perm_mean_sigma},
                        {"rep_mean_sigma", o.rep_mean_sigma}});
    }
    const std::string calib_table =
        report::table({"rep", "perm MAE", "rep MAE", "perm r", "rep r", "perm sigma",
                       "rep sigma"},
                      rows);
    out << "== permutation vs repeat (" << replications << " replications, " << items
        << " items x " << trials_per_item << " trials) ==\n"
        << calib_table;
    out << "permutation wins on MAE: " << perm_mae_wins << "/" << replications << "\n";
    out << "permutation wins on pearson r: " << perm_r_wins << "/" << replications << "\n";
    report::write_text(out_dir / "calibration.txt", calib_table);
    report::write_json(out_dir / "calibration.json",
                       json{{"replications", reps},
                            {"perm_mae_wins", perm_mae_wins},
                            {"perm_r_wins", perm_r_wins}});
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"rubric-order bias analysis for LLM judges"};
    app.require_subcommand(1);

    PermuteArgs permute_args;
    CLI::App* permute_cmd =
        app.add_subcommand("permute", "Print the canonical balanced ordering family");
    permute_cmd->add_option("--k", permute_args.k, "Number of rubric scores")
        ->check(CLI::Range(2, 1000));

    RunArgs run_args;
    CLI::App* run_cmd = app.add_subcommand("run", "Execute an evaluation plan");
    run_cmd->add_option("--plan", run_args.plan_path, "Plan file (JSON)")->required();
    run_cmd->add_option("--store", run_args.store_path, "Run store (JSONL, append-only)")
        ->required();
    run_cmd->add_option("--dataset", run_args.dataset_override, "Override the plan's dataset");
    run_cmd->add_option("--mode", run_args.mode_override, "permutation | repeat | custom");
    run_cmd->add_option("--orderings", run_args.orderings_file,
                        "File with one bracketed ordering per line (forces custom mode)");
    run_cmd->add_option("--endpoint", run_args.endpoint_override, "HTTP judge endpoint");
    run_cmd->add_option("--model", run_args.model_override, "HTTP judge model name");
    run_cmd->add_option("--temperature", run_args.temperature_override, "Sampling temperature");
    run_cmd->add_option("--seed", run_args.seed_override, "Plan seed");
    run_cmd->add_option("--max-inflight", run_args.max_inflight_override,
                        "Concurrent in-flight judge calls");
    run_cmd->add_option("--limit", run_args.limit,
                        "Dispatch at most N trials this invocation, then stop");
    run_cmd->add_flag("--probe", run_args.do_probe,
                      "Probe mode: run and print the score-position profile");
    run_cmd->add_option("--probe-instances", run_args.probe_instances,
                        "Probe over the first N instances (0 = all)");
    run_cmd->add_option("--out", run_args.out_path, "Where to write the probe profile (JSON)");

    AnalyzeArgs analyze_args;
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Compute reports from a run store");
    analyze_cmd->add_option("--store", analyze_args.store_path, "Run store")->required();
    analyze_cmd->add_option("--human", analyze_args.human_dataset,
                            "Dataset with human_scores for correlation reports");
    analyze_cmd->add_option("--out", analyze_args.out_dir, "Report output directory");
    analyze_cmd->add_option("--mode", analyze_args.mode,
                            "Aggregation label: permutation | repeat | single-ordering");
    analyze_cmd->add_flag("--position-dist", analyze_args.position_dist,
                          "Position selection distribution");
    analyze_cmd->add_flag("--profile", analyze_args.profile,
                          "Score-position profile and bias cost table");
    analyze_cmd->add_flag("--sigma", analyze_args.sigma, "Within-item standard deviation");
    analyze_cmd->add_flag("--correlations", analyze_args.correlations,
                          "Correlation against human scores (needs --human)");

    SelectArgs select_args;
    CLI::App* select_cmd =
        app.add_subcommand("select-ordering", "Pick the minimum-bias-cost ordering");
    select_cmd->add_option("--store", select_args.store_path, "Run store to profile");
    select_cmd->add_option("--profile", select_args.profile_path,
                           "Profile file (fraction rows, or percent rows with units:percent)");
    select_cmd->add_option("--candidates", select_args.candidates_file,
                           "Candidate orderings file (default: canonical rotations)");
    select_cmd->add_option("--out", select_args.out_path, "Where to write the result (JSON)");

    SimulateArgs simulate_args;
    CLI::App* simulate_cmd =
        app.add_subcommand("simulate", "Run the synthetic-judge bias study");
    simulate_cmd->add_option("--params", simulate_args.params_path, "Synthetic params (JSON)")
        ->required();
    simulate_cmd->add_option("--out", simulate_args.out_dir, "Report output directory");
    simulate_cmd->add_flag("--serial", simulate_args.serial,
                           "Use the serial reference kernels instead of OpenMP");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (permute_cmd->parsed()) return cmd_permute(permute_args, out);
        if (run_cmd->parsed()) return cmd_run(run_args, out, err);
        if (analyze_cmd->parsed()) return cmd_analyze(analyze_args, out, err);
        if (select_cmd->parsed()) return cmd_select_ordering(select_args, out, err);
        if (simulate_cmd->parsed()) return cmd_simulate(simulate_args, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    err << "no subcommand\n";
    return kExitUsage;
}

}  // namespace rubra::cli
