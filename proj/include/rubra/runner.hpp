#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <map>

#include "rubra/judges.hpp"
#include "rubra/protocol.hpp"

namespace rubra {

// ---------------------------------------------------------------------------
// Dataset ingestion
// ---------------------------------------------------------------------------

struct DatasetIssue {
    int line = 0;
    std::string message;
};

struct Dataset {
    std::vector<EvaluationInstance> instances;
    std::vector<DatasetIssue> issues;
    int k = 0;

    /// instance id -> per-rater scores, for instances that carry them.
    std::map<std::string, std::vector<double>> human_scores() const;
};

/// Reads a line-delimited dataset (one JSON object per line with fields id,
/// instruction, response, reference?, criterion, rubric_descriptions,
/// human_scores?, criterion_tag?). Bad lines become issues with their line
/// number; good lines still load.
Dataset ingest_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::istream& in, const std::string& origin);

// ---------------------------------------------------------------------------
// Run plans
// ---------------------------------------------------------------------------

enum class RunMode { permutation, repeat, custom };

std::string_view to_string(RunMode mode);
RunMode run_mode_from_string(std::string_view name);

enum class JudgeKind { mock, synthetic, http };

/// Everything needed to reproduce a run: dataset, judge, orderings, trial
/// counts, template, seed. The total budget is 2K trials per instance in
/// both stock modes, so permutation and repeat runs cost the same.
struct RunPlan {
    std::string dataset_path;
    JudgeKind judge_kind = JudgeKind::mock;
    JudgeConfig http;
    SyntheticJudgeParams synthetic;
    RunMode mode = RunMode::permutation;
    /// Canonical index of the ordering repeat mode fixes (0 = identity).
    int repeat_ordering_index = 0;
    std::vector<Permutation> custom_orderings;
    std::vector<int> custom_trials;  // per ordering; empty = 1 each
    std::string template_ref = "builtin:with-reference";
    std::uint64_t seed = 0;
    bool lenient_parse = false;
    /// When set, stamped into every record's created_at, making store bytes
    /// a pure function of the plan. Unset = wall clock.
    std::optional<std::string> run_stamp;
    int max_inflight = 4;

    static RunPlan load(const std::filesystem::path& path);
    void validate() const;
    std::unique_ptr<Judge> make_judge(int k) const;

    struct TrialGroup {
        int ordering_index = 0;
        Permutation ordering;
        int trials = 1;
    };
    /// The plan's orderings with their trial counts and the ordering indices
    /// recorded into the store (canonical indices for stock modes, list
    /// positions for custom mode).
    std::vector<TrialGroup> trial_layout(int k) const;
};

void to_json(json& j, const RunPlan& p);
void from_json(const json& j, RunPlan& p);

// ---------------------------------------------------------------------------
// Run store
// ---------------------------------------------------------------------------

class StoreError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Append-only line-delimited store of RunRecords, keyed by
/// (instance_id, ordering_index, trial_index, request_fingerprint).
/// Loading tolerates a torn final line (a crash mid-append); anything else
/// unparsable is corruption. Appends are flushed per record so a killed run
/// leaves a clean prefix.
class RunStore {
  public:
    explicit RunStore(std::filesystem::path path);
    ~RunStore();

    RunStore(const RunStore&) = delete;
    RunStore& operator=(const RunStore&) = delete;

    bool contains(const std::string& instance_id, int ordering_index, int trial_index,
                  std::uint64_t fingerprint) const;
    const RunRecord* find(const std::string& instance_id, int ordering_index, int trial_index,
                          std::uint64_t fingerprint) const;
    void append(const RunRecord& record);

    const std::vector<RunRecord>& records() const { return records_; }
    const std::filesystem::path& path() const { return path_; }
    bool recovered_torn_line() const { return recovered_torn_line_; }

  private:
    std::filesystem::path path_;
    std::vector<RunRecord> records_;
    std::map<std::tuple<std::string, int, int, std::uint64_t>, std::size_t> index_;
    std::unique_ptr<std::ofstream> out_;
    mutable std::mutex mutex_;
    bool recovered_torn_line_ = false;
};

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct RunnerOptions {
    /// Overrides the plan's in-flight cap when > 0.
    int max_inflight = 0;
    /// Stop submitting new trials after this many dispatches (< 0 =
    /// unlimited). Lets expensive runs proceed in budgeted slices; the next
    /// invocation resumes where this one stopped.
    long long max_dispatches = -1;
    /// Timestamp source for records when the plan does not pin run_stamp.
    std::function<std::string()> clock;
    /// Collects the plan's full record set (cached and fresh) in canonical
    /// order when non-null.
    std::vector<RunRecord>* covered = nullptr;
};

struct RunSummary {
    long long completed = 0;      // parsed verdicts persisted
    long long parse_failed = 0;   // failure records persisted
    long long transport_failed = 0;
    long long cached_skipped = 0;
    long long dispatched = 0;
    bool stopped_at_limit = false;

    long long persisted() const { return completed + parse_failed; }
};

/// Runs every (instance, ordering, trial) of the plan that the store does
/// not already hold: render, dispatch, parse (with one same-prompt retry on
/// a parse failure), persist. Store writes follow canonical
/// (instance_id, ordering_index, trial_index) order no matter how the
/// in-flight window completes, so interrupted runs leave a clean prefix and
/// deterministic judges give byte-identical stores. Per-trial errors are
/// recorded, never fatal; transport failures are not persisted and will be
/// retried by the next run.
RunSummary execute(const RunPlan& plan, const Dataset& dataset, Judge& judge, RunStore& store,
                   const RunnerOptions& options = {});

struct ProbeResult {
    PositionProfile profile;
    RunSummary summary;
    /// False when the probe's orderings do not form a balanced family.
    bool balanced = true;
};

/// Probe run: executes the plan over the first `probe_instances` instances
/// (by id; <= 0 means all) and returns the score-position profile of the
/// covered records.
ProbeResult probe(const RunPlan& plan, const Dataset& dataset, Judge& judge, RunStore& store,
                  int probe_instances = 0, const RunnerOptions& options = {});

}  // namespace rubra
