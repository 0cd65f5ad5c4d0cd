#include "rubra/runner.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <future>
#include <set>

#include "rubra/permute.hpp"
#include "rubra/stats.hpp"

namespace rubra {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

std::map<std::string, std::vector<double>> Dataset::human_scores() const {
    std::map<std::string, std::vector<double>> out;
    for (const EvaluationInstance& inst : instances) {
        if (!inst.human_scores.empty()) out[inst.id] = inst.human_scores;
    }
    return out;
}

namespace {

std::optional<std::string> validate_instance_line(const json& j, EvaluationInstance& inst) {
    if (!j.is_object()) return "line is not a JSON object";
    for (const char* field : {"id", "instruction", "response", "criterion"}) {
        if (!j.contains(field)) return std::string("missing field '") + field + "'";
    }
    if (!j.contains("rubric_descriptions")) return "missing field 'rubric_descriptions'";

    if (j["id"].is_string()) {
        inst.id = j["id"].get<std::string>();
    } else if (j["id"].is_number_integer()) {
        inst.id = std::to_string(j["id"].get<long long>());
    } else {
        return "field 'id' must be a string or integer";
    }
    if (inst.id.empty()) return "field 'id' is empty";

    for (const char* field : {"instruction", "response", "criterion"}) {
        if (!j[field].is_string()) return std::string("field '") + field + "' must be a string";
    }
    inst.instruction = j["instruction"].get<std::string>();
    inst.response = j["response"].get<std::string>();
    inst.rubric.criterion_text = j["criterion"].get<std::string>();

    const json& descs = j["rubric_descriptions"];
    if (!descs.is_array() || descs.size() < 2) {
        return "'rubric_descriptions' must be an array of at least 2 strings";
    }
    inst.rubric.descriptions.clear();
    for (const json& d : descs) {
        if (!d.is_string() || d.get<std::string>().empty()) {
            return "'rubric_descriptions' entries must be non-empty strings";
        }
        inst.rubric.descriptions.push_back(d.get<std::string>());
    }
    const int k = inst.rubric.k();

    inst.reference.reset();
    if (j.contains("reference") && !j["reference"].is_null()) {
        if (!j["reference"].is_string()) return "field 'reference' must be a string";
        inst.reference = j["reference"].get<std::string>();
    }

    inst.human_scores.clear();
    if (j.contains("human_scores") && !j["human_scores"].is_null()) {
        if (!j["human_scores"].is_array()) return "field 'human_scores' must be an array";
        for (const json& s : j["human_scores"]) {
            if (!s.is_number()) return "'human_scores' entries must be numbers";
            const double v = s.get<double>();
            if (v < 1.0 || v > static_cast<double>(k)) {
                return "human score " + std::to_string(v) + " outside [1, " + std::to_string(k) +
                       "]";
            }
            inst.human_scores.push_back(v);
        }
    }

    inst.criterion_tag.clear();
    if (j.contains("criterion_tag") && !j["criterion_tag"].is_null()) {
        if (!j["criterion_tag"].is_string()) return "field 'criterion_tag' must be a string";
        inst.criterion_tag = j["criterion_tag"].get<std::string>();
    }
    return std::nullopt;
}

}  // namespace

Dataset parse_dataset(std::istream& in, const std::string& origin) {
    Dataset ds;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            ds.issues.push_back({line_no, std::string("invalid JSON: ") + e.what()});
            continue;
        }
        EvaluationInstance inst;
        if (auto problem = validate_instance_line(j, inst)) {
            ds.issues.push_back({line_no, *problem});
            continue;
        }
        if (!seen_ids.insert(inst.id).second) {
            ds.issues.push_back({line_no, "duplicate id '" + inst.id + "'"});
            continue;
        }
        if (ds.k == 0) {
            ds.k = inst.rubric.k();
        } else if (inst.rubric.k() != ds.k) {
            ds.issues.push_back({line_no, "rubric has " + std::to_string(inst.rubric.k()) +
                                              " descriptions but the dataset uses " +
                                              std::to_string(ds.k)});
            continue;
        }
        ds.instances.push_back(std::move(inst));
    }
    if (ds.instances.empty() && ds.issues.empty()) {
        ds.issues.push_back({0, "no instances in " + origin});
    }
    return ds;
}

Dataset ingest_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open dataset '" + path.string() + "'");
    return parse_dataset(in, path.string());
}

// ---------------------------------------------------------------------------
// RunPlan
// ---------------------------------------------------------------------------

std::string_view to_string(RunMode mode) {
    switch (mode) {
        case RunMode::permutation: return "permutation";
        case RunMode::repeat: return "repeat";
        case RunMode::custom: return "custom";
    }
    return "unknown";
}

RunMode run_mode_from_string(std::string_view name) {
    if (name == "permutation") return RunMode::permutation;
    if (name == "repeat") return RunMode::repeat;
    if (name == "custom") return RunMode::custom;
    throw DomainError("unknown run mode '" + std::string(name) + "'");
}

namespace {

std::string_view to_string(JudgeKind kind) {
    switch (kind) {
        case JudgeKind::mock: return "mock";
        case JudgeKind::synthetic: return "synthetic";
        case JudgeKind::http: return "http";
    }
    return "unknown";
}

JudgeKind judge_kind_from_string(std::string_view name) {
    if (name == "mock") return JudgeKind::mock;
    if (name == "synthetic") return JudgeKind::synthetic;
    if (name == "http") return JudgeKind::http;
    throw DomainError("unknown judge kind '" + std::string(name) + "'");
}

}  // namespace

RunPlan RunPlan::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DomainError("cannot open plan '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DomainError("plan '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j.get<RunPlan>();
}

void RunPlan::validate() const {
    if (max_inflight < 1) throw DomainError("max_inflight must be >= 1");
    if (repeat_ordering_index < 0) throw DomainError("repeat_ordering_index must be >= 0");
    if (mode == RunMode::custom) {
        if (custom_orderings.empty()) {
            throw DomainError("custom mode needs at least one ordering");
        }
        if (!custom_trials.empty() && custom_trials.size() != custom_orderings.size()) {
            throw DomainError("trials_per_ordering must match orderings in length");
        }
        for (int t : custom_trials) {
            if (t < 1) throw DomainError("trials_per_ordering entries must be >= 1");
        }
    }
    if (judge_kind == JudgeKind::http) {
        if (http.endpoint.empty()) throw DomainError("http judge needs an endpoint");
        http.validate();
    }
}

std::unique_ptr<Judge> RunPlan::make_judge(int k) const {
    switch (judge_kind) {
        case JudgeKind::mock:
            return std::make_unique<MockJudge>(seed, k);
        case JudgeKind::synthetic: {
            SyntheticJudgeParams params = synthetic;
            if (params.position_bonus.empty()) params.position_bonus.assign(k, 0.0);
            if (params.latent_distribution.empty()) {
                params.latent_distribution.assign(k, 1.0 / static_cast<double>(k));
            }
            params.seed = seed;
            if (params.k() != k) {
                throw DomainError("synthetic params are over " + std::to_string(params.k()) +
                                  " scores but the dataset uses " + std::to_string(k));
            }
            return std::make_unique<SyntheticJudge>(std::move(params));
        }
        case JudgeKind::http:
            return std::make_unique<HttpJudge>(http);
    }
    throw DomainError("unreachable judge kind");
}

std::vector<RunPlan::TrialGroup> RunPlan::trial_layout(int k) const {
    std::vector<TrialGroup> layout;
    switch (mode) {
        case RunMode::permutation: {
            const BalancedSet set = generate_balanced_set(k);
            for (int i = 0; i < set.size(); ++i) {
                layout.push_back({i, set.orderings[i], 1});
            }
            break;
        }
        case RunMode::repeat: {
            const BalancedSet set = generate_balanced_set(k);
            if (repeat_ordering_index >= set.size()) {
                throw DomainError("repeat_ordering_index " +
                                  std::to_string(repeat_ordering_index) + " outside 0.." +
                                  std::to_string(set.size() - 1));
            }
            layout.push_back({repeat_ordering_index, set.orderings[repeat_ordering_index],
                              2 * k});
            break;
        }
        case RunMode::custom: {
            for (std::size_t i = 0; i < custom_orderings.size(); ++i) {
                if (custom_orderings[i].k() != k) {
                    throw DomainError("custom ordering " + custom_orderings[i].to_string() +
                                      " does not cover 1.." + std::to_string(k));
                }
                const int trials = custom_trials.empty() ? 1 : custom_trials[i];
                layout.push_back({static_cast<int>(i), custom_orderings[i], trials});
            }
            break;
        }
    }
    return layout;
}

void to_json(json& j, const RunPlan& p) {
    j = json{{"dataset", p.dataset_path},
             {"mode", std::string(to_string(p.mode))},
             {"template", p.template_ref},
             {"seed", p.seed},
             {"lenient_parse", p.lenient_parse},
             {"max_inflight", p.max_inflight},
             {"repeat_ordering_index", p.repeat_ordering_index}};
    json judge{{"kind", std::string(to_string(p.judge_kind))}};
    if (p.judge_kind == JudgeKind::http) judge["config"] = p.http;
    if (p.judge_kind == JudgeKind::synthetic) judge["params"] = p.synthetic;
    j["judge"] = judge;
    if (p.run_stamp) j["run_stamp"] = *p.run_stamp;
    if (!p.custom_orderings.empty()) {
        json orderings = json::array();
        for (const Permutation& perm : p.custom_orderings) orderings.push_back(perm.to_string());
        j["orderings"] = orderings;
        if (!p.custom_trials.empty()) j["trials_per_ordering"] = p.custom_trials;
    }
}

void from_json(const json& j, RunPlan& p) {
    p = RunPlan{};
    if (j.contains("dataset")) j["dataset"].get_to(p.dataset_path);
    if (j.contains("mode")) p.mode = run_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("template")) j["template"].get_to(p.template_ref);
    if (j.contains("seed")) j["seed"].get_to(p.seed);
    if (j.contains("lenient_parse")) j["lenient_parse"].get_to(p.lenient_parse);
    if (j.contains("max_inflight")) j["max_inflight"].get_to(p.max_inflight);
    if (j.contains("repeat_ordering_index")) {
        j["repeat_ordering_index"].get_to(p.repeat_ordering_index);
    }
    if (j.contains("run_stamp") && !j["run_stamp"].is_null()) {
        p.run_stamp = j["run_stamp"].get<std::string>();
    }
    if (j.contains("judge")) {
        const json& judge = j["judge"];
        p.judge_kind = judge_kind_from_string(judge.value("kind", "mock"));
        if (judge.contains("config")) p.http = judge["config"].get<JudgeConfig>();
        if (judge.contains("params")) p.synthetic = judge["params"].get<SyntheticJudgeParams>();
    }
    if (j.contains("orderings")) {
        for (const json& o : j["orderings"]) {
            if (o.is_string()) {
                p.custom_orderings.push_back(Permutation::parse(o.get<std::string>()));
            } else {
                p.custom_orderings.emplace_back(o.get<std::vector<int>>());
            }
        }
    }
    if (j.contains("trials_per_ordering")) j["trials_per_ordering"].get_to(p.custom_trials);
}

// ---------------------------------------------------------------------------
// RunStore
// ---------------------------------------------------------------------------

namespace {

std::tuple<std::string, int, int, std::uint64_t> key_of(const RunRecord& r) {
    return {r.instance_id, r.ordering_index, r.trial_index, r.request_fingerprint};
}

}  // namespace

RunStore::RunStore(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;  // fresh store
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        RunRecord record;
        try {
            record = json::parse(lines[i]).get<RunRecord>();
        } catch (const std::exception& e) {
            if (i + 1 == lines.size()) {
                // torn final line from a killed run; the next append rewrites it
                recovered_torn_line_ = true;
                break;
            }
            throw StoreError("store '" + path_.string() + "' is corrupt at line " +
                             std::to_string(i + 1) + ": " + e.what());
        }
        const auto key = key_of(record);
        if (const auto it = index_.find(key); it != index_.end()) {
            if (records_[it->second] == record) continue;  // idempotent replay
            throw StoreError("store '" + path_.string() + "' has conflicting records at line " +
                             std::to_string(i + 1));
        }
        index_.emplace(key, records_.size());
        records_.push_back(std::move(record));
    }
    if (recovered_torn_line_) {
        // rewrite the clean prefix so the torn tail does not survive
        std::ofstream out(path_, std::ios::binary | std::ios::trunc);
        for (const RunRecord& r : records_) out << json(r).dump() << '\n';
    }
}

RunStore::~RunStore() = default;

bool RunStore::contains(const std::string& instance_id, int ordering_index, int trial_index,
                        std::uint64_t fingerprint) const {
    std::lock_guard lock(mutex_);
    return index_.contains({instance_id, ordering_index, trial_index, fingerprint});
}

const RunRecord* RunStore::find(const std::string& instance_id, int ordering_index,
                                int trial_index, std::uint64_t fingerprint) const {
    std::lock_guard lock(mutex_);
    const auto it = index_.find({instance_id, ordering_index, trial_index, fingerprint});
    return it == index_.end() ? nullptr : &records_[it->second];
}

void RunStore::append(const RunRecord& record) {
    std::lock_guard lock(mutex_);
    const auto key = key_of(record);
    if (index_.contains(key)) {
        throw StoreError("duplicate append for instance '" + record.instance_id + "' ordering " +
                         std::to_string(record.ordering_index) + " trial " +
                         std::to_string(record.trial_index));
    }
    if (!out_) {
        out_ = std::make_unique<std::ofstream>(path_, std::ios::binary | std::ios::app);
        if (!*out_) throw StoreError("cannot open store '" + path_.string() + "' for append");
    }
    *out_ << json(record).dump() << '\n';
    out_->flush();
    index_.emplace(key, records_.size());
    records_.push_back(record);
}

// ---------------------------------------------------------------------------
// execute
// ---------------------------------------------------------------------------

namespace {

struct TaskOutcome {
    bool transport_failed = false;
    std::string transport_error;
    RunRecord record;
};

TaskOutcome run_one(Judge& judge, const JudgeCall& call, int k, bool lenient,
                    const std::string& reasoning_open, const std::string& reasoning_close,
                    std::uint64_t fingerprint, const std::string& stamp) {
    TaskOutcome out;
    std::string raw;
    VerdictOrError verdict = ParseError{};
    // one same-prompt retry on a parse failure
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            raw = judge.complete(call);
        } catch (const JudgeError& e) {
            out.transport_failed = true;
            out.transport_error = std::string(to_string(e.kind)) + " after " +
                                  std::to_string(e.attempts) + " attempt(s): " + e.what();
            return out;
        }
        verdict = parse_verdict(strip_reasoning(raw, reasoning_open, reasoning_close), k,
                                {.allow_fallback = lenient});
        if (std::holds_alternative<JudgeVerdict>(verdict)) break;
    }

    RunRecord& rec = out.record;
    rec.instance_id = call.instance_id;
    rec.ordering_index = call.ordering_index;
    rec.trial_index = call.trial_index;
    rec.permutation = call.permutation;
    rec.judge_id = judge.id();
    rec.raw_output = raw;
    rec.verdict = std::move(verdict);
    rec.chosen_position = rec.parsed() ? call.permutation.position_of(rec.score()) : 0;
    rec.request_fingerprint = fingerprint;
    rec.created_at = stamp;
    return out;
}

}  // namespace

RunSummary execute(const RunPlan& plan, const Dataset& dataset, Judge& judge, RunStore& store,
                   const RunnerOptions& options) {
    plan.validate();
    if (!dataset.issues.empty()) {
        throw DomainError("dataset has " + std::to_string(dataset.issues.size()) +
                          " validation issue(s); refusing to run");
    }
    if (dataset.instances.empty()) throw DomainError("dataset is empty");
    const int k = dataset.k;
    const PromptTemplate tmpl = PromptTemplate::load(plan.template_ref);
    const std::vector<RunPlan::TrialGroup> layout = plan.trial_layout(k);
    const std::string judge_material = judge.fingerprint_material();
    const int max_inflight = options.max_inflight > 0 ? options.max_inflight : plan.max_inflight;
    const bool http_judge = plan.judge_kind == JudgeKind::http;
    const std::string reasoning_open = http_judge ? plan.http.reasoning_open : "<think>";
    const std::string reasoning_close = http_judge ? plan.http.reasoning_close : "</think>";

    std::vector<const EvaluationInstance*> instances;
    instances.reserve(dataset.instances.size());
    for (const EvaluationInstance& inst : dataset.instances) instances.push_back(&inst);
    std::sort(instances.begin(), instances.end(),
              [](const EvaluationInstance* a, const EvaluationInstance* b) { return a->id < b->id; });

    auto stamp_now = [&]() {
        if (plan.run_stamp) return *plan.run_stamp;
        return options.clock ? options.clock() : utc_now();
    };

    RunSummary summary;
    std::vector<std::pair<long long, RunRecord>> covered;  // (sequence, record)
    std::deque<std::future<TaskOutcome>> window;
    std::deque<long long> window_seq;

    auto settle_one = [&]() {
        TaskOutcome outcome = window.front().get();
        const long long seq = window_seq.front();
        window.pop_front();
        window_seq.pop_front();
        if (outcome.transport_failed) {
            ++summary.transport_failed;
            return;
        }
        store.append(outcome.record);
        if (outcome.record.parsed()) {
            ++summary.completed;
        } else {
            ++summary.parse_failed;
        }
        if (options.covered) covered.emplace_back(seq, std::move(outcome.record));
    };

    long long seq = 0;
    for (const EvaluationInstance* inst : instances) {
        for (const RunPlan::TrialGroup& group : layout) {
            for (int trial = 0; trial < group.trials; ++trial, ++seq) {
                const std::string prompt = render_prompt(*inst, group.ordering, tmpl);
                const std::uint64_t fingerprint =
                    fnv1a64(judge_material, fnv1a64(prompt) * 0x100000001b3ull);
                if (store.contains(inst->id, group.ordering_index, trial, fingerprint)) {
                    ++summary.cached_skipped;
                    if (options.covered) {
                        const RunRecord* existing =
                            store.find(inst->id, group.ordering_index, trial, fingerprint);
                        covered.emplace_back(seq, *existing);
                    }
                    continue;
                }
                if (options.max_dispatches >= 0 && summary.dispatched >= options.max_dispatches) {
                    summary.stopped_at_limit = true;
                    continue;
                }
                JudgeCall call;
                call.prompt = prompt;
                call.instance_id = inst->id;
                call.ordering_index = group.ordering_index;
                call.trial_index = trial;
                call.permutation = group.ordering;
                const std::string stamp = stamp_now();
                if (static_cast<int>(window.size()) >= max_inflight) settle_one();
                window.push_back(std::async(std::launch::async, [&judge, call = std::move(call), k,
                                                                 lenient = plan.lenient_parse,
                                                                 reasoning_open, reasoning_close,
                                                                 fingerprint, stamp]() {
                    return run_one(judge, call, k, lenient, reasoning_open, reasoning_close,
                                   fingerprint, stamp);
                }));
                window_seq.push_back(seq);
                ++summary.dispatched;
            }
        }
    }
    while (!window.empty()) settle_one();

    if (options.covered) {
        std::sort(covered.begin(), covered.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        options.covered->clear();
        options.covered->reserve(covered.size());
        for (auto& [s, record] : covered) options.covered->push_back(std::move(record));
    }
    return summary;
}

ProbeResult probe(const RunPlan& plan, const Dataset& dataset, Judge& judge, RunStore& store,
                  int probe_instances, const RunnerOptions& options) {
    Dataset sub = dataset;
    if (probe_instances > 0 && probe_instances < static_cast<int>(sub.instances.size())) {
        std::sort(sub.instances.begin(), sub.instances.end(),
                  [](const EvaluationInstance& a, const EvaluationInstance& b) {
                      return a.id < b.id;
                  });
        sub.instances.resize(probe_instances);
    }

    std::vector<RunRecord> covered;
    RunnerOptions opts = options;
    opts.covered = &covered;
    ProbeResult result;
    result.summary = execute(plan, sub, judge, store, opts);

    std::vector<Permutation> trial_perms;
    for (const RunPlan::TrialGroup& group : plan.trial_layout(dataset.k)) {
        for (int t = 0; t < group.trials; ++t) trial_perms.push_back(group.ordering);
    }
    result.balanced = is_balanced(trial_perms);
    result.profile = score_position_profile(covered);
    return result;
}

}  // namespace rubra
