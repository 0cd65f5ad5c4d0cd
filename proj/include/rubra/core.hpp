#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace rubra {

using json = nlohmann::json;

/// Thrown on violated preconditions and invalid domain values.
class DomainError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Hashing / RNG utilities
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a over raw bytes. Stable across platforms and runs, which is
/// what makes request fingerprints and derived RNG streams reproducible.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull);

std::string to_hex(std::uint64_t value);
std::uint64_t from_hex(std::string_view hex);

/// Derives an independent RNG stream seed from a base seed plus a key string,
/// e.g. stream_seed(7, "choice|item-0042|3|0").
std::uint64_t stream_seed(std::uint64_t base, std::string_view key);

/// Deterministic RNG wrapper. mt19937_64 has a standardized bit sequence; the
/// double construction avoids std::uniform_real_distribution, whose output is
/// implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    /// Samples an index from a discrete distribution by inverse CDF.
    /// `probs` need not be exactly normalized; the last index absorbs
    /// any rounding slack.
    int pick(const std::vector<double>& probs);

  private:
    std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A scoring rubric: one criterion plus K score descriptions. descriptions[i]
/// describes score i+1. The line order shown to the judge is what gets
/// permuted; the scores themselves never change.
struct Rubric {
    std::string criterion_text;
    std::vector<std::string> descriptions;

    int k() const { return static_cast<int>(descriptions.size()); }
    void validate() const;

    bool operator==(const Rubric&) const = default;
};

/// An ordering of the K scores over display positions. order()[p-1] is the
/// score shown at position p, positions counted 1..K from the top.
class Permutation {
  public:
    Permutation() = default;
    explicit Permutation(std::vector<int> order);

    static Permutation identity(int k);
    static Permutation reversed(int k);

    int k() const { return static_cast<int>(order_.size()); }
    const std::vector<int>& order() const { return order_; }

    /// Score displayed at 1-based position p.
    int score_at(int position) const;
    /// 1-based position where `score` is displayed. Inverse of score_at.
    int position_of(int score) const;

    /// "[1,2,3,4,5]"
    std::string to_string() const;
    /// Parses the to_string form (whitespace tolerated).
    static Permutation parse(std::string_view text);

    bool operator==(const Permutation& other) const { return order_ == other.order_; }

  private:
    std::vector<int> order_;
    std::vector<int> position_of_;  // position_of_[s-1] = position of score s
};

/// The 2K-ordering family: K forward cyclic rotations of the identity
/// followed by K cyclic rotations of the reversed identity. Every score
/// appears at every position exactly twice.
struct BalancedSet {
    std::vector<Permutation> orderings;

    int k() const { return orderings.empty() ? 0 : orderings.front().k(); }
    int size() const { return static_cast<int>(orderings.size()); }
};

/// One row of an evaluation dataset: a judgeable (instruction, response)
/// pair with its rubric and optional human annotations.
struct EvaluationInstance {
    std::string id;
    std::string instruction;
    std::string response;
    std::optional<std::string> reference;
    Rubric rubric;
    std::vector<double> human_scores;  // empty = not annotated
    std::string criterion_tag;         // optional label, e.g. "coherence"

    bool operator==(const EvaluationInstance&) const = default;
};

/// A parsed judge verdict: free-text feedback plus an integer score in 1..K.
struct JudgeVerdict {
    std::string feedback;
    int score = 0;

    bool operator==(const JudgeVerdict&) const = default;
};

enum class ParseErrorKind { missing_score, out_of_range };

std::string_view to_string(ParseErrorKind kind);
ParseErrorKind parse_error_kind_from_string(std::string_view name);

/// A verdict that could not be extracted from the raw judge output. Kept as
/// a first-class value so bias statistics can report coverage.
struct ParseError {
    ParseErrorKind kind = ParseErrorKind::missing_score;
    std::string detail;

    bool operator==(const ParseError&) const = default;
};

using VerdictOrError = std::variant<JudgeVerdict, ParseError>;

/// One judge call for one (instance, ordering, trial).
struct RunRecord {
    std::string instance_id;
    int ordering_index = 0;
    int trial_index = 0;
    Permutation permutation;
    std::string judge_id;
    std::string raw_output;
    VerdictOrError verdict;
    /// 1-based position of the chosen score under `permutation`; 0 when the
    /// verdict could not be parsed.
    int chosen_position = 0;
    /// fnv1a64 over (prompt bytes, judge fingerprint material).
    std::uint64_t request_fingerprint = 0;
    std::string created_at;

    bool parsed() const { return std::holds_alternative<JudgeVerdict>(verdict); }
    const JudgeVerdict& good_verdict() const { return std::get<JudgeVerdict>(verdict); }
    const ParseError& parse_error() const { return std::get<ParseError>(verdict); }
    int score() const { return good_verdict().score; }

    bool operator==(const RunRecord&) const = default;
};

/// K x K score-position matrix: row s holds P(position | chosen score = s).
/// Rows with zero observation mass are flagged undefined rather than filled
/// with sentinels.
struct PositionProfile {
    std::vector<std::vector<double>> rows;        // fractions, row index = score-1
    std::vector<std::vector<long long>> counts;   // raw counts; empty for analytic profiles
    std::vector<bool> row_defined;

    int k() const { return static_cast<int>(rows.size()); }
    bool defined(int score) const { return row_defined.at(score - 1); }
    /// P(position p | chosen score s), 1-based arguments.
    double at(int score, int position) const { return rows.at(score - 1).at(position - 1); }

    static PositionProfile from_counts(const std::vector<std::vector<long long>>& counts);
    /// Builds a profile from already-normalized rows (fractions summing to
    /// ~1). Rows listed in `undefined_rows` (1-based scores) are flagged.
    static PositionProfile from_fractions(std::vector<std::vector<double>> rows,
                                          const std::vector<int>& undefined_rows = {});
};

enum class AggregationMode { permutation, repeat, single_ordering };

std::string_view to_string(AggregationMode mode);
AggregationMode aggregation_mode_from_string(std::string_view name);

/// Pearson/Spearman of aggregated model scores against human annotations.
/// Either coefficient is absent when undefined (zero variance).
struct CorrelationReport {
    std::optional<double> pearson_r;
    std::optional<double> spearman_rho;
    int n_items = 0;
    AggregationMode mode = AggregationMode::permutation;
};

/// Within-item standard deviation of predicted scores across trials.
struct ConsistencyReport {
    std::map<std::string, double> per_item_sigma;
    double mean_sigma = 0.0;
    int excluded_items = 0;  // groups with < 2 parsed records
};

// ---------------------------------------------------------------------------
// JSON serialization (round-trips exactly; used by the store and reports)
// ---------------------------------------------------------------------------

void to_json(json& j, const Rubric& r);
void from_json(const json& j, Rubric& r);
void to_json(json& j, const Permutation& p);
void from_json(const json& j, Permutation& p);
void to_json(json& j, const BalancedSet& s);
void from_json(const json& j, BalancedSet& s);
void to_json(json& j, const EvaluationInstance& e);
void from_json(const json& j, EvaluationInstance& e);
void to_json(json& j, const JudgeVerdict& v);
void from_json(const json& j, JudgeVerdict& v);
void to_json(json& j, const ParseError& e);
void from_json(const json& j, ParseError& e);
void to_json(json& j, const RunRecord& r);
void from_json(const json& j, RunRecord& r);
void to_json(json& j, const PositionProfile& p);
void from_json(const json& j, PositionProfile& p);
void to_json(json& j, const CorrelationReport& r);
void from_json(const json& j, CorrelationReport& r);
void to_json(json& j, const ConsistencyReport& r);
void from_json(const json& j, ConsistencyReport& r);

/// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now();

}  // namespace rubra
