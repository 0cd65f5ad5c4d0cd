#pragma once

#include <span>

#include "rubra/core.hpp"

namespace rubra {

/// Fraction of parsed records choosing each display position.
struct PositionDistribution {
    std::vector<double> fraction;     // size K, sums to 1
    std::vector<long long> counts;    // raw selections per position
    long long parsed = 0;
    long long unparsed = 0;
    /// False when the records' orderings do not form a balanced family; the
    /// distribution is still computed, callers should surface a warning.
    bool balanced_source = true;
};

PositionDistribution position_distribution(std::span<const RunRecord> records);

/// Empirical P(position | chosen score) over parsed records. Scores never
/// chosen yield undefined rows.
PositionProfile score_position_profile(std::span<const RunRecord> records);

/// Positional deviation of ordering `perm` under a measured profile:
/// sum over positions p of |P(p | score shown at p) - 1/K|. Returned in
/// fraction units; multiply by 100 for the display convention.
/// Requires every row the ordering touches to be defined.
double bias_cost(const PositionProfile& profile, const Permutation& perm);

struct OrderingCost {
    Permutation ordering;
    double cost = 0.0;   // fraction units
    std::size_t index = 0;  // position within the candidate list
};

/// Candidate with minimal bias cost; ties go to the earliest candidate.
OrderingCost min_bias_ordering(const PositionProfile& profile,
                               std::span<const Permutation> candidates);

/// Costs for every candidate, in candidate order.
std::vector<OrderingCost> bias_cost_table(const PositionProfile& profile,
                                          std::span<const Permutation> candidates);

/// Product-moment correlation. Empty optional when either side has zero
/// variance. Throws on length mismatch or fewer than 3 points.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Rank correlation: pearson over fractional (average-tie) ranks.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// 1-based ranks with ties assigned the average of their span.
std::vector<double> fractional_ranks(std::span<const double> values);

struct AggregateResult {
    double value = 0.0;
    int n_parsed = 0;
    int n_failed = 0;
};

/// Arithmetic mean of parsed scores over the given trial family; parse
/// failures are excluded and counted. Throws when nothing parsed.
AggregateResult aggregate_scores(std::span<const RunRecord> records);

/// Per-item sample standard deviation (divisor n-1) of parsed scores, then
/// the unweighted mean over items. Items with fewer than 2 parsed records
/// are excluded and counted.
ConsistencyReport within_item_sigma(std::span<const RunRecord> records);

/// Correlation of per-instance aggregated model scores against mean human
/// rater scores. Only instances with at least one parsed record and at
/// least one rater score participate; fewer than 3 such items is an error.
CorrelationReport correlation_report(std::span<const RunRecord> records,
                                     const std::map<std::string, std::vector<double>>& human,
                                     AggregationMode mode);

/// Single-ordering correlations, one report per ordering index present.
struct OrderingCorrelations {
    std::map<int, CorrelationReport> by_ordering;
};

OrderingCorrelations per_ordering_correlations(
    std::span<const RunRecord> records,
    const std::map<std::string, std::vector<double>>& human);

enum class CorrelationMetric { pearson, spearman };

/// 1-based descending rank of the target ordering's metric among all
/// orderings with a defined value; ties share the best rank.
int ordering_rank(const OrderingCorrelations& correlations, int target_ordering,
                  CorrelationMetric metric);

}  // namespace rubra
