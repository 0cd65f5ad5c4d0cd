#include "rubra/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rubra/permute.hpp"

namespace rubra {

namespace {

int record_k(std::span<const RunRecord> records) {
    int k = 0;
    for (const RunRecord& r : records) {
        if (k == 0) {
            k = r.permutation.k();
        } else if (r.permutation.k() != k) {
            throw DomainError("records mix score ranges (" + std::to_string(k) + " vs " +
                              std::to_string(r.permutation.k()) + ")");
        }
    }
    if (k == 0) throw DomainError("no records");
    return k;
}

}  // namespace

PositionDistribution position_distribution(std::span<const RunRecord> records) {
    const int k = record_k(records);
    PositionDistribution d;
    d.counts.assign(k, 0);
    std::vector<Permutation> perms;
    perms.reserve(records.size());
    for (const RunRecord& r : records) {
        perms.push_back(r.permutation);
        if (!r.parsed()) {
            ++d.unparsed;
            continue;
        }
        if (r.chosen_position < 1 || r.chosen_position > k) {
            throw DomainError("record for '" + r.instance_id + "' has chosen_position " +
                              std::to_string(r.chosen_position) + " outside 1.." +
                              std::to_string(k));
        }
        ++d.counts[r.chosen_position - 1];
        ++d.parsed;
    }
    if (d.parsed == 0) throw DomainError("no parseable records");
    d.balanced_source = is_balanced(perms);
    d.fraction.assign(k, 0.0);
    for (int p = 0; p < k; ++p) {
        d.fraction[p] = static_cast<double>(d.counts[p]) / static_cast<double>(d.parsed);
    }
    return d;
}

PositionProfile score_position_profile(std::span<const RunRecord> records) {
    const int k = record_k(records);
    std::vector<std::vector<long long>> counts(k, std::vector<long long>(k, 0));
    long long parsed = 0;
    for (const RunRecord& r : records) {
        if (!r.parsed()) continue;
        counts[r.score() - 1][r.chosen_position - 1] += 1;
        ++parsed;
    }
    if (parsed == 0) throw DomainError("no parseable records");
    return PositionProfile::from_counts(counts);
}

double bias_cost(const PositionProfile& profile, const Permutation& perm) {
    const int k = perm.k();
    if (profile.k() != k) throw DomainError("profile and ordering disagree on k");
    const double baseline = 1.0 / static_cast<double>(k);
    double cost = 0.0;
    for (int p = 1; p <= k; ++p) {
        const int score = perm.score_at(p);
        if (!profile.defined(score)) {
            throw DomainError("profile row for score " + std::to_string(score) +
                              " is undefined (never chosen)");
        }
        cost += std::abs(profile.at(score, p) - baseline);
    }
    return cost;
}

std::vector<OrderingCost> bias_cost_table(const PositionProfile& profile,
                                          std::span<const Permutation> candidates) {
    std::vector<OrderingCost> table;
    table.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        table.push_back({candidates[i], bias_cost(profile, candidates[i]), i});
    }
    return table;
}

OrderingCost min_bias_ordering(const PositionProfile& profile,
                               std::span<const Permutation> candidates) {
    if (candidates.empty()) throw DomainError("candidate ordering list is empty");
    const std::vector<OrderingCost> table = bias_cost_table(profile, candidates);
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i) {
        if (table[i].cost < table[best].cost) best = i;
    }
    return table[best];
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DomainError("correlation inputs differ in length (" + std::to_string(x.size()) +
                          " vs " + std::to_string(y.size()) + ")");
    }
    const std::size_t n = x.size();
    if (n < 3) throw DomainError("correlation needs at least 3 points");
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

std::vector<double> fractional_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        // positions i..j (0-based) share the average 1-based rank
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = shared;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DomainError("correlation inputs differ in length (" + std::to_string(x.size()) +
                          " vs " + std::to_string(y.size()) + ")");
    }
    const std::vector<double> rx = fractional_ranks(x);
    const std::vector<double> ry = fractional_ranks(y);
    return pearson(rx, ry);
}

AggregateResult aggregate_scores(std::span<const RunRecord> records) {
    AggregateResult out;
    double sum = 0.0;
    for (const RunRecord& r : records) {
        if (r.parsed()) {
            sum += static_cast<double>(r.score());
            ++out.n_parsed;
        } else {
            ++out.n_failed;
        }
    }
    if (out.n_parsed == 0) throw DomainError("no parsed records to aggregate");
    out.value = sum / static_cast<double>(out.n_parsed);
    return out;
}

ConsistencyReport within_item_sigma(std::span<const RunRecord> records) {
    std::map<std::string, std::vector<double>> groups;
    for (const RunRecord& r : records) {
        if (r.parsed()) groups[r.instance_id].push_back(static_cast<double>(r.score()));
    }
    ConsistencyReport report;
    double sum_sigma = 0.0;
    for (const auto& [id, scores] : groups) {
        if (scores.size() < 2) {
            ++report.excluded_items;
            continue;
        }
        const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
                            static_cast<double>(scores.size());
        double ss = 0.0;
        for (double s : scores) ss += (s - mean) * (s - mean);
        const double sigma = std::sqrt(ss / static_cast<double>(scores.size() - 1));
        report.per_item_sigma[id] = sigma;
        sum_sigma += sigma;
    }
    if (!report.per_item_sigma.empty()) {
        report.mean_sigma = sum_sigma / static_cast<double>(report.per_item_sigma.size());
    }
    return report;
}

CorrelationReport correlation_report(std::span<const RunRecord> records,
                                     const std::map<std::string, std::vector<double>>& human,
                                     AggregationMode mode) {
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const RunRecord& r : records) groups[r.instance_id].push_back(&r);

    std::vector<double> model, raters;
    for (const auto& [id, group] : groups) {
        const auto h = human.find(id);
        if (h == human.end() || h->second.empty()) continue;
        double sum = 0.0;
        int parsed = 0;
        for (const RunRecord* r : group) {
            if (r->parsed()) {
                sum += static_cast<double>(r->score());
                ++parsed;
            }
        }
        if (parsed == 0) continue;
        model.push_back(sum / parsed);
        raters.push_back(std::accumulate(h->second.begin(), h->second.end(), 0.0) /
                         static_cast<double>(h->second.size()));
    }
    if (model.size() < 3) {
        throw DomainError("only " + std::to_string(model.size()) +
                          " items have both model and human scores; need at least 3");
    }
    CorrelationReport report;
    report.pearson_r = pearson(model, raters);
    report.spearman_rho = spearman(model, raters);
    report.n_items = static_cast<int>(model.size());
    report.mode = mode;
    return report;
}

OrderingCorrelations per_ordering_correlations(
    std::span<const RunRecord> records,
    const std::map<std::string, std::vector<double>>& human) {
    std::map<int, std::vector<RunRecord>> by_ordering;
    for (const RunRecord& r : records) by_ordering[r.ordering_index].push_back(r);
    OrderingCorrelations out;
    for (const auto& [index, group] : by_ordering) {
        out.by_ordering[index] =
            correlation_report(group, human, AggregationMode::single_ordering);
    }
    return out;
}

int ordering_rank(const OrderingCorrelations& correlations, int target_ordering,
                  CorrelationMetric metric) {
    const auto pick = [&](const CorrelationReport& r) {
        return metric == CorrelationMetric::pearson ? r.pearson_r : r.spearman_rho;
    };
    const auto target = correlations.by_ordering.find(target_ordering);
    if (target == correlations.by_ordering.end()) {
        throw DomainError("ordering " + std::to_string(target_ordering) +
                          " has no correlation report");
    }
    const std::optional<double> value = pick(target->second);
    if (!value) {
        throw DomainError("correlation metric undefined for ordering " +
                          std::to_string(target_ordering));
    }
    int rank = 1;
    for (const auto& [index, report] : correlations.by_ordering) {
        const std::optional<double> other = pick(report);
        if (other && *other > *value) ++rank;
    }
    return rank;
}

}  // namespace rubra
