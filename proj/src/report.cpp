#include "rubra/report.hpp"

#include <cstdio>
#include <fstream>

namespace rubra::report {

std::string fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, value);
    return buf;
}

std::string percent(double fraction) { return fixed(fraction * 100.0, 1); }

std::string table(const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::string out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string cell = c < row.size() ? row[c] : "";
            if (c == 0) {
                out += cell + std::string(width[c] - cell.size(), ' ');
            } else {
                out += "  " + std::string(width[c] - cell.size(), ' ') + cell;
            }
        }
        out += '\n';
    };
    emit(header);
    std::size_t total = 0;
    for (std::size_t c = 0; c < width.size(); ++c) total += width[c] + (c ? 2 : 0);
    out += std::string(total, '-') + '\n';
    for (const auto& row : rows) emit(row);
    return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + path.string() + "'");
    out << content;
}

void write_json(const std::filesystem::path& path, const json& payload) {
    write_text(path, payload.dump(2) + "\n");
}

std::string position_distribution_text(const PositionDistribution& dist) {
    const int k = static_cast<int>(dist.fraction.size());
    std::vector<std::string> header{"position", "share %", "count"};
    std::vector<std::vector<std::string>> rows;
    for (int p = 0; p < k; ++p) {
        rows.push_back({"P" + std::to_string(p + 1), percent(dist.fraction[p]),
                        std::to_string(dist.counts[p])});
    }
    std::string out = table(header, rows);
    out += "\nparsed records: " + std::to_string(dist.parsed) +
           ", unparsed: " + std::to_string(dist.unparsed) + "\n";
    out += "no-bias baseline: " + percent(1.0 / k) + " % per position\n";
    if (!dist.balanced_source) {
        out += "warning: records do not come from a balanced ordering family\n";
    }
    return out;
}

json position_distribution_json(const PositionDistribution& dist) {
    return json{{"fraction", dist.fraction},
                {"counts", dist.counts},
                {"parsed", dist.parsed},
                {"unparsed", dist.unparsed},
                {"balanced_source", dist.balanced_source}};
}

std::string profile_text(const PositionProfile& profile) {
    const int k = profile.k();
    std::vector<std::string> header{"score"};
    for (int p = 1; p <= k; ++p) header.push_back("P" + std::to_string(p) + " %");
    std::vector<std::vector<std::string>> rows;
    for (int s = 1; s <= k; ++s) {
        std::vector<std::string> row{std::to_string(s)};
        for (int p = 1; p <= k; ++p) {
            row.push_back(profile.defined(s) ? percent(profile.at(s, p)) : "-");
        }
        rows.push_back(std::move(row));
    }
    return table(header, rows);
}

std::string bias_cost_text(const std::vector<OrderingCost>& costs, std::size_t best_index) {
    std::vector<std::string> header{"ordering", "bias cost %", ""};
    std::vector<std::vector<std::string>> rows;
    for (const OrderingCost& c : costs) {
        rows.push_back({c.ordering.to_string(), percent(c.cost),
                        c.index == best_index ? "<- min" : ""});
    }
    return table(header, rows);
}

json bias_cost_json(const std::vector<OrderingCost>& costs, std::size_t best_index) {
    json items = json::array();
    for (const OrderingCost& c : costs) {
        items.push_back({{"ordering", c.ordering.to_string()},
                         {"cost", c.cost},
                         {"cost_percent", c.cost * 100.0},
                         {"min", c.index == best_index}});
    }
    return json{{"orderings", items}};
}

std::string sigma_text(const ConsistencyReport& report) {
    std::vector<std::string> header{"item", "sigma"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& [id, sigma] : report.per_item_sigma) {
        rows.push_back({id, fixed(sigma, 3)});
    }
    std::string out = table(header, rows);
    out += "\nmean sigma: " + fixed(report.mean_sigma, 3);
    if (report.excluded_items > 0) {
        out += "  (" + std::to_string(report.excluded_items) + " item(s) excluded, < 2 trials)";
    }
    out += '\n';
    return out;
}

std::string correlation_text(const CorrelationReport& report) {
    std::string out = "mode: " + std::string(to_string(report.mode)) + "\n";
    out += "items: " + std::to_string(report.n_items) + "\n";
    out += "pearson r:    " +
           (report.pearson_r ? fixed(*report.pearson_r, 3) : std::string("undefined")) + "\n";
    out += "spearman rho: " +
           (report.spearman_rho ? fixed(*report.spearman_rho, 3) : std::string("undefined")) +
           "\n";
    return out;
}

json correlation_json(const CorrelationReport& report) {
    json j;
    to_json(j, report);
    return j;
}

std::string per_ordering_text(const OrderingCorrelations& correlations,
                              const std::vector<Permutation>& orderings) {
    const std::string n = std::to_string(correlations.by_ordering.size());
    std::vector<std::string> header{"index", "ordering", "pearson r", "rank",
                                    "spearman rho", "rank", "items"};
    std::vector<std::vector<std::string>> rows;
    auto rank_of = [&](int index, CorrelationMetric metric) -> std::string {
        try {
            return std::to_string(ordering_rank(correlations, index, metric)) + "/" + n;
        } catch (const DomainError&) {
            return "-";
        }
    };
    for (const auto& [index, report] : correlations.by_ordering) {
        std::string name = index >= 0 && index < static_cast<int>(orderings.size())
                               ? orderings[index].to_string()
                               : "?";
        rows.push_back({std::to_string(index), name,
                        report.pearson_r ? fixed(*report.pearson_r, 3) : "undefined",
                        rank_of(index, CorrelationMetric::pearson),
                        report.spearman_rho ? fixed(*report.spearman_rho, 3) : "undefined",
                        rank_of(index, CorrelationMetric::spearman),
                        std::to_string(report.n_items)});
    }
    return table(header, rows);
}

}  // namespace rubra::report
