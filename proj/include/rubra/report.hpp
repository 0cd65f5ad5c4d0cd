#pragma once

#include <filesystem>

#include "rubra/stats.hpp"

namespace rubra::report {

/// Fraction -> "26.1" (percent, one decimal — the display convention for
/// every table this tool prints).
std::string percent(double fraction);
std::string fixed(double value, int decimals);

/// Monospace table with left-aligned first column and right-aligned cells.
std::string table(const std::vector<std::string>& header,
                  const std::vector<std::vector<std::string>>& rows);

void write_text(const std::filesystem::path& path, const std::string& content);
void write_json(const std::filesystem::path& path, const json& payload);

std::string position_distribution_text(const PositionDistribution& dist);
json position_distribution_json(const PositionDistribution& dist);

std::string profile_text(const PositionProfile& profile);

std::string bias_cost_text(const std::vector<OrderingCost>& costs, std::size_t best_index);
json bias_cost_json(const std::vector<OrderingCost>& costs, std::size_t best_index);

std::string sigma_text(const ConsistencyReport& report);

std::string correlation_text(const CorrelationReport& report);
json correlation_json(const CorrelationReport& report);

std::string per_ordering_text(const OrderingCorrelations& correlations,
                              const std::vector<Permutation>& orderings);

}  // namespace rubra::report
