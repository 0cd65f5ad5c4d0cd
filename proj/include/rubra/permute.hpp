#pragma once

#include <span>

#include "rubra/core.hpp"

namespace rubra {

/// Per-(score, position) placement counts over a set of orderings.
/// counts[s-1][p-1] = number of orderings displaying score s at position p.
struct BalanceCountMatrix {
    std::vector<std::vector<long long>> counts;

    int k() const { return static_cast<int>(counts.size()); }
    long long at(int score, int position) const { return counts.at(score - 1).at(position - 1); }
    long long total() const;
};

/// The canonical balanced family for K scores: forward cyclic rotations of
/// [1..k] by shifts 0..k-1, then cyclic rotations of [k..1] by shifts 0..k-1,
/// in that order. Index 0 is the identity, index k the full reverse. Every
/// score lands on every position exactly twice. For k=2 the reverse block
/// duplicates the forward block; duplicates are kept so the twice-per-position
/// count (and uniform aggregation weights) still hold.
BalancedSet generate_balanced_set(int k);

BalanceCountMatrix balance_counts(std::span<const Permutation> orderings);

/// True iff every (score, position) cell holds the same positive count.
/// An empty set is not balanced.
bool is_balanced(std::span<const Permutation> orderings);

}  // namespace rubra
