#include "rubra/permute.hpp"

#include <numeric>

namespace rubra {

long long BalanceCountMatrix::total() const {
    long long t = 0;
    for (const auto& row : counts) {
        t = std::accumulate(row.begin(), row.end(), t);
    }
    return t;
}

BalancedSet generate_balanced_set(int k) {
    if (k < 2) throw DomainError("balanced set needs k >= 2, got " + std::to_string(k));
    BalancedSet set;
    set.orderings.reserve(2 * static_cast<std::size_t>(k));
    for (int shift = 0; shift < k; ++shift) {
        std::vector<int> order(k);
        for (int p = 0; p < k; ++p) {
            order[p] = (p + shift) % k + 1;
        }
        set.orderings.emplace_back(std::move(order));
    }
    for (int shift = 0; shift < k; ++shift) {
        std::vector<int> order(k);
        for (int p = 0; p < k; ++p) {
            // left rotation of [k, k-1, ..., 1]
            order[p] = k - (p + shift) % k;
        }
        set.orderings.emplace_back(std::move(order));
    }
    return set;
}

BalanceCountMatrix balance_counts(std::span<const Permutation> orderings) {
    BalanceCountMatrix m;
    if (orderings.empty()) return m;
    const int k = orderings.front().k();
    m.counts.assign(k, std::vector<long long>(k, 0));
    for (const Permutation& perm : orderings) {
        if (perm.k() != k) {
            throw DomainError("mixed permutation sizes: " + std::to_string(perm.k()) +
                              " vs " + std::to_string(k));
        }
        for (int p = 1; p <= k; ++p) {
            m.counts[perm.score_at(p) - 1][p - 1] += 1;
        }
    }
    return m;
}

bool is_balanced(std::span<const Permutation> orderings) {
    if (orderings.empty()) return false;
    const BalanceCountMatrix m = balance_counts(orderings);
    const long long expected = m.counts[0][0];
    if (expected <= 0) return false;
    for (const auto& row : m.counts) {
        for (long long c : row) {
            if (c != expected) return false;
        }
    }
    return true;
}

}  // namespace rubra
