#pragma once

#include <span>

#include "rubra/judges.hpp"

namespace rubra {

/// Kernel execution policy. The serial path is the reference implementation;
/// the parallel path runs the same per-index work under OpenMP. Both produce
/// identical records because every draw owns an RNG stream derived from its
/// index, so the split exists purely for throughput.
enum class Execution { serial, parallel };

/// True when the parallel path actually fans out (built with OpenMP).
bool parallel_available();

/// Runs `n_draws` independent synthetic trials. Draw i uses ordering
/// i % orderings.size(), draws a fresh latent score from the latent
/// distribution, samples a position, and goes through the real verdict
/// grammar (compose raw text, parse it back). Records come back in draw
/// order regardless of execution policy.
std::vector<RunRecord> simulate_draws(const SyntheticJudgeParams& params,
                                      std::span<const Permutation> orderings,
                                      long long n_draws, Execution exec);

struct StudyResult {
    std::vector<RunRecord> records;  // canonical (item, ordering, trial) order
    std::vector<int> latent;         // latent score per item
};

/// Runs a fixed-budget study: `n_items` synthetic instances, each judged
/// `trials_per_item` times with orderings assigned cyclically from the
/// list. One ordering repeated gives repeat mode; the balanced set gives
/// permutation mode. Latent scores are stable per item (keyed off the item
/// id), so two studies with the same params score the same items.
StudyResult simulate_study(const SyntheticJudgeParams& params,
                           std::span<const Permutation> orderings, int n_items,
                           int trials_per_item, Execution exec);

/// Permutation-vs-repeat comparison at matched trial budget.
struct CalibrationOutcome {
    double perm_mae = 0.0;
    double rep_mae = 0.0;
    std::optional<double> perm_r, rep_r;
    std::optional<double> perm_rho, rep_rho;
    double perm_mean_sigma = 0.0;
    double rep_mean_sigma = 0.0;
    int n_items = 0;
};

/// Runs both modes with the given params (permutation = balanced set,
/// repeat = the identity ordering) and scores the per-item aggregates
/// against the latent scores.
CalibrationOutcome simulate_calibration(const SyntheticJudgeParams& params, int n_items,
                                        int trials_per_item, Execution exec);

}  // namespace rubra
