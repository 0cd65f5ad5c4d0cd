#include "rubra/sim.hpp"

#include <cmath>
#include <cstdio>

#include "rubra/permute.hpp"
#include "rubra/protocol.hpp"
#include "rubra/stats.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rubra {

bool parallel_available() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

namespace {

std::string item_id(int item) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "item-%06d", item);
    return buf;
}

/// One full synthetic trial: sample, compose the raw completion, run it back
/// through the verdict grammar. The choice stream is keyed by
/// (seed, instance, ordering_index) only: a temperature-0 judge answers the
/// same prompt the same way, so repeated trials of one ordering coincide.
RunRecord run_trial(const SyntheticJudgeParams& params, const std::string& instance,
                    int latent, const Permutation& perm, int ordering_index, int trial_index) {
    Rng rng(stream_seed(params.seed, "choice|" + instance + "|" +
                                         std::to_string(ordering_index)));
    const JudgeVerdict chosen = synthetic_choose(latent, perm, params, rng);
    const std::string raw = chosen.feedback + "\n[RESULT] " + std::to_string(chosen.score);

    RunRecord record;
    record.instance_id = instance;
    record.ordering_index = ordering_index;
    record.trial_index = trial_index;
    record.permutation = perm;
    record.judge_id = "synthetic";
    record.raw_output = raw;
    record.verdict = parse_verdict(raw, perm.k());
    record.chosen_position = record.parsed() ? perm.position_of(record.score()) : 0;
    record.request_fingerprint = fnv1a64(raw, params.seed);
    record.created_at = "simulated";
    return record;
}

template <typename Body>
void for_each_index(long long n, Execution exec, const Body& body) {
    if (exec == Execution::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < n; ++i) body(i);
        return;
#endif
    }
    for (long long i = 0; i < n; ++i) body(i);
}

}  // namespace

std::vector<RunRecord> simulate_draws(const SyntheticJudgeParams& params,
                                      std::span<const Permutation> orderings,
                                      long long n_draws, Execution exec) {
    params.validate();
    if (orderings.empty()) throw DomainError("ordering set is empty");
    if (n_draws < 1) throw DomainError("n_draws must be >= 1");
    const long long m = static_cast<long long>(orderings.size());

    std::vector<RunRecord> records(n_draws);
    for_each_index(n_draws, exec, [&](long long i) {
        const std::string instance = "draw-" + std::to_string(i);
        Rng latent_rng(stream_seed(params.seed, "latent|" + instance));
        const int latent = latent_rng.pick(params.latent_distribution) + 1;
        const int ordering_index = static_cast<int>(i % m);
        records[i] = run_trial(params, instance, latent, orderings[ordering_index],
                               ordering_index, 0);
    });
    return records;
}

StudyResult simulate_study(const SyntheticJudgeParams& params,
                           std::span<const Permutation> orderings, int n_items,
                           int trials_per_item, Execution exec) {
    params.validate();
    if (orderings.empty()) throw DomainError("ordering set is empty");
    if (n_items < 1 || trials_per_item < 1) {
        throw DomainError("study needs at least 1 item and 1 trial");
    }

    StudyResult result;
    result.latent.assign(n_items, 0);
    result.records.assign(static_cast<std::size_t>(n_items) * trials_per_item, RunRecord{});
    const int m = static_cast<int>(orderings.size());

    for_each_index(n_items, exec, [&](long long item) {
        const std::string instance = item_id(static_cast<int>(item));
        Rng latent_rng(stream_seed(params.seed, "latent|" + instance));
        const int latent = latent_rng.pick(params.latent_distribution) + 1;
        result.latent[item] = latent;
        for (int t = 0; t < trials_per_item; ++t) {
            const int ordering_index = t % m;
            const int trial_index = t / m;
            result.records[item * trials_per_item + t] =
                run_trial(params, instance, latent, orderings[ordering_index], ordering_index,
                          trial_index);
        }
    });
    return result;
}

CalibrationOutcome simulate_calibration(const SyntheticJudgeParams& params, int n_items,
                                        int trials_per_item, Execution exec) {
    const BalancedSet balanced = generate_balanced_set(params.k());
    const std::vector<Permutation> identity_only{Permutation::identity(params.k())};

    const StudyResult perm = simulate_study(params, balanced.orderings, n_items,
                                            trials_per_item, exec);
    const StudyResult rep = simulate_study(params, identity_only, n_items, trials_per_item, exec);

    CalibrationOutcome out;
    out.n_items = n_items;
    std::vector<double> latent(n_items), perm_agg(n_items), rep_agg(n_items);
    for (int i = 0; i < n_items; ++i) {
        latent[i] = static_cast<double>(perm.latent[i]);
        const std::span<const RunRecord> perm_rows(perm.records.data() +
                                                       static_cast<std::size_t>(i) * trials_per_item,
                                                   trials_per_item);
        const std::span<const RunRecord> rep_rows(rep.records.data() +
                                                      static_cast<std::size_t>(i) * trials_per_item,
                                                  trials_per_item);
        perm_agg[i] = aggregate_scores(perm_rows).value;
        rep_agg[i] = aggregate_scores(rep_rows).value;
        out.perm_mae += std::abs(perm_agg[i] - latent[i]);
        out.rep_mae += std::abs(rep_agg[i] - latent[i]);
    }
    out.perm_mae /= n_items;
    out.rep_mae /= n_items;
    out.perm_r = pearson(perm_agg, latent);
    out.rep_r = pearson(rep_agg, latent);
    out.perm_rho = spearman(perm_agg, latent);
    out.rep_rho = spearman(rep_agg, latent);
    out.perm_mean_sigma = within_item_sigma(perm.records).mean_sigma;
    out.rep_mean_sigma = within_item_sigma(rep.records).mean_sigma;
    return out;
}

}  // namespace rubra
