// Times the serial reference kernels against the OpenMP path and checks that
// both produce identical records.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>

#include "rubra/permute.hpp"
#include "rubra/sim.hpp"

using namespace rubra;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename Fn>
std::pair<double, std::vector<RunRecord>> timed(Fn&& fn) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<RunRecord> records = fn();
    return {seconds_since(start), std::move(records)};
}

}  // namespace

int main(int argc, char** argv) {
    long long draws = 1'000'000;
    int items = 20'000;
    int trials = 10;
    CLI::App app{"serial vs OpenMP simulation kernel benchmark"};
    app.add_option("--draws", draws, "Draw count for the draw kernel");
    app.add_option("--items", items, "Item count for the study kernel");
    app.add_option("--trials", trials, "Trials per item for the study kernel");
    CLI11_PARSE(app, argc, argv);

    SyntheticJudgeParams params;
    params.gamma = 1.0;
    params.position_bonus = {0.5, 0.0, 0.0, 0.0, 0.25};
    params.latent_distribution = {0.1, 0.15, 0.25, 0.3, 0.2};
    params.seed = 42;
    const BalancedSet set = generate_balanced_set(5);

    std::cout << "OpenMP available: " << (parallel_available() ? "yes" : "no") << "\n\n";

    {
        auto [t_serial, serial] =
            timed([&] { return simulate_draws(params, set.orderings, draws, Execution::serial); });
        auto [t_parallel, parallel] = timed(
            [&] { return simulate_draws(params, set.orderings, draws, Execution::parallel); });
        const bool identical = serial == parallel;
        std::cout << "simulate_draws   n=" << draws << "\n"
                  << "  serial:   " << t_serial << " s\n"
                  << "  parallel: " << t_parallel << " s  (speedup "
                  << (t_parallel > 0 ? t_serial / t_parallel : 0.0) << "x)\n"
                  << "  identical records: " << (identical ? "yes" : "NO") << "\n\n";
        if (!identical) return 1;
    }

    {
        auto [t_serial, serial] = timed([&] {
            return simulate_study(params, set.orderings, items, trials, Execution::serial).records;
        });
        auto [t_parallel, parallel] = timed([&] {
            return simulate_study(params, set.orderings, items, trials, Execution::parallel)
                .records;
        });
        const bool identical = serial == parallel;
        std::cout << "simulate_study   items=" << items << " trials=" << trials << "\n"
                  << "  serial:   " << t_serial << " s\n"
                  << "  parallel: " << t_parallel << " s  (speedup "
                  << (t_parallel > 0 ? t_serial / t_parallel : 0.0) << "x)\n"
                  << "  identical records: " << (identical ? "yes" : "NO") << "\n";
        if (!identical) return 1;
    }
    return 0;
}
