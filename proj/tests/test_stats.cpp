#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "profile_fixture.hpp"
#include "rubra/judges.hpp"
#include "rubra/permute.hpp"
#include "rubra/stats.hpp"

using namespace rubra;

namespace {

// Direct-definition references, kept independent of the library path.

double pearson_reference(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double num = 0, dx2 = 0, dy2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (x[i] - mx) * (y[i] - my);
        dx2 += (x[i] - mx) * (x[i] - mx);
        dy2 += (y[i] - my) * (y[i] - my);
    }
    return num / std::sqrt(dx2 * dy2);
}

// O(n^2) average ranks: rank = (#smaller) + (#equal + 1) / 2.
std::vector<double> ranks_reference(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        int smaller = 0, equal = 0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            smaller += v[j] < v[i];
            equal += v[j] == v[i];
        }
        out[i] = smaller + (equal + 1) / 2.0;
    }
    return out;
}

double spearman_reference(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_reference(ranks_reference(x), ranks_reference(y));
}

RunRecord make_record(const std::string& instance, int ordering_index, const Permutation& perm,
                      int score, int trial = 0) {
    RunRecord r;
    r.instance_id = instance;
    r.ordering_index = ordering_index;
    r.trial_index = trial;
    r.permutation = perm;
    r.judge_id = "test";
    r.raw_output = "[RESULT] " + std::to_string(score);
    r.verdict = JudgeVerdict{"", score};
    r.chosen_position = perm.position_of(score);
    return r;
}

RunRecord make_failed(const std::string& instance, int ordering_index, const Permutation& perm) {
    RunRecord r;
    r.instance_id = instance;
    r.ordering_index = ordering_index;
    r.permutation = perm;
    r.judge_id = "test";
    r.raw_output = "unusable";
    r.verdict = ParseError{ParseErrorKind::missing_score, "no marker"};
    r.chosen_position = 0;
    return r;
}

PositionProfile uniform_profile(int k) {
    return PositionProfile::from_fractions(
        std::vector<std::vector<double>>(k, std::vector<double>(k, 1.0 / k)));
}

}  // namespace

TEST_CASE("pearson matches the direct definition on pinned cases") {
    CHECK(*pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) ==
          doctest::Approx(1.0).epsilon(1e-15));
    CHECK(*pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) ==
          doctest::Approx(-1.0).epsilon(1e-15));
    // exact: covariance 4, variances 5 and 5 -> 4/5
    CHECK(*pearson(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == 0.8);
}

TEST_CASE("spearman handles ties by average ranks") {
    CHECK(fractional_ranks(std::vector<double>{1, 2, 2, 3}) ==
          std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(fractional_ranks(std::vector<double>{1, 1, 2, 2, 3, 3, 4, 5, 5}) ==
          std::vector<double>{1.5, 1.5, 3.5, 3.5, 5.5, 5.5, 7.0, 8.5, 8.5});

    // the tie case equals pearson of the rank vectors exactly
    const std::vector<double> x{1, 2, 2, 3};
    const std::vector<double> y{1, 2, 3, 4};
    CHECK(*spearman(x, y) == *pearson(std::vector<double>{1, 2.5, 2.5, 4},
                                      std::vector<double>{1, 2, 3, 4}));

    // strictly monotone pairs have rho exactly 1
    CHECK(*spearman(std::vector<double>{1, 5, 9, 40}, std::vector<double>{-2, 0, 7, 8}) ==
          doctest::Approx(1.0).epsilon(1e-15));
    // identical ranks through the reduced 0.8 example
    CHECK(*spearman(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 3, 2, 4}) == 0.8);
}

TEST_CASE("correlations agree with naive references on random vectors") {
    Rng rng(20260808);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 3 + rng.next_u64() % 48;
        std::vector<double> x(n), y(n);
        const bool with_ties = trial % 2 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (with_ties) {
                x[i] = static_cast<double>(rng.next_u64() % 6);
                y[i] = static_cast<double>(rng.next_u64() % 6);
            } else {
                x[i] = rng.next_double();
                y[i] = rng.next_double();
            }
        }
        const auto r = pearson(x, y);
        const auto rho = spearman(x, y);
        const double rx = pearson_reference(x, y);
        if (std::isnan(rx)) {
            CHECK_FALSE(r.has_value());
        } else {
            REQUIRE(r.has_value());
            CHECK(*r == doctest::Approx(rx).epsilon(1e-12));
        }
        const double rhox = spearman_reference(x, y);
        if (std::isnan(rhox)) {
            CHECK_FALSE(rho.has_value());
        } else {
            REQUIRE(rho.has_value());
            CHECK(*rho == doctest::Approx(rhox).epsilon(1e-12));
        }
    }
}

TEST_CASE("correlation invariances") {
    Rng rng(5);
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) {
        x[i] = rng.next_double() * 4 + 1;
        y[i] = rng.next_double() * 4 + 1;
    }
    const double r = *pearson(x, y);
    const double rho = *spearman(x, y);

    std::vector<double> ax(20), my(20);
    for (int i = 0; i < 20; ++i) {
        ax[i] = 3.5 * x[i] + 11.0;                 // positive affine
        my[i] = std::exp(y[i]);                    // strictly monotone
    }
    CHECK(*pearson(ax, y) == doctest::Approx(r).epsilon(1e-12));
    CHECK(*spearman(ax, y) == doctest::Approx(rho).epsilon(1e-12));
    CHECK(*spearman(x, my) == doctest::Approx(rho).epsilon(1e-12));
}

TEST_CASE("correlation error handling") {
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}),
                    DomainError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DomainError);
    CHECK_FALSE(pearson(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}).has_value());
    CHECK_FALSE(spearman(std::vector<double>{1, 2, 3}, std::vector<double>{7, 7, 7}).has_value());
}

TEST_CASE("bias cost reproduces the measured-model reference table") {
    const auto fixtures = testutil::load_model_profiles(std::string(RUBRA_TEST_DATA_DIR) +
                                                        "/model_profiles.json");
    REQUIRE(fixtures.size() == 7);
    const BalancedSet rotations = generate_balanced_set(5);
    const Permutation identity = Permutation::identity(5);

    for (const auto& [model, fx] : fixtures) {
        CAPTURE(model);
        const double default_cost = bias_cost(fx.profile, identity) * 100.0;
        CHECK(std::abs(default_cost - fx.default_cost_percent) <= 0.2);
        const OrderingCost best = min_bias_ordering(fx.profile, rotations.orderings);
        CHECK(best.ordering == fx.min_order);
        CHECK(std::abs(best.cost * 100.0 - fx.min_cost_percent) <= 0.2);
    }

    // spot values
    const auto& gpt41 = fixtures.at("gpt-4.1");
    CHECK(std::abs(bias_cost(gpt41.profile, Permutation::reversed(5)) * 100.0 - 5.8) <= 0.2);
    const auto& oss = fixtures.at("oss-120b");
    CHECK(std::abs(bias_cost(oss.profile, identity) * 100.0 - 9.8) <= 0.2);
    CHECK(std::abs(bias_cost(oss.profile, Permutation({4, 3, 2, 1, 5})) * 100.0 - 2.9) <= 0.2);
}

TEST_CASE("bias cost basics") {
    const PositionProfile uniform = uniform_profile(5);
    for (const Permutation& perm : generate_balanced_set(5).orderings) {
        CHECK(bias_cost(uniform, perm) == doctest::Approx(0.0).epsilon(1e-15));
    }

    // undefined row is an error naming the score
    const PositionProfile holey = PositionProfile::from_counts(
        {{1, 0, 0}, {0, 0, 0}, {0, 0, 1}});
    try {
        bias_cost(holey, Permutation::identity(3));
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("score 2") != std::string::npos);
    }
}

TEST_CASE("bias cost is invariant under consistent score relabeling") {
    // relabeling scores in both the profile rows and the ordering touches
    // the same cells, so the cost cannot change
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<long long>> counts(5, std::vector<long long>(5, 0));
        for (auto& row : counts) {
            for (auto& c : row) c = static_cast<long long>(rng.next_u64() % 40) + 1;
        }
        const PositionProfile profile = PositionProfile::from_counts(counts);

        std::vector<int> relabel{1, 2, 3, 4, 5};
        for (std::size_t i = 5; i > 1; --i) {
            std::swap(relabel[i - 1], relabel[rng.next_u64() % i]);
        }
        std::vector<std::vector<long long>> relabeled(5);
        for (int s = 1; s <= 5; ++s) relabeled[relabel[s - 1] - 1] = counts[s - 1];
        const PositionProfile relabeled_profile = PositionProfile::from_counts(relabeled);

        for (const Permutation& perm : generate_balanced_set(5).orderings) {
            std::vector<int> mapped(5);
            for (int p = 1; p <= 5; ++p) mapped[p - 1] = relabel[perm.score_at(p) - 1];
            CHECK(bias_cost(profile, perm) ==
                  doctest::Approx(bias_cost(relabeled_profile, Permutation(mapped)))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("bias cost bound holds for synthetic-model profiles") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        SyntheticJudgeParams params;
        params.gamma = rng.next_double() * 3.0;
        params.position_bonus.resize(5);
        params.latent_distribution.assign(5, 0.2);
        for (double& b : params.position_bonus) b = rng.next_double() * 4.0 - 2.0;
        const PositionProfile profile =
            expected_position_profile(params, generate_balanced_set(5));
        for (const Permutation& perm : generate_balanced_set(5).orderings) {
            const double cost = bias_cost(profile, perm);
            CHECK(cost >= 0.0);
            CHECK(cost <= 2.0 - 2.0 / 5.0 + 1e-12);
        }
    }
}

TEST_CASE("min_bias_ordering picks the minimum and breaks ties canonically") {
    const BalancedSet rotations = generate_balanced_set(5);

    SUBCASE("uniform profile ties resolve to the identity") {
        const OrderingCost best = min_bias_ordering(uniform_profile(5), rotations.orderings);
        CHECK(best.index == 0);
        CHECK(best.ordering == Permutation::identity(5));
        CHECK(best.cost == doctest::Approx(0.0));
    }

    SUBCASE("returned cost is never beaten (exhaustive check)") {
        Rng rng(123);
        for (int trial = 0; trial < 30; ++trial) {
            std::vector<std::vector<long long>> counts(5, std::vector<long long>(5, 0));
            for (int s = 0; s < 5; ++s) {
                for (int p = 0; p < 5; ++p) {
                    counts[s][p] = static_cast<long long>(rng.next_u64() % 50) + 1;
                }
            }
            const PositionProfile profile = PositionProfile::from_counts(counts);
            const OrderingCost best = min_bias_ordering(profile, rotations.orderings);
            for (const Permutation& other : rotations.orderings) {
                CHECK(best.cost <= bias_cost(profile, other) + 1e-15);
            }
        }
    }

    SUBCASE("empty candidate list is an error") {
        CHECK_THROWS_AS(min_bias_ordering(uniform_profile(5), std::vector<Permutation>{}),
                        DomainError);
    }
}

TEST_CASE("position distribution") {
    const BalancedSet set = generate_balanced_set(5);

    SUBCASE("all selections at position 1") {
        std::vector<RunRecord> records;
        for (int i = 0; i < 10; ++i) {
            const Permutation& perm = set.orderings[i];
            records.push_back(make_record("a", i, perm, perm.score_at(1)));
        }
        const PositionDistribution d = position_distribution(records);
        CHECK(d.fraction == std::vector<double>{1, 0, 0, 0, 0});
        CHECK(d.balanced_source);
    }

    SUBCASE("even counts give the uniform fractions") {
        std::vector<RunRecord> records;
        for (int i = 0; i < 10; ++i) {
            const Permutation& perm = set.orderings[i];
            // choose position i % 5 + 1 -> two selections per position
            records.push_back(make_record("a", i, perm, perm.score_at(i % 5 + 1)));
        }
        const PositionDistribution d = position_distribution(records);
        for (double f : d.fraction) CHECK(f == doctest::Approx(0.2));
        double total = 0;
        for (double f : d.fraction) total += f;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("unparsed records are excluded but counted") {
        std::vector<RunRecord> records{make_record("a", 0, set.orderings[0], 1),
                                       make_failed("a", 1, set.orderings[1])};
        const PositionDistribution d = position_distribution(records);
        CHECK(d.parsed == 1);
        CHECK(d.unparsed == 1);
        CHECK_FALSE(d.balanced_source);  // two orderings only
    }

    SUBCASE("no parseable records is an error") {
        std::vector<RunRecord> records{make_failed("a", 0, set.orderings[0])};
        CHECK_THROWS_AS(position_distribution(records), DomainError);
        CHECK_THROWS_AS(position_distribution(std::vector<RunRecord>{}), DomainError);
    }
}

TEST_CASE("score-position profile from records") {
    const Permutation identity = Permutation::identity(5);
    const Permutation reverse = Permutation::reversed(5);

    SUBCASE("documented count example") {
        // score 5 chosen twice at P1, once at P2
        std::vector<RunRecord> records{
            make_record("a", 5, reverse, 5),       // reverse puts 5 at P1
            make_record("b", 5, reverse, 5),       //
            make_record("c", 4, Permutation({4, 5, 3, 2, 1}), 5),  // 5 at P2
            make_record("d", 0, identity, 1),
        };
        const PositionProfile profile = score_position_profile(records);
        REQUIRE(profile.defined(5));
        CHECK(profile.at(5, 1) == doctest::Approx(2.0 / 3));
        CHECK(profile.at(5, 2) == doctest::Approx(1.0 / 3));
        CHECK(profile.at(5, 3) == 0.0);
        CHECK(profile.defined(1));
        CHECK_FALSE(profile.defined(2));
        CHECK_FALSE(profile.defined(3));
    }

    SUBCASE("defined rows always sum to 1") {
        Rng rng(7);
        const BalancedSet set = generate_balanced_set(5);
        std::vector<RunRecord> records;
        for (int i = 0; i < 500; ++i) {
            const Permutation& perm = set.orderings[rng.next_u64() % 10];
            records.push_back(make_record("i" + std::to_string(i), 0, perm,
                                          1 + static_cast<int>(rng.next_u64() % 5)));
        }
        const PositionProfile profile = score_position_profile(records);
        for (int s = 1; s <= 5; ++s) {
            if (!profile.defined(s)) continue;
            double sum = 0;
            for (int p = 1; p <= 5; ++p) sum += profile.at(s, p);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("aggregate_scores") {
    const Permutation identity = Permutation::identity(5);
    SUBCASE("constant scores") {
        std::vector<RunRecord> records;
        for (int t = 0; t < 10; ++t) records.push_back(make_record("a", 0, identity, 3, t));
        CHECK(aggregate_scores(records).value == 3.0);
    }
    SUBCASE("symmetric scores average to the midpoint") {
        std::vector<RunRecord> records;
        int t = 0;
        for (int s : {1, 2, 3, 4, 5, 5, 4, 3, 2, 1}) {
            records.push_back(make_record("a", 0, identity, s, t++));
        }
        CHECK(aggregate_scores(records).value == 3.0);
    }
    SUBCASE("failures are excluded and counted") {
        std::vector<RunRecord> records{make_record("a", 0, identity, 4),
                                       make_failed("a", 1, identity),
                                       make_record("a", 2, identity, 2)};
        const AggregateResult agg = aggregate_scores(records);
        CHECK(agg.value == 3.0);
        CHECK(agg.n_parsed == 2);
        CHECK(agg.n_failed == 1);
    }
    SUBCASE("nothing parsed is an error") {
        std::vector<RunRecord> records{make_failed("a", 0, identity)};
        CHECK_THROWS_AS(aggregate_scores(records), DomainError);
    }
}

TEST_CASE("within-item sigma") {
    const Permutation identity = Permutation::identity(5);
    std::vector<RunRecord> records;
    for (int t = 0; t < 4; ++t) records.push_back(make_record("const", 0, identity, 2, t));
    int t = 0;
    for (int s : {1, 2, 3, 4, 5}) records.push_back(make_record("spread", 0, identity, s, t++));
    records.push_back(make_record("pairs", 0, identity, 3, 0));
    records.push_back(make_record("pairs", 0, identity, 5, 1));
    records.push_back(make_record("lonely", 0, identity, 4, 0));  // excluded, one trial

    const ConsistencyReport report = within_item_sigma(records);
    CHECK(report.per_item_sigma.at("const") == 0.0);
    CHECK(report.per_item_sigma.at("spread") == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK(report.per_item_sigma.at("pairs") == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(report.excluded_items == 1);
    CHECK(report.per_item_sigma.size() == 3);
    const double expected_mean =
        (0.0 + std::sqrt(2.5) + std::sqrt(2.0)) / 3.0;
    CHECK(report.mean_sigma == doctest::Approx(expected_mean).epsilon(1e-12));
}

TEST_CASE("correlation report against human scores") {
    const Permutation identity = Permutation::identity(5);
    std::map<std::string, std::vector<double>> human;
    std::vector<RunRecord> records;
    // model aggregates identical to human means over 5 items
    const std::vector<int> scores{1, 2, 3, 4, 5};
    for (int i = 0; i < 5; ++i) {
        const std::string id = "item-" + std::to_string(i);
        records.push_back(make_record(id, 0, identity, scores[i]));
        human[id] = {static_cast<double>(scores[i])};
    }

    SUBCASE("perfect agreement") {
        const CorrelationReport rep =
            correlation_report(records, human, AggregationMode::permutation);
        CHECK(*rep.pearson_r == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(*rep.spearman_rho == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(rep.n_items == 5);
        CHECK(rep.mode == AggregationMode::permutation);
    }

    SUBCASE("constant human scores are undefined, not a sentinel") {
        for (auto& [id, v] : human) v = {3.0};
        const CorrelationReport rep =
            correlation_report(records, human, AggregationMode::repeat);
        CHECK_FALSE(rep.pearson_r.has_value());
        CHECK_FALSE(rep.spearman_rho.has_value());
    }

    SUBCASE("multi-rater means are used") {
        human["item-0"] = {1, 1, 1};
        human["item-4"] = {4, 5, 5};  // mean 14/3
        const CorrelationReport rep =
            correlation_report(records, human, AggregationMode::permutation);
        CHECK(rep.pearson_r.has_value());
        CHECK(*rep.pearson_r > 0.9);
    }

    SUBCASE("insufficient overlap is an error") {
        std::map<std::string, std::vector<double>> two{{"item-0", {1.0}}, {"item-1", {2.0}}};
        CHECK_THROWS_AS(correlation_report(records, two, AggregationMode::permutation),
                        DomainError);
    }
}

TEST_CASE("per-ordering correlations and ordering ranks") {
    const BalancedSet set = generate_balanced_set(5);
    std::map<std::string, std::vector<double>> human;
    std::vector<RunRecord> records;
    // ordering 0 agrees with humans perfectly; ordering 1 inversely; ordering 2 noisily
    const std::vector<int> truth{1, 2, 3, 4, 5};
    for (int i = 0; i < 5; ++i) {
        const std::string id = "item-" + std::to_string(i);
        human[id] = {static_cast<double>(truth[i])};
        records.push_back(make_record(id, 0, set.orderings[0], truth[i]));
        records.push_back(make_record(id, 1, set.orderings[1], 6 - truth[i]));
        records.push_back(make_record(id, 2, set.orderings[2], std::vector<int>{2, 1, 4, 3, 5}[i]));
    }
    const OrderingCorrelations per = per_ordering_correlations(records, human);
    REQUIRE(per.by_ordering.size() == 3);
    CHECK(ordering_rank(per, 0, CorrelationMetric::pearson) == 1);
    CHECK(ordering_rank(per, 1, CorrelationMetric::pearson) == 3);
    CHECK(ordering_rank(per, 2, CorrelationMetric::pearson) == 2);
    CHECK(ordering_rank(per, 0, CorrelationMetric::spearman) == 1);
    CHECK_THROWS_AS(ordering_rank(per, 9, CorrelationMetric::pearson), DomainError);

    SUBCASE("ties share the best rank") {
        OrderingCorrelations tied;
        for (int i = 0; i < 10; ++i) {
            CorrelationReport r;
            r.pearson_r = 0.42;
            r.n_items = 5;
            r.mode = AggregationMode::single_ordering;
            tied.by_ordering[i] = r;
        }
        for (int i = 0; i < 10; ++i) CHECK(ordering_rank(tied, i, CorrelationMetric::pearson) == 1);
    }

    SUBCASE("three-way ordering example") {
        OrderingCorrelations three;
        const std::vector<double> values{0.5, 0.4, 0.45};
        for (int i = 0; i < 3; ++i) {
            CorrelationReport r;
            r.pearson_r = values[i];
            three.by_ordering[i] = r;
        }
        CHECK(ordering_rank(three, 2, CorrelationMetric::pearson) == 2);
    }

    SUBCASE("undefined metric for the target is an error") {
        OrderingCorrelations holey;
        CorrelationReport undef;
        undef.pearson_r.reset();
        holey.by_ordering[0] = undef;
        CHECK_THROWS_AS(ordering_rank(holey, 0, CorrelationMetric::pearson), DomainError);
    }
}

TEST_CASE("record statistics are insertion-order free") {
    Rng rng(31);
    const BalancedSet set = generate_balanced_set(5);
    std::vector<RunRecord> records;
    for (int i = 0; i < 200; ++i) {
        const Permutation& perm = set.orderings[rng.next_u64() % 10];
        records.push_back(make_record("item-" + std::to_string(i % 20),
                                      static_cast<int>(rng.next_u64() % 10), perm,
                                      1 + static_cast<int>(rng.next_u64() % 5),
                                      static_cast<int>(i / 20)));
    }
    std::vector<RunRecord> shuffled = records;
    for (std::size_t i = shuffled.size(); i > 1; --i) {
        std::swap(shuffled[i - 1], shuffled[rng.next_u64() % i]);
    }
    CHECK(position_distribution(records).fraction ==
          position_distribution(shuffled).fraction);
    CHECK(score_position_profile(records).rows == score_position_profile(shuffled).rows);
    CHECK(within_item_sigma(records).mean_sigma ==
          within_item_sigma(shuffled).mean_sigma);
}
