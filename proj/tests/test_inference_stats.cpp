#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "compromise/diagnostics.hpp"
#include "compromise/inference_stats.hpp"

using namespace compromise;

namespace {

// Exact two-sided signed-rank p by enumerating sign patterns over ranks of |d|.
double wilcoxon_oracle(std::vector<double> d) {
    d.erase(std::remove(d.begin(), d.end(), 0.0), d.end());
    const size_t n = d.size();
    std::vector<double> ranks(n);
    for (size_t i = 0; i < n; ++i) {
        double less = 0, equal = 0;
        for (size_t j = 0; j < n; ++j) {
            if (std::abs(d[j]) < std::abs(d[i])) ++less;
            if (std::abs(d[j]) == std::abs(d[i])) ++equal;
        }
        ranks[i] = less + (equal + 1) / 2.0;
    }
    double total = 0, w = 0;
    for (size_t i = 0; i < n; ++i) {
        total += ranks[i];
        if (d[i] > 0) w += ranks[i];
    }
    const double dev = std::abs(w - total / 2);
    size_t extreme = 0;
    for (size_t mask = 0; mask < (size_t{1} << n); ++mask) {
        double s = 0;
        for (size_t i = 0; i < n; ++i)
            if (mask >> i & 1) s += ranks[i];
        if (std::abs(s - total / 2) >= dev - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(size_t{1} << n);
}

// Exact sign-flip p for mean(baseline - method).
double permutation_oracle(const std::vector<RankPair>& items) {
    const size_t n = items.size();
    double obs = 0;
    for (const auto& [m, b] : items) obs += b - m;
    size_t extreme = 0;
    for (size_t mask = 0; mask < (size_t{1} << n); ++mask) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) s += (mask >> i & 1 ? -1 : 1) * (items[i].second - items[i].first);
        if (std::abs(s) >= std::abs(obs) - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(size_t{1} << n);
}

}  // namespace

TEST_CASE("bootstrap of constant samples") {
    const std::vector<double> ones(20, 1.0), zeros(20, 0.0);
    auto r = bootstrap_ci(ones, 1000, 0.95, 1);
    CHECK(r.ci_low == 1.0);
    CHECK(r.ci_high == 1.0);
    r = bootstrap_ci(zeros, 1000, 0.95, 1);
    CHECK(r.ci_low == 0.0);
    CHECK(r.ci_high == 0.0);
    CHECK(r.has_ci);
}

TEST_CASE("bootstrap of five ones in a hundred brackets the published interval") {
    std::vector<double> x(100, 0.0);
    for (int i = 0; i < 5; ++i) x[i * 20] = 1.0;
    const auto r = bootstrap_ci(x, 10000, 0.95, 42);
    CHECK(r.point_estimate == doctest::Approx(0.05));
    CHECK(r.ci_low <= r.point_estimate);
    CHECK(r.point_estimate <= r.ci_high);
    CHECK(std::abs(r.ci_low - 0.028) <= 0.03);
    CHECK(std::abs(r.ci_high - 0.082) <= 0.03);
    CHECK(r.iterations == 10000);
    CHECK(r.seed == 42);
}

TEST_CASE("bootstrap is deterministic and validates input") {
    const std::vector<double> x = {0, 1, 0.5, 1, 0, 0, 1};
    const auto a = bootstrap_ci(x, 2000, 0.9, 7), b = bootstrap_ci(x, 2000, 0.9, 7);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
    CHECK_THROWS_AS(bootstrap_ci(std::vector<double>{}, 100, 0.95, 1), Error);
    CHECK_THROWS_AS(bootstrap_ci(x, 100, 1.0, 1), Error);
    CHECK_THROWS_AS(bootstrap_ci(x, 100, 0.0, 1), Error);
}

TEST_CASE("bootstrap width shrinks with sample size") {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.3);
    auto median_width = [&](int n) {
        std::vector<double> widths;
        for (int s = 0; s < 9; ++s) {
            std::vector<double> x(n);
            for (auto& v : x) v = coin(rng);
            const auto r = bootstrap_ci(x, 2000, 0.95, s);
            widths.push_back(r.ci_high - r.ci_low);
        }
        std::sort(widths.begin(), widths.end());
        return widths[4];
    };
    CHECK(median_width(400) < median_width(25));
}

TEST_CASE("wilcoxon exact small cases") {
    CHECK(wilcoxon_signed_rank(std::vector<double>{1, 2, 3}).p_value.value() == doctest::Approx(0.25));
    CHECK(wilcoxon_signed_rank(std::vector<double>{5}).p_value.value() == doctest::Approx(1.0));
    const auto z = wilcoxon_signed_rank(std::vector<double>{0, 0, 0});
    CHECK(z.degenerate);
    CHECK(z.p_value.value() == 1.0);
}

TEST_CASE("wilcoxon matches enumeration and is antisymmetric") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> v(-4, 4);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> d(1 + trial % 10);
        for (auto& x : d) x = v(rng);
        if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0; })) d[0] = 1;
        const double p = wilcoxon_signed_rank(d).p_value.value();
        CHECK(p == doctest::Approx(wilcoxon_oracle(d)));
        std::vector<double> neg(d.size());
        std::transform(d.begin(), d.end(), neg.begin(), [](double x) { return -x; });
        CHECK(wilcoxon_signed_rank(neg).p_value.value() == doctest::Approx(p));
    }
}

TEST_CASE("wilcoxon normal approximation for larger samples") {
    std::vector<double> d;
    for (int i = 1; i <= 30; ++i) d.push_back(i % 4 == 0 ? -i : i);
    const auto r = wilcoxon_signed_rank(d);
    CHECK(r.p_value.value() > 0.0);
    CHECK(r.p_value.value() < 0.05);
    std::vector<double> neg(d.size());
    std::transform(d.begin(), d.end(), neg.begin(), [](double x) { return -x; });
    CHECK(wilcoxon_signed_rank(neg).p_value.value() == doctest::Approx(r.p_value.value()));
}

TEST_CASE("permutation test edge cases") {
    const std::vector<RankPair> same(8, {2.0, 2.0});
    CHECK(permutation_test(same, 1000, 1).p_value.value() == 1.0);

    const std::vector<RankPair> better(12, {1.0, 3.0});
    const auto ex = permutation_test(better, 0, 0, PermutationMode::exhaustive);
    CHECK(ex.p_value.value() == doctest::Approx(2.0 / 4096.0));
    CHECK(ex.statistic == doctest::Approx(2.0));
}

TEST_CASE("Monte-Carlo permutation p converges to the exact p") {
    std::mt19937_64 rng(21);
    std::uniform_int_distribution<int> rank(1, 5);
    const std::uint64_t iters = 20000;
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<RankPair> items(4 + trial % 9);
        for (auto& [m, b] : items) m = rank(rng), b = rank(rng);
        const double exact = permutation_oracle(items);
        CHECK(permutation_test(items, 0, 0, PermutationMode::exhaustive).p_value.value() ==
              doctest::Approx(exact));
        const double mc = permutation_test(items, iters, trial).p_value.value();
        const double se = std::sqrt(exact * (1 - exact) / static_cast<double>(iters)) + 1.0 / iters;
        CHECK(std::abs(mc - exact) <= 3 * se);
        CHECK(permutation_test(items, iters, trial).p_value.value() == mc);
    }
}

TEST_CASE("quantiles, ranks and spearman") {
    CHECK(quantile_sorted({1, 2, 3, 4}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile_sorted({1, 2, 3, 4}, 0.0) == 1.0);
    CHECK(quantile_sorted({1, 2, 3, 4}, 1.0) == 4.0);
    CHECK_THROWS_AS(quantile_sorted({}, 0.5), Error);
    CHECK(average_ranks(std::vector<double>{10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
    const std::vector<double> x = {1, 2, 3, 4, 5}, y = {2, 4, 9, 16, 30};
    CHECK(spearman_correlation(x, y) == doctest::Approx(1.0));
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
}
