#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace compromise {

struct StatResult {
    double point_estimate = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool has_ci = false;
    std::optional<double> p_value;
    double statistic = 0.0;  // W+ for Wilcoxon, mean difference for permutation
    std::string method;
    std::uint64_t iterations = 0;
    std::uint64_t seed = 0;
    bool degenerate = false;  // e.g. Wilcoxon with every difference zero
};

/// Percentile bootstrap of the sample mean.
StatResult bootstrap_ci(std::span<const double> sample, std::uint64_t iterations, double level,
                        std::uint64_t seed);

/// Two-sided signed-rank test. Zeros are dropped; exact enumeration of all
/// 2^n sign patterns for n <= exact_max_n, otherwise a normal approximation
/// with tie-corrected variance.
StatResult wilcoxon_signed_rank(std::span<const double> diffs, int exact_max_n = 12);

enum class PermutationMode { monte_carlo, exhaustive };

/// Per-item paired ranks (rank of the method, rank of the baseline), lower is better.
using RankPair = std::pair<double, double>;

/// Sign-flip permutation test on mean(rank_baseline - rank_method).
/// Monte-Carlo p uses add-one smoothing; exhaustive mode enumerates every
/// flip pattern (n <= 24).
StatResult permutation_test(std::span<const RankPair> per_item_ranks, std::uint64_t iterations,
                            std::uint64_t seed, PermutationMode mode = PermutationMode::monte_carlo);

double normal_cdf(double z);

/// Hyndman-Fan type 7 quantile of an ascending sample.
double quantile_sorted(const std::vector<double>& sorted, double q);

/// Average ranks (1-based) with ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

double spearman_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace compromise
