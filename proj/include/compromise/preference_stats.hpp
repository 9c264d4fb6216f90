#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "compromise/inference_stats.hpp"
#include "compromise/study_protocol.hpp"

namespace compromise {

/// How each rater is summarised before the signed-rank test.
enum class UserAggregate { mean_rating, first_pref_count };

struct ComparisonConfig {
    std::uint64_t iterations = 10000;
    std::uint64_t seed = 0;
    double level = 0.95;
    UserAggregate aggregate = UserAggregate::mean_rating;
};

/// One row of the significance table: first-preference share with a bootstrap
/// CI, plus per-user Wilcoxon and per-item permutation p against the baseline.
struct MethodComparison {
    MethodLabel method = MethodLabel::cot;
    MethodLabel baseline = MethodLabel::single_prompt;
    StatResult first_pref;  // proportion in [0, 1]
    StatResult wilcoxon;
    StatResult permutation;
};

/// Per-user differences (method minus baseline) under the chosen aggregate.
std::vector<double> per_user_differences(const std::vector<ItemOutcome>& outcomes,
                                         MethodLabel method, MethodLabel baseline,
                                         UserAggregate aggregate);

/// (rank of method, rank of baseline) for every rated item.
std::vector<RankPair> per_item_rank_pairs(const std::vector<ItemOutcome>& outcomes,
                                          MethodLabel method, MethodLabel baseline);

MethodComparison compare_to_baseline(const std::vector<ItemOutcome>& outcomes, MethodLabel method,
                                     MethodLabel baseline, const ComparisonConfig& cfg);

nlohmann::json to_json(const StatResult& r);
nlohmann::json to_json(const MethodComparison& c);

}  // namespace compromise
