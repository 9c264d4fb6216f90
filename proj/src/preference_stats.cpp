#include "compromise/preference_stats.hpp"

#include <map>

namespace compromise {

std::vector<double> per_user_differences(const std::vector<ItemOutcome>& outcomes,
                                         MethodLabel method, MethodLabel baseline,
                                         UserAggregate aggregate) {
    struct Acc {
        double method = 0, baseline = 0;
        int items = 0;
    };
    std::map<std::string, Acc> by_user;
    std::vector<std::string> order;
    for (const auto& o : outcomes) {
        if (!by_user.count(o.rater_id)) order.push_back(o.rater_id);
        auto& a = by_user[o.rater_id];
        const auto& src = aggregate == UserAggregate::mean_rating ? o.rating : o.first_credit;
        a.method += src.at(method);
        a.baseline += src.at(baseline);
        ++a.items;
    }
    std::vector<double> diffs;
    for (const auto& id : order) {
        const auto& a = by_user[id];
        const double d = a.method - a.baseline;
        diffs.push_back(aggregate == UserAggregate::mean_rating ? d / a.items : d);
    }
    return diffs;
}

std::vector<RankPair> per_item_rank_pairs(const std::vector<ItemOutcome>& outcomes,
                                          MethodLabel method, MethodLabel baseline) {
    std::vector<RankPair> out;
    for (const auto& o : outcomes) out.emplace_back(o.rank.at(method), o.rank.at(baseline));
    return out;
}

MethodComparison compare_to_baseline(const std::vector<ItemOutcome>& outcomes, MethodLabel method,
                                     MethodLabel baseline, const ComparisonConfig& cfg) {
    if (outcomes.empty()) throw Error("no complete rated items to analyse");
    MethodComparison c;
    c.method = method;
    c.baseline = baseline;
    std::vector<double> credit;
    for (const auto& o : outcomes) credit.push_back(o.first_credit.at(method));
    c.first_pref = bootstrap_ci(credit, cfg.iterations, cfg.level, cfg.seed);
    const auto diffs = per_user_differences(outcomes, method, baseline, cfg.aggregate);
    c.wilcoxon = wilcoxon_signed_rank(diffs);
    const auto ranks = per_item_rank_pairs(outcomes, method, baseline);
    c.permutation = permutation_test(ranks, cfg.iterations, cfg.seed);
    return c;
}

nlohmann::json to_json(const StatResult& r) {
    nlohmann::json j = {{"method", r.method},
                        {"point_estimate", r.point_estimate},
                        {"statistic", r.statistic},
                        {"iterations", r.iterations},
                        {"seed", r.seed},
                        {"degenerate", r.degenerate}};
    if (r.has_ci) {
        j["ci_low"] = r.ci_low;
        j["ci_high"] = r.ci_high;
    }
    j["p_value"] = r.p_value ? nlohmann::json(*r.p_value) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const MethodComparison& c) {
    return {{"method", to_string(c.method)},
            {"baseline", to_string(c.baseline)},
            {"first_pref_pct", 100.0 * c.first_pref.point_estimate},
            {"first_pref_ci_pct", {100.0 * c.first_pref.ci_low, 100.0 * c.first_pref.ci_high}},
            {"wilcoxon_p", c.wilcoxon.p_value.value_or(1.0)},
            {"permutation_p", c.permutation.p_value.value_or(1.0)},
            {"details",
             {{"bootstrap", to_json(c.first_pref)},
              {"wilcoxon", to_json(c.wilcoxon)},
              {"permutation", to_json(c.permutation)}}}};
}

}  // namespace compromise
