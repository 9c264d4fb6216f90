#include "compromise/neutrality_selector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

namespace compromise {

double neutrality_gap(const EmpathyScorePair& s) { return std::abs(s.score_a - s.score_b); }

CandidatePool pool_by_pair(const std::vector<PoolEntry>& entries) {
    CandidatePool pool;
    for (const auto& e : entries) pool[e.compromise.pair_id].push_back(e.compromise);
    return pool;
}

std::map<std::string, std::vector<Compromise>> select_candidates(const CandidatePool& pool,
                                                                 std::size_t k) {
    std::map<std::string, std::vector<Compromise>> out;
    for (const auto& [pair_id, cands] : pool) {
        for (const auto& c : cands)
            if (!c.scores)
                throw Error("unscored compromise in pool for pair " + pair_id +
                            " (strategy " + to_string(c.strategy) + ")");
        if (cands.size() < k)
            throw Error("pair " + pair_id + " has " + std::to_string(cands.size()) +
                        " candidates, fewer than k = " + std::to_string(k));
        std::vector<size_t> idx(cands.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](size_t x, size_t y) {
            const auto& a = *cands[x].scores;
            const auto& b = *cands[y].scores;
            const double ga = neutrality_gap(a), gb = neutrality_gap(b);
            if (ga != gb) return ga < gb;
            return a.score_a + a.score_b > b.score_a + b.score_b;
        });
        auto& sel = out[pair_id];
        for (size_t i = 0; i < k; ++i) sel.push_back(cands[idx[i]]);
    }
    return out;
}

SelectionReport strategy_distribution(
    const std::map<std::string, std::vector<Compromise>>& selected,
    const std::map<std::string, Topic>& topic_of_pair) {
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    SelectionReport r;
    for (const auto& [pair_id, cs] : selected) {
        auto it = topic_of_pair.find(pair_id);
        if (it == topic_of_pair.end()) throw Error("no topic known for pair " + pair_id);
        const auto topic = to_string(it->second);
        for (const auto& c : cs) {
            ++counts[topic][to_string(c.strategy)];
            ++r.totals[topic];
        }
    }
    for (const auto& [topic, by_strategy] : counts) {
        auto& row = r.percentages[topic];
        for (Strategy s : kAllStrategies) row[to_string(s)] = 0.0;
        for (const auto& [s, n] : by_strategy)
            row[s] = 100.0 * static_cast<double>(n) / static_cast<double>(r.totals[topic]);
    }
    return r;
}

std::string report_to_table(const SelectionReport& r, char delimiter) {
    std::string out = "topic";
    for (Strategy s : kAllStrategies) out += delimiter + to_string(s);
    out += delimiter + std::string("selected\n");
    for (const auto& [topic, row] : r.percentages) {
        out += topic;
        for (Strategy s : kAllStrategies) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", row.at(to_string(s)));
            out += delimiter + std::string(buf);
        }
        out += delimiter + std::to_string(r.totals.at(topic)) + "\n";
    }
    return out;
}

std::string report_to_json(const SelectionReport& r) {
    nlohmann::json j;
    for (const auto& [topic, row] : r.percentages) {
        j[topic]["percentages"] = row;
        j[topic]["selected"] = r.totals.at(topic);
    }
    return j.dump(2);
}

}  // namespace compromise
