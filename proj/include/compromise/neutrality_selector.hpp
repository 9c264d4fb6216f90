#pragma once

#include <map>
#include <string>
#include <vector>

#include "compromise/compromise_engine.hpp"

namespace compromise {

/// |score_a - score_b|; zero is a perfectly neutral compromise.
double neutrality_gap(const EmpathyScorePair& s);

/// pair_id -> scored compromises, in generation order.
using CandidatePool = std::map<std::string, std::vector<Compromise>>;

CandidatePool pool_by_pair(const std::vector<PoolEntry>& entries);

/// The k smallest-gap compromises per pair. Ties prefer the larger
/// score_a + score_b, then earlier input position.
std::map<std::string, std::vector<Compromise>> select_candidates(const CandidatePool& pool,
                                                                 std::size_t k);

struct SelectionReport {
    /// topic -> strategy -> percentage of that topic's selected candidates.
    std::map<std::string, std::map<std::string, double>> percentages;
    std::map<std::string, std::size_t> totals;
};

SelectionReport strategy_distribution(
    const std::map<std::string, std::vector<Compromise>>& selected,
    const std::map<std::string, Topic>& topic_of_pair);

std::string report_to_table(const SelectionReport& r, char delimiter = '\t');
std::string report_to_json(const SelectionReport& r);

}  // namespace compromise
