#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "compromise/compromise_engine.hpp"

namespace compromise::prompts {

// Phrases that identify each prompt kind; the mock backend dispatches on them.
inline constexpr std::string_view kSingleMarker = "responses with a fixed format";
inline constexpr std::string_view kDecompositionMarker = "Step 1: Identify the suggestions in view_A.";
inline constexpr std::string_view kCotMarker = "empathically neutral compromises using the similarities";
inline constexpr std::string_view kSelfEvalMarker =
    "Estimate empathy similarity scores between each compromise and view_A/view_B, respectively.";
inline constexpr std::string_view kSelfImproveMarker = "better response with higher empathy similarity score";
inline constexpr std::string_view kRefineMarker = "better responses with higher empathy similarity score";

inline constexpr std::string_view kViewALabel = "view_A: ";
inline constexpr std::string_view kViewBLabel = "view_B: ";
inline constexpr std::string_view kSuggestionsALabel = "Suggestions A:";
inline constexpr std::string_view kSuggestionsBLabel = "Suggestions B:";
inline constexpr std::string_view kSimilaritiesLabel = "Similarities:";

std::string single_prompt(const ViewPair& pair, int n, bool demographics = false);
std::string decomposition(const ViewPair& pair, bool demographics = false);
std::string cot_generation(const ViewPair& pair, const Decomposition& d, int n,
                           bool demographics = false);
std::string self_evaluation(const ViewPair& pair, const Decomposition& d,
                            const std::vector<std::string>& compromises, bool demographics = false);
std::string self_improvement(const ViewPair& pair, const Decomposition& d,
                             const std::vector<std::string>& compromises,
                             const std::vector<EmpathyScorePair>& self_scores, int n,
                             bool demographics = false);
std::string feedback_refinement(const ViewPair& pair, const Decomposition& d,
                                const std::vector<std::string>& compromises,
                                const std::vector<EmpathyScorePair>& scores, int n,
                                bool demographics = false);

/// Previous compromises and their scores as listed inside an improvement prompt.
struct ScoredListing {
    std::string text;
    double score_a = 0.0;
    double score_b = 0.0;
};
std::vector<ScoredListing> parse_scored_listing(std::string_view prompt);

/// Value of a "label: text" line, or empty when the label is absent.
std::string labelled_line(std::string_view prompt, std::string_view label);

}  // namespace compromise::prompts
