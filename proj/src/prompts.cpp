#include "compromise/prompts.hpp"

#include <cstdio>
#include <sstream>

#include "compromise/text.hpp"

namespace compromise::prompts {
namespace {

constexpr std::string_view kPreamble = "You are an intelligent AI assistant!\n\n";

std::string fmt_score(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", x);
    return buf;
}

std::string response_format(int n) {
    std::string out = "Please provide your response in the following format:\n";
    for (int k = 1; k <= n; ++k)
        out += "Response " + std::to_string(k) + ": [Insert response " + std::to_string(k) +
               " here]\n";
    return out;
}

std::string views_block(const ViewPair& p, bool demographics) {
    std::string out;
    out += std::string(kViewALabel) + render_view_text(p.view_a, demographics) + "\n";
    out += std::string(kViewBLabel) + render_view_text(p.view_b, demographics) + "\n";
    return out;
}

std::string context_block(const ViewPair& p, const Decomposition& d, bool demographics) {
    std::string out(kPreamble);
    out += "Two people wrote contrasting views about a similar place. view_A is the positive "
           "view and view_B is the negative view.\n\n";
    out += views_block(p, demographics);
    out += "\n";
    out += std::string(kSuggestionsALabel) + " " + d.suggestions_a + "\n";
    out += std::string(kSuggestionsBLabel) + " " + d.suggestions_b + "\n";
    out += std::string(kSimilaritiesLabel) + " " + d.similarities + "\n\n";
    return out;
}

std::string listing(const std::vector<std::string>& compromises,
                    const std::vector<EmpathyScorePair>* scores) {
    std::string out;
    for (size_t i = 0; i < compromises.size(); ++i) {
        const auto k = std::to_string(i + 1);
        out += "Compromise " + k + ": " + compromises[i] + "\n";
        if (scores)
            out += "Scores " + k + ": score_A = " + fmt_score((*scores)[i].score_a) +
                   ", score_B = " + fmt_score((*scores)[i].score_b) + "\n";
    }
    return out;
}

}  // namespace

std::string single_prompt(const ViewPair& pair, int n, bool demographics) {
    std::string out(kPreamble);
    out += "I need you to generate a third person response strictly based on two contrasting "
           "views called positive story and negative story.\n\n";
    out += "The positive and negative story should be equally empathetic towards the response. "
           "The response should be a specific suggestion. It should be a compromise between the "
           "positive and negative stories based on the context of both stories.\n\n";
    out += "Please generate " + std::to_string(n) +
           " responses with a fixed format. Try to be as specific and short instead of being "
           "comprehensive.\n\n";
    out += "Please provide your response in the following format:\n";
    out += "Positive view: " + render_view_text(pair.view_a, demographics) + "\n";
    out += "Negative view: " + render_view_text(pair.view_b, demographics) + "\n";
    for (int k = 1; k <= n; ++k)
        out += "Response " + std::to_string(k) + ": [Insert response " + std::to_string(k) +
               " here]\n";
    return out;
}

std::string decomposition(const ViewPair& pair, bool demographics) {
    std::string out(kPreamble);
    out += "Two people wrote contrasting views about a similar place. view_A is the positive "
           "view and view_B is the negative view.\n\n";
    out += views_block(pair, demographics);
    out += "\n";
    out += std::string(kDecompositionMarker) + "\n";
    out += "Step 2: Identify the suggestions in view_B.\n";
    out += "Step 3: Identify similarities in suggestion between view_A and view_B.\n\n";
    out += "Please provide your answer in the following format:\n";
    out += std::string(kSuggestionsALabel) + " [suggestions in view_A]\n";
    out += std::string(kSuggestionsBLabel) + " [suggestions in view_B]\n";
    out += std::string(kSimilaritiesLabel) + " [similarities between the suggestions]\n";
    return out;
}

std::string cot_generation(const ViewPair& pair, const Decomposition& d, int n,
                           bool demographics) {
    std::string out = context_block(pair, d, demographics);
    out += "Step 4: Create " + std::to_string(n) + " " + std::string(kCotMarker) + ".\n";
    out += "Each compromise should be equally empathetic towards view_A and view_B. Try to be as "
           "specific and short instead of being comprehensive.\n\n";
    out += response_format(n);
    return out;
}

std::string self_evaluation(const ViewPair& pair, const Decomposition& d,
                            const std::vector<std::string>& compromises, bool demographics) {
    std::string out = context_block(pair, d, demographics);
    out += listing(compromises, nullptr);
    out += "\nStep 5: " + std::string(kSelfEvalMarker) + "\n";
    out += "Give each score as a number between -1 and 1.\n\n";
    out += "Please provide your response in the following format:\n";
    for (size_t k = 1; k <= compromises.size(); ++k)
        out += "Score " + std::to_string(k) + ": [score_A], [score_B]\n";
    return out;
}

std::string self_improvement(const ViewPair& pair, const Decomposition& d,
                             const std::vector<std::string>& compromises,
                             const std::vector<EmpathyScorePair>& self_scores, int n,
                             bool demographics) {
    std::string out = context_block(pair, d, demographics);
    out += "Your compromises and your own empathy similarity estimates:\n";
    out += listing(compromises, &self_scores);
    out += "\nStep 6: Create " + std::to_string(n) + " " + std::string(kSelfImproveMarker) + ".\n\n";
    out += response_format(n);
    return out;
}

std::string feedback_refinement(const ViewPair& pair, const Decomposition& d,
                                const std::vector<std::string>& compromises,
                                const std::vector<EmpathyScorePair>& scores, int n,
                                bool demographics) {
    std::string out = context_block(pair, d, demographics);
    out += "Previous compromises with empathy similarity scores from the similarity model "
           "(score_A against view_A, score_B against view_B; equal scores mean a neutral "
           "compromise):\n";
    out += listing(compromises, &scores);
    out += "\nCreate " + std::to_string(n) + " " + std::string(kRefineMarker) +
           " for both view_A and view_B, keeping score_A and score_B close to each other.\n\n";
    out += response_format(n);
    return out;
}

std::string labelled_line(std::string_view prompt, std::string_view label) {
    std::istringstream in{std::string(prompt)};
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(label, 0) == 0) return trim(std::string_view(line).substr(label.size()));
    return {};
}

std::vector<ScoredListing> parse_scored_listing(std::string_view prompt) {
    std::vector<ScoredListing> out;
    std::istringstream in{std::string(prompt)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("Compromise ", 0) == 0) {
            const auto colon = line.find(": ");
            if (colon == std::string::npos) continue;
            out.push_back({trim(std::string_view(line).substr(colon + 2)), 0.0, 0.0});
        } else if (line.rfind("Scores ", 0) == 0 && !out.empty()) {
            double a = 0, b = 0;
            const auto pos = line.find("score_A = ");
            if (pos != std::string::npos &&
                std::sscanf(line.c_str() + pos, "score_A = %lf, score_B = %lf", &a, &b) == 2) {
                out.back().score_a = a;
                out.back().score_b = b;
            }
        }
    }
    return out;
}

}  // namespace compromise::prompts
