#include "compromise/mock_backend.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "compromise/hashing.hpp"
#include "compromise/prompts.hpp"
#include "compromise/random.hpp"
#include "compromise/text.hpp"

namespace compromise {
namespace {

using prompts::kViewALabel;
using prompts::kViewBLabel;

std::string suggestions_of(const std::string& rendered) {
    const auto pos = rendered.find(" are: ");
    return pos == std::string::npos ? rendered : rendered.substr(pos + 6);
}

// Content words only, so mock replies read like short proposals.
std::vector<std::string> content_words(const std::string& text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (auto& w : word_tokens(text))
        if (w.size() >= 4 && seen.insert(w).second) out.push_back(w);
    if (out.empty()) out = word_tokens(text);
    return out;
}

std::vector<std::string> draw(const std::vector<std::string>& pool, int k, Rng& rng) {
    std::vector<std::string> copy = pool;
    seeded_shuffle(copy, rng);
    if (static_cast<int>(copy.size()) > k) copy.resize(static_cast<size_t>(k));
    return copy;
}

int requested_count(const std::string& prompt) {
    int n = 0;
    for (size_t pos = 0; (pos = prompt.find("[Insert response ", pos)) != std::string::npos; ++pos)
        ++n;
    return n;
}

std::string compose(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::string out = "Address";
    if (!a.empty()) out += " " + join(a, " ");
    if (!b.empty()) out += (a.empty() ? " " : " while respecting ") + join(b, " ");
    return out + ".";
}

std::string generation_reply(const std::string& view_a, const std::string& view_b, int n,
                             bool lean, Rng& rng) {
    const auto wa = content_words(suggestions_of(view_a));
    const auto wb = content_words(suggestions_of(view_b));
    std::string out = "Here are the compromises.\n\n";
    for (int k = 1; k <= n; ++k) {
        int ka, kb;
        if (lean) {
            const bool favour_a = uniform_index(rng, 2) == 0;
            ka = favour_a ? 5 : static_cast<int>(uniform_index(rng, 2));
            kb = favour_a ? static_cast<int>(uniform_index(rng, 2)) : 5;
        } else {
            ka = 2 + static_cast<int>(uniform_index(rng, 4));
            kb = 2 + static_cast<int>(uniform_index(rng, 4));
        }
        out += "Response " + std::to_string(k) + ": " + compose(draw(wa, ka, rng), draw(wb, kb, rng)) +
               "\n";
    }
    return out;
}

std::set<std::string> token_set(const std::string& s) {
    auto t = word_tokens(s);
    return {t.begin(), t.end()};
}

std::pair<double, double> overlap(const std::string& c, const std::set<std::string>& a,
                                  const std::set<std::string>& b) {
    const auto ct = token_set(c);
    double sa = 0, sb = 0;
    for (const auto& t : ct) {
        sa += a.count(t);
        sb += b.count(t);
    }
    const double k = static_cast<double>(std::max<size_t>({a.size(), b.size(), 1}));
    return {sa / k, sb / k};
}

std::string improvement_reply(const std::string& prompt, int n, Rng& rng) {
    const auto va = token_set(prompts::labelled_line(prompt, kViewALabel));
    const auto vb = token_set(prompts::labelled_line(prompt, kViewBLabel));
    const auto listed = prompts::parse_scored_listing(prompt);
    if (listed.empty()) throw Error("mock backend: improvement prompt lists no compromises");
    std::string out = "Here are the improved compromises.\n\n";
    for (int k = 0; k < n; ++k) {
        const auto& prev = listed[static_cast<size_t>(k) % listed.size()];
        std::string text = prev.text;
        if (prev.score_a != prev.score_b) {
            const auto& under = prev.score_a < prev.score_b ? va : vb;
            const auto& over = prev.score_a < prev.score_b ? vb : va;
            const auto have = token_set(text);
            std::vector<std::string> candidates;
            for (const auto& t : under)
                if (!over.count(t) && !have.count(t)) candidates.push_back(t);
            if (!candidates.empty()) {
                if (!text.empty() && text.back() == '.') text.pop_back();
                text += " " + candidates[uniform_index(rng, candidates.size())] + ".";
            }
        }
        out += "Response " + std::to_string(k + 1) + ": " + text + "\n";
    }
    return out;
}

std::string self_eval_reply(const std::string& prompt, Rng& rng) {
    const auto va = token_set(prompts::labelled_line(prompt, kViewALabel));
    const auto vb = token_set(prompts::labelled_line(prompt, kViewBLabel));
    const auto listed = prompts::parse_scored_listing(prompt);
    std::string out;
    for (size_t k = 0; k < listed.size(); ++k) {
        auto [a, b] = overlap(listed[k].text, va, vb);
        a += 0.2 * (uniform_unit(rng) - 0.5);
        b += 0.2 * (uniform_unit(rng) - 0.5);
        char buf[96];
        std::snprintf(buf, sizeof buf, "Score %zu: %.3f, %.3f\n", k + 1, a, b);
        out += buf;
    }
    return out;
}

}  // namespace

std::string MockBackend::do_complete(const std::string& prompt, const SamplingConfig& sampling) {
    Rng rng(mix64(seed_ ^ mix64(sampling.seed) ^ fnv1a64(prompt)));
    const auto has = [&](std::string_view marker) {
        return prompt.find(marker) != std::string::npos;
    };

    if (has(prompts::kDecompositionMarker)) {
        const auto a = suggestions_of(prompts::labelled_line(prompt, kViewALabel));
        const auto b = suggestions_of(prompts::labelled_line(prompt, kViewBLabel));
        const auto sa = token_set(a), sb = token_set(b);
        std::vector<std::string> shared;
        for (const auto& t : sa)
            if (sb.count(t) && t.size() >= 4) shared.push_back(t);
        const std::string sim = shared.empty()
                                    ? "Both views want the place to work better for the people who use it."
                                    : "Both views mention " + join(shared, ", ") + ".";
        return std::string(prompts::kSuggestionsALabel) + " " + a + "\n" +
               std::string(prompts::kSuggestionsBLabel) + " " + b + "\n" +
               std::string(prompts::kSimilaritiesLabel) + " " + sim + "\n";
    }
    if (has(prompts::kRefineMarker) || has(prompts::kSelfImproveMarker))
        return improvement_reply(prompt, requested_count(prompt), rng);
    if (has(prompts::kSelfEvalMarker)) return self_eval_reply(prompt, rng);
    if (has(prompts::kCotMarker))
        return generation_reply(prompts::labelled_line(prompt, kViewALabel),
                                prompts::labelled_line(prompt, kViewBLabel), requested_count(prompt),
                                false, rng);
    if (has(prompts::kSingleMarker))
        return generation_reply(prompts::labelled_line(prompt, "Positive view: "),
                                prompts::labelled_line(prompt, "Negative view: "),
                                requested_count(prompt), true, rng);
    throw Error("mock backend: unrecognised prompt");
}

}  // namespace compromise
