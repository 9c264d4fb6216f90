#include "compromise/compromise_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "compromise/prompts.hpp"
#include "compromise/text.hpp"

namespace compromise {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::single_prompt: return "single_prompt";
        case Strategy::cot: return "cot";
        case Strategy::cot_llm: return "cot_llm";
        case Strategy::cot_feedback: return "cot_feedback";
    }
    return "?";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "single_prompt" || s == "sp") return Strategy::single_prompt;
    if (s == "cot") return Strategy::cot;
    if (s == "cot_llm" || s == "cot-llm") return Strategy::cot_llm;
    if (s == "cot_feedback" || s == "cot-fb") return Strategy::cot_feedback;
    throw Error("unknown strategy '" + s +
                "' (valid: single_prompt|sp, cot, cot_llm|cot-llm, cot_feedback|cot-fb)");
}

EmpathyScorePair TokenOverlapScorer::score(std::string_view compromise, const ViewPair& pair) const {
    auto to_set = [](std::string_view s) {
        auto t = word_tokens(s);
        return std::set<std::string>(t.begin(), t.end());
    };
    const auto a = to_set(render_view_text(pair.view_a));
    const auto b = to_set(render_view_text(pair.view_b));
    const auto c = to_set(compromise);
    if (c.empty()) throw Error("compromise text is empty");
    double sa = 0, sb = 0;
    for (const auto& t : c) {
        sa += a.count(t);
        sb += b.count(t);
    }
    const double k = static_cast<double>(std::max<size_t>({a.size(), b.size(), 1}));
    return {sa / k, sb / k};
}

std::vector<std::string> parse_llm_response(std::string_view text, int n) {
    if (n < 1) throw Error("parse_llm_response: n must be >= 1");
    static const std::regex marker(R"(response\s+(\d+)\s*:)", std::regex::icase);
    struct Hit {
        int index;
        size_t begin;  // start of the marker
        size_t body;   // first character after the colon
    };
    std::vector<Hit> hits;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), marker); it != std::sregex_iterator();
         ++it) {
        hits.push_back({std::stoi((*it)[1].str()), static_cast<size_t>(it->position()),
                        static_cast<size_t>(it->position() + it->length())});
    }
    std::vector<std::optional<std::string>> found(static_cast<size_t>(n));
    for (size_t h = 0; h < hits.size(); ++h) {
        const int k = hits[h].index;
        if (k < 1 || k > n || found[k - 1]) continue;
        size_t end = h + 1 < hits.size() ? hits[h + 1].begin : s.size();
        const size_t blank = s.find("\n\n", hits[h].body);
        if (blank != std::string::npos && blank < end) end = blank;
        std::string body = trim(std::string_view(s).substr(hits[h].body, end - hits[h].body));
        if (body.empty()) throw Error("empty response " + std::to_string(k));
        found[k - 1] = std::move(body);
    }
    std::vector<std::string> out;
    for (int k = 1; k <= n; ++k) {
        if (!found[k - 1]) {
            Error err("missing response " + std::to_string(k) + "; raw text: " + s);
            throw err;
        }
        out.push_back(*found[k - 1]);
    }
    return out;
}

Decomposition parse_decomposition(std::string_view text, const std::string& pair_id) {
    const std::string_view labels[] = {prompts::kSuggestionsALabel, prompts::kSuggestionsBLabel,
                                       prompts::kSimilaritiesLabel};
    std::string sections[3];
    int current = -1;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        bool labelled = false;
        for (int i = 0; i < 3; ++i) {
            if (starts_with_ci(t, labels[i])) {
                current = i;
                sections[i] = trim(std::string_view(t).substr(labels[i].size()));
                labelled = true;
                break;
            }
        }
        if (!labelled && current >= 0 && !t.empty()) {
            if (!sections[current].empty()) sections[current] += " ";
            sections[current] += t;
        }
    }
    for (int i = 0; i < 3; ++i)
        if (sections[i].empty())
            throw Error("decomposition for " + pair_id + " lacks section '" +
                        std::string(labels[i]) + "'; raw text: " + std::string(text));
    return {pair_id, sections[0], sections[1], sections[2]};
}

std::vector<EmpathyScorePair> parse_self_scores(std::string_view text, int n) {
    static const std::regex line_re(
        R"(score\s+(\d+)\s*:\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*,\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?))",
        std::regex::icase);
    std::vector<std::optional<EmpathyScorePair>> found(static_cast<size_t>(n));
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), line_re); it != std::sregex_iterator();
         ++it) {
        const int k = std::stoi((*it)[1].str());
        if (k < 1 || k > n || found[k - 1]) continue;
        EmpathyScorePair p{std::stod((*it)[2].str()), std::stod((*it)[3].str())};
        for (double* v : {&p.score_a, &p.score_b}) {
            if (*v < -1.0 || *v > 1.0) {
                warn("self-evaluation score " + std::to_string(*v) + " for compromise " +
                     std::to_string(k) + " clamped to [-1, 1]");
                *v = std::clamp(*v, -1.0, 1.0);
            }
        }
        found[k - 1] = p;
    }
    std::vector<EmpathyScorePair> out;
    for (int k = 1; k <= n; ++k) {
        if (!found[k - 1]) throw Error("missing self-evaluation score " + std::to_string(k));
        out.push_back(*found[k - 1]);
    }
    return out;
}

Decomposition DecompositionCache::get_or_compute(const ViewPair& pair, LlmBackend& backend,
                                                 const SamplingConfig& sampling) {
    std::promise<Decomposition> promise;
    std::shared_future<Decomposition> fut;
    bool owner = false;
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(pair.pair_id);
        if (it != entries_.end()) {
            fut = it->second;
        } else {
            fut = promise.get_future().share();
            entries_.emplace(pair.pair_id, fut);
            owner = true;
        }
    }
    if (owner) {
        try {
            const auto reply = backend.complete(prompts::decomposition(pair), sampling);
            promise.set_value(parse_decomposition(reply, pair.pair_id));
        } catch (...) {
            {
                std::lock_guard lock(mutex_);
                entries_.erase(pair.pair_id);
            }
            promise.set_exception(std::current_exception());
        }
    }
    return fut.get();
}

std::size_t DecompositionCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::optional<Decomposition> DecompositionCache::find(const std::string& pair_id) const {
    std::shared_future<Decomposition> fut;
    {
        std::lock_guard lock(mutex_);
        auto it = entries_.find(pair_id);
        if (it == entries_.end()) return std::nullopt;
        fut = it->second;
    }
    return fut.get();
}

CompromiseEngine::CompromiseEngine(LlmBackend& backend, DecompositionCache& cache,
                                   SamplingConfig sampling, bool include_demographics)
    : backend_(backend), cache_(cache), sampling_(sampling),
      include_demographics_(include_demographics) {}

std::string CompromiseEngine::request(const std::string& prompt) {
    return backend_.complete(prompt, sampling_);
}

namespace {

std::vector<Compromise> tag(const std::vector<std::string>& texts, const ViewPair& pair,
                            Strategy s, int iteration) {
    std::vector<Compromise> out;
    for (const auto& t : texts) out.push_back({t, pair.pair_id, s, iteration, std::nullopt});
    return out;
}

void require_n(int n) {
    if (n < 1) throw Error("number of compromises must be >= 1");
}

double best_gap(const std::vector<Compromise>& cs) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cs) best = std::min(best, std::abs(c.scores->score_a - c.scores->score_b));
    return best;
}

}  // namespace

std::vector<Compromise> CompromiseEngine::generate_single_prompt(const ViewPair& pair, int n) {
    require_n(n);
    const auto reply = request(prompts::single_prompt(pair, n, include_demographics_));
    return tag(parse_llm_response(reply, n), pair, Strategy::single_prompt, 0);
}

Decomposition CompromiseEngine::decompose_views(const ViewPair& pair) {
    return cache_.get_or_compute(pair, backend_, sampling_);
}

std::vector<Compromise> CompromiseEngine::generate_cot(const ViewPair& pair, int n) {
    require_n(n);
    const auto d = decompose_views(pair);
    const auto reply = request(prompts::cot_generation(pair, d, n, include_demographics_));
    return tag(parse_llm_response(reply, n), pair, Strategy::cot, 0);
}

std::vector<Compromise> CompromiseEngine::generate_cot_llm(const ViewPair& pair, int n) {
    require_n(n);
    const auto d = decompose_views(pair);
    const auto first =
        parse_llm_response(request(prompts::cot_generation(pair, d, n, include_demographics_)), n);
    const auto self_scores = parse_self_scores(
        request(prompts::self_evaluation(pair, d, first, include_demographics_)), n);
    const auto improved = parse_llm_response(
        request(prompts::self_improvement(pair, d, first, self_scores, n, include_demographics_)), n);
    return tag(improved, pair, Strategy::cot_llm, 1);
}

std::vector<Compromise> CompromiseEngine::generate_cot_feedback(const ViewPair& pair, int n,
                                                                const CompromiseScorer& scorer,
                                                                const FeedbackConfig& fb) {
    require_n(n);
    if (fb.max_iters < 1) throw Error("max_iters must be >= 1");
    if (!(fb.stop_epsilon >= 0.0)) throw Error("stop_epsilon must be >= 0");
    const auto d = decompose_views(pair);

    auto current = generate_cot(pair, n);
    for (auto& c : current) {
        c.strategy = Strategy::cot_feedback;
        c.scores = scorer.score(c.text, pair);
    }
    std::vector<Compromise> all = current;
    double best = best_gap(current);

    for (int iter = 1; iter < fb.max_iters; ++iter) {
        std::vector<std::string> texts;
        std::vector<EmpathyScorePair> scores;
        for (const auto& c : current) {
            texts.push_back(c.text);
            scores.push_back(*c.scores);
        }
        const auto reply = request(
            prompts::feedback_refinement(pair, d, texts, scores, n, include_demographics_));
        current = tag(parse_llm_response(reply, n), pair, Strategy::cot_feedback, iter);
        for (auto& c : current) c.scores = scorer.score(c.text, pair);
        all.insert(all.end(), current.begin(), current.end());
        const double now = std::min(best, best_gap(current));
        const double improvement = best - now;
        best = now;
        if (improvement < fb.stop_epsilon) break;
    }
    return all;
}

std::vector<Compromise> CompromiseEngine::generate(Strategy s, const ViewPair& pair, int n,
                                                   const CompromiseScorer* scorer,
                                                   const FeedbackConfig& fb) {
    switch (s) {
        case Strategy::single_prompt: return generate_single_prompt(pair, n);
        case Strategy::cot: return generate_cot(pair, n);
        case Strategy::cot_llm: return generate_cot_llm(pair, n);
        case Strategy::cot_feedback:
            if (!scorer) throw Error("cot_feedback requires a similarity scorer");
            return generate_cot_feedback(pair, n, *scorer, fb);
    }
    throw Error("unknown strategy");
}

std::vector<PoolEntry> generate_pool(CompromiseEngine& engine, const std::vector<ViewPair>& pairs,
                                     const GenerationPlan& plan, const CompromiseScorer* scorer) {
    std::vector<std::vector<PoolEntry>> per_pair(pairs.size());
    std::vector<std::exception_ptr> errors(pairs.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i; (i = next++) < pairs.size();) {
            try {
                for (Strategy s : plan.strategies)
                    for (auto& c : engine.generate(s, pairs[i], plan.n, scorer, plan.feedback))
                        per_pair[i].push_back(
                            {std::move(c), engine.backend().name(), engine.sampling().seed});
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const size_t workers =
        std::max<size_t>(1, std::min<size_t>(static_cast<size_t>(std::max(plan.max_in_flight, 1)),
                                             pairs.size()));
    {
        std::vector<std::jthread> threads;
        for (size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
        worker();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<PoolEntry> out;
    for (auto& v : per_pair) out.insert(out.end(), v.begin(), v.end());
    return out;
}

std::string pool_entry_to_line(const PoolEntry& e) {
    nlohmann::ordered_json j;
    j["pair_id"] = e.compromise.pair_id;
    j["strategy"] = to_string(e.compromise.strategy);
    j["iteration"] = e.compromise.iteration;
    j["text"] = e.compromise.text;
    if (e.compromise.scores) {
        j["score_a"] = e.compromise.scores->score_a;
        j["score_b"] = e.compromise.scores->score_b;
    } else {
        j["score_a"] = nullptr;
        j["score_b"] = nullptr;
    }
    j["backend"] = e.backend;
    j["seed"] = e.seed;
    return j.dump();
}

void write_pool(const std::filesystem::path& path, const std::vector<PoolEntry>& pool, bool append) {
    std::ofstream out(path, append ? std::ios::app | std::ios::binary : std::ios::binary);
    if (!out) throw Error("cannot write candidate pool " + path.string());
    for (const auto& e : pool) out << pool_entry_to_line(e) << '\n';
}

std::vector<PoolEntry> load_pool(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open candidate pool " + path.string());
    std::vector<PoolEntry> out;
    std::string raw;
    size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (trim(raw).empty()) continue;
        try {
            auto j = nlohmann::json::parse(raw);
            PoolEntry e;
            e.compromise.pair_id = j.at("pair_id");
            e.compromise.strategy = strategy_from_string(j.at("strategy"));
            e.compromise.iteration = j.at("iteration");
            e.compromise.text = j.at("text");
            if (!j.at("score_a").is_null())
                e.compromise.scores = EmpathyScorePair{j.at("score_a"), j.at("score_b")};
            e.backend = j.at("backend");
            e.seed = j.at("seed");
            out.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw Error(path.string() + ": line " + std::to_string(line) + ": " + ex.what());
        }
    }
    return out;
}

}  // namespace compromise
