#pragma once

#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compromise/corpus.hpp"
#include "compromise/empathy_scorer.hpp"
#include "compromise/llm_backend.hpp"

namespace compromise {

enum class Strategy { single_prompt, cot, cot_llm, cot_feedback };

inline constexpr Strategy kAllStrategies[] = {Strategy::single_prompt, Strategy::cot,
                                              Strategy::cot_llm, Strategy::cot_feedback};

std::string to_string(Strategy s);
/// Accepts canonical names (cot_llm) and CLI short forms (sp, cot-llm, cot-fb).
Strategy strategy_from_string(const std::string& s);

/// Output of decomposition steps 1-3; computed once per pair and reused.
struct Decomposition {
    std::string pair_id;
    std::string suggestions_a;
    std::string suggestions_b;
    std::string similarities;
};

struct Compromise {
    std::string text;
    std::string pair_id;
    Strategy strategy = Strategy::single_prompt;
    int iteration = 0;
    std::optional<EmpathyScorePair> scores;
};

/// Scores a compromise against both views of its pair.
class CompromiseScorer {
public:
    virtual ~CompromiseScorer() = default;
    virtual EmpathyScorePair score(std::string_view compromise, const ViewPair& pair) const = 0;
};

/// score_compromise over any text encoder.
class EncoderScorer : public CompromiseScorer {
public:
    explicit EncoderScorer(const TextEncoder& encoder) : encoder_(encoder) {}
    EmpathyScorePair score(std::string_view compromise, const ViewPair& pair) const override {
        return score_compromise(encoder_, compromise, pair);
    }

private:
    const TextEncoder& encoder_;
};

/// Test double: score_x = |tokens(c) ∩ tokens(view_x)| / max(|view_a|, |view_b|)
/// over distinct word tokens of the rendered views.
class TokenOverlapScorer : public CompromiseScorer {
public:
    EmpathyScorePair score(std::string_view compromise, const ViewPair& pair) const override;
};

/// Extracts the texts after "Response 1:" .. "Response n:". Markers may be out
/// of order and surrounded by prose; a response ends at the next marker or a
/// blank line.
std::vector<std::string> parse_llm_response(std::string_view text, int n);

/// Parses the three labelled decomposition sections.
Decomposition parse_decomposition(std::string_view text, const std::string& pair_id);

/// Parses "Score k: a, b" self-evaluation lines, clamping to [-1, 1] with a warning.
std::vector<EmpathyScorePair> parse_self_scores(std::string_view text, int n);

/// Get-or-compute keyed by pair_id. Concurrent callers for the same pair
/// wait on one backend request.
class DecompositionCache {
public:
    Decomposition get_or_compute(const ViewPair& pair, LlmBackend& backend,
                                 const SamplingConfig& sampling);
    std::size_t size() const;
    std::optional<Decomposition> find(const std::string& pair_id) const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_future<Decomposition>> entries_;
};

struct FeedbackConfig {
    int max_iters = 3;           // iterations including iteration 0
    double stop_epsilon = 0.01;  // minimum improvement of the best gap per round
};

/// The four prompting strategies over one backend and a shared decomposition cache.
class CompromiseEngine {
public:
    CompromiseEngine(LlmBackend& backend, DecompositionCache& cache, SamplingConfig sampling = {},
                     bool include_demographics = false);

    std::vector<Compromise> generate_single_prompt(const ViewPair& pair, int n);
    Decomposition decompose_views(const ViewPair& pair);
    std::vector<Compromise> generate_cot(const ViewPair& pair, int n);
    std::vector<Compromise> generate_cot_llm(const ViewPair& pair, int n);
    std::vector<Compromise> generate_cot_feedback(const ViewPair& pair, int n,
                                                  const CompromiseScorer& scorer,
                                                  const FeedbackConfig& fb = {});

    std::vector<Compromise> generate(Strategy s, const ViewPair& pair, int n,
                                     const CompromiseScorer* scorer, const FeedbackConfig& fb);

    LlmBackend& backend() { return backend_; }
    const SamplingConfig& sampling() const { return sampling_; }

private:
    std::string request(const std::string& prompt);

    LlmBackend& backend_;
    DecompositionCache& cache_;
    SamplingConfig sampling_;
    bool include_demographics_;
};

struct PoolEntry {
    Compromise compromise;
    std::string backend;
    std::uint64_t seed = 0;
};

struct GenerationPlan {
    std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
    int n = 4;
    FeedbackConfig feedback;
    int max_in_flight = 4;  // pairs processed concurrently
};

/// Runs every strategy on every pair. Pairs run concurrently; output order is
/// (pair order, strategy order, generation order) regardless of scheduling.
std::vector<PoolEntry> generate_pool(CompromiseEngine& engine, const std::vector<ViewPair>& pairs,
                                     const GenerationPlan& plan, const CompromiseScorer* scorer);

std::string pool_entry_to_line(const PoolEntry& e);
void write_pool(const std::filesystem::path& path, const std::vector<PoolEntry>& pool,
                bool append = false);
std::vector<PoolEntry> load_pool(const std::filesystem::path& path);

}  // namespace compromise
