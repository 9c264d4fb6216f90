#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "compromise/compromise_engine.hpp"
#include "compromise/corpus.hpp"
#include "compromise/language_model.hpp"

namespace compromise {

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

enum class RougeVariant { rouge1, rouge2, rougeL };

std::string to_string(RougeVariant v);
RougeVariant rouge_variant_from_string(std::string_view s);

/// Clipped n-gram overlap over word_tokens(). An empty candidate scores 0.
RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n);

/// LCS-based ROUGE over word_tokens(). Both sides must be non-empty.
RougeScore rouge_l(std::string_view candidate, std::string_view reference);

RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant v);

struct CorpusRouge {
    RougeScore mean;
    std::vector<RougeScore> per_example;
};

CorpusRouge corpus_rouge(const std::vector<std::string>& outputs,
                         const std::vector<std::string>& references, RougeVariant v);

struct BestOfK {
    std::string text;
    double score = 0.0;
    std::vector<std::string> samples;
    std::vector<double> scores;
};

using Sampler = std::function<std::string(const SamplingConfig&)>;
using TextMetric = std::function<double(const std::string&)>;

/// Draws k samples with seeds derived from sampling.seed and keeps the
/// highest-scoring one (first on ties). k = 1 returns the sample as is.
BestOfK best_of_k(const Sampler& sampler, int k, const SamplingConfig& sampling,
                  const TextMetric& metric);
BestOfK best_of_k(const TrainableLM& model, std::string_view prompt, int k,
                  const SamplingConfig& sampling, const TextMetric& metric);

struct GapSummary {
    double mean = 0.0;
    double min = 0.0;
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double max = 0.0;
};

GapSummary summarize_gaps(std::vector<double> gaps);

struct SystemGaps {
    std::vector<std::string> pair_ids;
    std::vector<double> gaps;
    GapSummary summary;
};

struct NeutralityReport {
    std::uint64_t seed = 0;
    std::vector<std::string> sampled_pairs;
    std::map<std::string, SystemGaps> systems;
};

/// system name -> pair_id -> output text
using SystemOutputs = std::map<std::string, std::map<std::string, std::string>>;

/// Samples up to `sample` pairs covered by every system (seeded, without
/// replacement, reported in corpus order) and scores each system's output.
NeutralityReport neutrality_report(const SystemOutputs& systems,
                                   const std::vector<ViewPair>& pairs, std::size_t sample,
                                   std::uint64_t seed, const CompromiseScorer& scorer);

nlohmann::json to_json(const NeutralityReport& r);
nlohmann::json to_json(const RougeScore& r);

/// Box-and-whisker chart of each system's gap distribution.
std::string neutrality_boxplot_svg(const NeutralityReport& r);

/// Mean over documents of the per-token log-likelihood.
double forgetting_loglik(const TrainableLM& model, const std::vector<std::string>& corpus);

}  // namespace compromise
