#include "compromise/eval_reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "compromise/diagnostics.hpp"
#include "compromise/inference_stats.hpp"
#include "compromise/neutrality_selector.hpp"
#include "compromise/random.hpp"
#include "compromise/text.hpp"

namespace compromise {

using nlohmann::json;

std::string to_string(RougeVariant v) {
    switch (v) {
        case RougeVariant::rouge1: return "rouge1";
        case RougeVariant::rouge2: return "rouge2";
        case RougeVariant::rougeL: return "rougeL";
    }
    return "?";
}

RougeVariant rouge_variant_from_string(std::string_view s) {
    if (s == "rouge1") return RougeVariant::rouge1;
    if (s == "rouge2") return RougeVariant::rouge2;
    if (s == "rougeL") return RougeVariant::rougeL;
    throw Error("unknown ROUGE variant '" + std::string(s) + "' (valid: rouge1, rouge2, rougeL)");
}

namespace {

RougeScore from_counts(double overlap, double cand, double ref) {
    RougeScore r;
    r.precision = cand > 0 ? overlap / cand : 0.0;
    r.recall = ref > 0 ? overlap / ref : 0.0;
    const double s = r.precision + r.recall;
    r.f1 = s > 0 ? 2.0 * r.precision * r.recall / s : 0.0;
    return r;
}

std::map<std::vector<std::string>, int> ngrams(const std::vector<std::string>& toks, int n) {
    std::map<std::vector<std::string>, int> out;
    for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i)
        ++out[std::vector<std::string>(toks.begin() + static_cast<long>(i),
                                       toks.begin() + static_cast<long>(i) + n)];
    return out;
}

}  // namespace

RougeScore rouge_n(std::string_view candidate, std::string_view reference, int n) {
    if (n < 1) throw Error("rouge_n: n must be >= 1");
    const auto ref = ngrams(word_tokens(reference), n);
    if (ref.empty()) throw Error("rouge_n: reference has no " + std::to_string(n) + "-grams");
    const auto cand = ngrams(word_tokens(candidate), n);
    double overlap = 0, nc = 0, nr = 0;
    for (const auto& [g, c] : cand) {
        nc += c;
        auto it = ref.find(g);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    for (const auto& [g, c] : ref) nr += c;
    return from_counts(overlap, nc, nr);
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
    const auto c = word_tokens(candidate);
    const auto r = word_tokens(reference);
    if (r.empty()) throw Error("rouge_l: empty reference");
    if (c.empty()) throw Error("rouge_l: empty candidate");
    std::vector<int> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
    for (size_t i = 1; i <= c.size(); ++i) {
        for (size_t j = 1; j <= r.size(); ++j)
            cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return from_counts(prev[r.size()], static_cast<double>(c.size()), static_cast<double>(r.size()));
}

RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant v) {
    switch (v) {
        case RougeVariant::rouge1: return rouge_n(candidate, reference, 1);
        case RougeVariant::rouge2: return rouge_n(candidate, reference, 2);
        case RougeVariant::rougeL: return rouge_l(candidate, reference);
    }
    throw Error("bad ROUGE variant");
}

CorpusRouge corpus_rouge(const std::vector<std::string>& outputs,
                         const std::vector<std::string>& references, RougeVariant v) {
    if (outputs.size() != references.size())
        throw Error("corpus_rouge: " + std::to_string(outputs.size()) + " outputs but " +
                    std::to_string(references.size()) + " references");
    if (outputs.empty()) throw Error("corpus_rouge: no examples");
    CorpusRouge out;
    for (size_t i = 0; i < outputs.size(); ++i) {
        out.per_example.push_back(rouge(outputs[i], references[i], v));
        out.mean.precision += out.per_example.back().precision;
        out.mean.recall += out.per_example.back().recall;
        out.mean.f1 += out.per_example.back().f1;
    }
    const double n = static_cast<double>(outputs.size());
    out.mean.precision /= n;
    out.mean.recall /= n;
    out.mean.f1 /= n;
    return out;
}

BestOfK best_of_k(const Sampler& sampler, int k, const SamplingConfig& sampling,
                  const TextMetric& metric) {
    if (k < 1) throw Error("best_of_k: k must be >= 1");
    BestOfK out;
    for (int i = 0; i < k; ++i) {
        SamplingConfig s = sampling;
        s.seed = sampling.seed + static_cast<std::uint64_t>(i);
        out.samples.push_back(sampler(s));
    }
    if (k == 1) {
        out.text = out.samples[0];
        out.scores.push_back(metric(out.text));
        out.score = out.scores[0];
        return out;
    }
    size_t best = 0;
    for (size_t i = 0; i < out.samples.size(); ++i) {
        out.scores.push_back(metric(out.samples[i]));
        if (out.scores[i] > out.scores[best]) best = i;
    }
    out.text = out.samples[best];
    out.score = out.scores[best];
    return out;
}

BestOfK best_of_k(const TrainableLM& model, std::string_view prompt, int k,
                  const SamplingConfig& sampling, const TextMetric& metric) {
    const std::string p(prompt);
    return best_of_k([&](const SamplingConfig& s) { return model.generate(p, s); }, k, sampling,
                     metric);
}

GapSummary summarize_gaps(std::vector<double> gaps) {
    if (gaps.empty()) throw Error("no gaps to summarize");
    std::sort(gaps.begin(), gaps.end());
    GapSummary s;
    for (double g : gaps) s.mean += g;
    s.mean /= static_cast<double>(gaps.size());
    s.min = gaps.front();
    s.max = gaps.back();
    s.q1 = quantile_sorted(gaps, 0.25);
    s.median = quantile_sorted(gaps, 0.5);
    s.q3 = quantile_sorted(gaps, 0.75);
    return s;
}

NeutralityReport neutrality_report(const SystemOutputs& systems,
                                   const std::vector<ViewPair>& pairs, std::size_t sample,
                                   std::uint64_t seed, const CompromiseScorer& scorer) {
    if (systems.empty()) throw Error("neutrality_report: no systems");
    std::vector<size_t> covered;
    for (size_t i = 0; i < pairs.size(); ++i) {
        bool all = true;
        for (const auto& [name, outs] : systems) all = all && outs.count(pairs[i].pair_id);
        if (all) covered.push_back(i);
    }
    if (covered.empty()) throw Error("neutrality_report: no pair has an output from every system");
    Rng rng(seed);
    seeded_shuffle(covered, rng);
    if (covered.size() > sample) covered.resize(sample);
    std::sort(covered.begin(), covered.end());

    NeutralityReport r;
    r.seed = seed;
    for (size_t i : covered) r.sampled_pairs.push_back(pairs[i].pair_id);
    for (const auto& [name, outs] : systems) {
        SystemGaps g;
        for (size_t i : covered) {
            const auto s = scorer.score(outs.at(pairs[i].pair_id), pairs[i]);
            g.pair_ids.push_back(pairs[i].pair_id);
            g.gaps.push_back(neutrality_gap(s));
        }
        g.summary = summarize_gaps(g.gaps);
        r.systems[name] = std::move(g);
    }
    return r;
}

json to_json(const RougeScore& r) {
    return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1}};
}

json to_json(const NeutralityReport& r) {
    json j = {{"seed", r.seed}, {"sampled_pairs", r.sampled_pairs}, {"systems", json::object()}};
    for (const auto& [name, g] : r.systems) {
        json rows = json::array();
        for (size_t i = 0; i < g.gaps.size(); ++i)
            rows.push_back({{"pair_id", g.pair_ids[i]}, {"gap", g.gaps[i]}});
        j["systems"][name] = {{"gaps", rows},
                              {"summary",
                               {{"mean", g.summary.mean},
                                {"min", g.summary.min},
                                {"q1", g.summary.q1},
                                {"median", g.summary.median},
                                {"q3", g.summary.q3},
                                {"max", g.summary.max}}}};
    }
    return j;
}

std::string neutrality_boxplot_svg(const NeutralityReport& r) {
    const int width = 120 + 140 * static_cast<int>(r.systems.size());
    const int height = 360, top = 30, bottom = 300, left = 70;
    double ymax = 0.0;
    for (const auto& [name, g] : r.systems) ymax = std::max(ymax, g.summary.max);
    ymax = ymax <= 0 ? 1.0 : std::min(2.0, std::ceil(ymax * 10.0) / 10.0);
    auto y = [&](double v) { return bottom - (bottom - top) * v / ymax; };
    char buf[256];
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
        << bottom << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = ymax * t / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n", left - 6,
                      y(v) + 4, v);
        svg << buf;
    }
    svg << "<text x=\"16\" y=\"" << (top + bottom) / 2 << "\" transform=\"rotate(-90 16 "
        << (top + bottom) / 2 << ")\" text-anchor=\"middle\">|score_A - score_B|</text>\n";
    int i = 0;
    for (const auto& [name, g] : r.systems) {
        const double cx = left + 70 + 140 * i++;
        const auto& s = g.summary;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                      cx, y(s.min), cx, y(s.max));
        svg << buf;
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"60\" height=\"%.1f\" fill=\"#9ecae1\" "
                      "stroke=\"black\"/>\n",
                      cx - 30, y(s.q3), std::max(0.5, y(s.q1) - y(s.q3)));
        svg << buf;
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\" "
                      "stroke-width=\"2\"/>\n",
                      cx - 30, y(s.median), cx + 30, y(s.median));
        svg << buf;
        svg << "<text x=\"" << cx << "\" y=\"" << bottom + 20 << "\" text-anchor=\"middle\">"
            << name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

double forgetting_loglik(const TrainableLM& model, const std::vector<std::string>& corpus) {
    if (corpus.empty()) throw Error("forgetting_loglik: empty corpus");
    long double total = 0.0L;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto ids = model.vocab().encode(corpus[i]);
        if (ids.empty()) throw Error("forgetting_loglik: document " + std::to_string(i) + " has no tokens");
        const auto lp = model.token_log_probs({}, ids);
        long double s = 0.0L;
        for (double v : lp) s += v;
        total += static_cast<double>(s / static_cast<long double>(ids.size()));
    }
    return static_cast<double>(total / static_cast<long double>(corpus.size()));
}

}  // namespace compromise
