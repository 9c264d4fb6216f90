// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "compromise/alignment.hpp"
#include "compromise/compromise_engine.hpp"
#include "compromise/corpus.hpp"
#include "compromise/eval_reporting.hpp"
#include "compromise/inference_stats.hpp"
#include "compromise/mock_backend.hpp"
#include "compromise/neutrality_selector.hpp"
#include "compromise/pipeline.hpp"

using namespace compromise;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = TEST_DATA_DIR;

struct Outcome {
    bool ok = true;
    std::string detail;
    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

int failures = 0;

void criterion(const std::string& name, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.ok = false;
        o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && secs > budget_s) {
        o.ok = false;
        char buf[96];
        std::snprintf(buf, sizeof buf, "runtime %.2fs over budget %.0fs", secs, budget_s);
        o.detail = buf;
    }
    if (!o.ok) ++failures;
    std::printf("%s  %-28s %7.3fs%s%s\n", o.ok ? "PASS" : "FAIL", name.c_str(), secs, o.detail.empty() ? "" : "  ",
                o.detail.c_str());
    std::fflush(stdout);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string join(const std::vector<std::string>& w) {
    std::string s;
    for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
    return s;
}

size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<size_t>> t(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
    for (size_t i = a.size(); i-- > 0;)
        for (size_t j = b.size(); j-- > 0;)
            t[i][j] = a[i] == b[j] ? 1 + t[i + 1][j + 1] : std::max(t[i + 1][j], t[i][j + 1]);
    return t[0][0];
}

double exact_permutation_p(const std::vector<RankPair>& items) {
    const size_t n = items.size();
    double obs = 0;
    for (const auto& [m, b] : items) obs += b - m;
    size_t extreme = 0;
    for (size_t mask = 0; mask < (size_t{1} << n); ++mask) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) s += (mask >> i & 1 ? -1 : 1) * (items[i].second - items[i].first);
        if (std::abs(s) >= std::abs(obs) - 1e-9) ++extreme;
    }
    return static_cast<double>(extreme) / static_cast<double>(size_t{1} << n);
}

std::vector<std::vector<double>> snapshot(const TrainableLM& m) {
    std::vector<std::vector<double>> out;
    for (size_t g = 0; g < m.num_groups(); ++g) {
        const auto p = m.group_params(g);
        out.emplace_back(p.begin(), p.end());
    }
    return out;
}

std::vector<TrainingExample> synthetic_examples(size_t count) {
    const std::vector<std::string> places = {"park", "square", "street", "library", "station"};
    const std::vector<std::string> moods = {"unsafe at night", "too crowded", "lively", "quiet", "dirty"};
    const std::vector<std::string> fixes = {"add lamps", "plant trees", "add benches", "slow traffic", "clean daily"};
    std::vector<TrainingExample> out;
    for (size_t i = 0; i < count; ++i) {
        const auto& place = places[i % places.size()];
        const auto& mood = moods[(i / places.size()) % moods.size()];
        const auto& fix = fixes[(i * 3 + i / 7) % fixes.size()];
        out.push_back({"the " + place + " feels " + mood, fix + " in the " + place});
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
}

}  // namespace

int main() {
    criterion("nce_loss", 1, [](Outcome& o) {
        o.require(std::abs(nce_loss(0, 0) - 2 * std::log(2.0)) <= 1e-9, "nce(0,0)");
        o.require(std::abs(nce_loss(-1, -2) - 1.440190) <= 1e-6, "nce(-1,-2)");
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> u(-5, 5);
        for (int i = 0; i < 20; ++i) {
            const double t = u(rng), h = u(rng), e = 1e-6;
            const auto g = nce_gradient(t, h);
            const double ft = (nce_loss(t + e, h) - nce_loss(t - e, h)) / (2 * e);
            const double fh = (nce_loss(t, h + e) - nce_loss(t, h - e)) / (2 * e);
            o.require(std::abs(g.d_target - ft) <= 1e-6 * std::max(1.0, std::abs(ft)), "d/ds_target");
            o.require(std::abs(g.d_hypo - fh) <= 1e-6 * std::max(1.0, std::abs(fh)), "d/ds_hypo");
            o.require(std::abs(g.d_target - (sigmoid(t) - 1)) <= 1e-12, "closed form target");
            o.require(std::abs(g.d_hypo - sigmoid(h)) <= 1e-12, "closed form hypo");
        }
    });

    criterion("task_loss", 1, [](Outcome& o) {
        o.require(task_loss(-2, -4, 0.5, 0.5, 10) == 0.0, "satisfied hinge");
        o.require(std::abs(task_loss(-4, -2, 1.0, 0.8, 10) - 4.0) <= 1e-12, "4.0 case");
        o.require(task_loss(-2, -10, 1.0, 0.5, 10) == 0.0, "-8 + 5 case");
        const auto c = validate_config(fs::path(kData).parent_path() / "configs" / "mock_study.json");
        o.require(c.alignment.margin == 10.0, "config margin");
        o.require(AlignConfig{}.w_margin == 10.0, "default margin");
        o.require(c.align_config().w_margin == 10.0, "margin forwarded");
    });

    criterion("rouge", 5, [](Outcome& o) {
        const auto r1 = rouge_n("install more lights", "install bright lights", 1);
        o.require(std::abs(r1.f1 - 2.0 / 3) <= 1e-12 && std::abs(r1.precision - 2.0 / 3) <= 1e-12 &&
                      std::abs(r1.recall - 2.0 / 3) <= 1e-12,
                  "unigram 2/3");
        const auto rl = rouge_l("a b c d", "a c b d");
        o.require(std::abs(rl.f1 - 0.75) <= 1e-12 && std::abs(rl.precision - 0.75) <= 1e-12, "lcs 0.75");
        std::mt19937_64 rng(99);
        std::uniform_int_distribution<int> len(1, 10), word(0, 6);
        for (int t = 0; t < 1000; ++t) {
            std::vector<std::string> a(static_cast<size_t>(len(rng))), b(static_cast<size_t>(len(rng)));
            for (auto& w : a) w = "t" + std::to_string(word(rng));
            for (auto& w : b) w = "t" + std::to_string(word(rng));
            const auto sa = join(a), sb = join(b);
            for (const auto& r : {rouge_n(sa, sb, 1), rouge_l(sa, sb)})
                o.require(r.f1 >= 0 && r.f1 <= 1 && r.precision >= 0 && r.precision <= 1 && r.recall >= 0 &&
                              r.recall <= 1,
                          "bounds");
            o.require(rouge_n(sa, sa, 1).f1 == 1.0 && rouge_l(sa, sa).f1 == 1.0, "identity");
            const double l = static_cast<double>(lcs_oracle(a, b));
            o.require(std::abs(rouge_l(sa, sb).recall - l / b.size()) <= 1e-12, "lcs oracle");
        }
    });

    criterion("wilcoxon_permutation", 30, [](Outcome& o) {
        o.require(wilcoxon_signed_rank(std::vector<double>{1, 2, 3}).p_value.value() == 0.25, "[1,2,3] -> 0.25");
        std::mt19937_64 rng(7);
        std::uniform_int_distribution<int> rank(1, 5), size(1, 12);
        const std::uint64_t iters = 10000;
        for (int inst = 0; inst < 50; ++inst) {
            std::vector<RankPair> items(static_cast<size_t>(size(rng)));
            for (auto& [m, b] : items) m = rank(rng), b = rank(rng);
            const double exact = exact_permutation_p(items);
            const double mc = permutation_test(items, iters, static_cast<std::uint64_t>(inst)).p_value.value();
            const double se = std::sqrt(std::max(exact * (1 - exact), 1.0 / iters) / iters);
            o.require(std::abs(mc - exact) <= 3 * se + 1.0 / (iters + 1), "instance " + std::to_string(inst));
        }
    });

    criterion("bootstrap", 10, [](Outcome& o) {
        const auto ones = bootstrap_ci(std::vector<double>(50, 1.0), 10000, 0.95, 1);
        o.require(ones.ci_low == 1.0 && ones.ci_high == 1.0, "all ones");
        std::vector<double> x(100, 0.0);
        for (int i = 0; i < 5; ++i) x[static_cast<size_t>(i * 20)] = 1.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto r = bootstrap_ci(x, 10000, 0.95, seed);
            o.require(std::abs(r.ci_low - 0.028) <= 0.03 && std::abs(r.ci_high - 0.082) <= 0.03,
                      "seed " + std::to_string(seed));
        }
    });

    criterion("selection_oracle", 5, [](Outcome& o) {
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<int> grid(-4, 4);
        int ties = 0;
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<Compromise> cs;
            for (int i = 0; i < 16; ++i)
                cs.push_back({"c" + std::to_string(i), "p", kAllStrategies[i % 4], 0,
                              EmpathyScorePair{grid(rng) / 4.0, grid(rng) / 4.0}});
            std::vector<size_t> idx(cs.size());
            for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
            std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
                const auto &x = *cs[a].scores, &y = *cs[b].scores;
                const auto kx = std::make_tuple(std::abs(x.score_a - x.score_b), -(x.score_a + x.score_b), a);
                const auto ky = std::make_tuple(std::abs(y.score_a - y.score_b), -(y.score_a + y.score_b), b);
                return kx < ky;
            });
            const auto gap = [&](size_t i) { return neutrality_gap(*cs[i].scores); };
            if (gap(idx[3]) == gap(idx[4])) ++ties;
            const auto sel = select_candidates({{"p", cs}}, 4).at("p");
            for (size_t i = 0; i < 4; ++i) o.require(sel[i].text == cs[idx[i]].text, "trial " + std::to_string(trial));
        }
        o.require(ties > 0, "no boundary ties exercised");
    });

    criterion("toy_alignment", 120, [](Outcome& o) {
        const auto data = synthetic_examples(50);
        std::vector<std::string> texts;
        for (const auto& e : data) texts.push_back(e.prompt), texts.push_back(e.target);
        std::vector<double> d_target, d_hypo;
        for (std::uint64_t seed : {1, 2, 3}) {
            TinyLM model(Vocabulary::from_texts(texts), {16, 4, 0.3, seed});
            const auto examples = make_alignment_examples(model, data);
            o.require(examples.size() == 50, "50 examples");
            const auto before = snapshot(model);
            AlignConfig cfg;
            cfg.seed = seed;
            cfg.max_steps = 100;
            cfg.epochs = 2;
            const auto rep = align(model, examples, cfg);
            o.require(rep.steps == 100, "100 steps");
            d_target.push_back(rep.final_mean_target - rep.initial_mean_target);
            d_hypo.push_back(rep.final_mean_hypo - rep.initial_mean_hypo);
            const auto after = snapshot(model);
            for (size_t g = 0; g + 3 < after.size(); ++g) o.require(after[g] == before[g], "frozen group changed");
            o.require(after.back() != before.back(), "head unchanged");
        }
        o.require(median3(d_target) > 0, "mean s_target did not increase");
        o.require(median3(d_hypo) < 0, "mean s_hypo did not decrease");
    });

    criterion("toy_sft", 60, [](Outcome& o) {
        const auto data = synthetic_examples(5);
        std::vector<std::string> texts;
        for (const auto& e : data) texts.push_back(e.prompt), texts.push_back(e.target);
        TinyLM model(Vocabulary::from_texts(texts), {16, 4, 0.3, 11});
        const std::vector<TrainingExample> repeated(50, data[0]);
        const double before = sequence_log_prob(model, data[0].prompt, data[0].target);
        sft(model, repeated, SftConfig{});
        o.require(sequence_log_prob(model, data[0].prompt, data[0].target) > before, "log-prob did not increase");

        TinyLM frozen(Vocabulary::from_texts(texts), {16, 4, 0.3, 11});
        const auto snap = snapshot(frozen);
        SftConfig zero;
        zero.base_lr = 0;
        sft(frozen, repeated, zero);
        o.require(snapshot(frozen) == snap, "lr 0 changed parameters");
    });

    criterion("neutrality_ordering", 30, [](Outcome& o) {
        const auto pairs = load_view_pairs(kData / "fixtures" / "view_pairs_example.jsonl");
        TokenOverlapScorer scorer;
        for (const auto& p : pairs) {
            MockBackend b1(3), b2(3);
            DecompositionCache c1, c2;
            CompromiseEngine e1(b1, c1), e2(b2, c2);
            double cot = 3, fb = 3;
            for (const auto& c : e1.generate_cot(p, 4)) cot = std::min(cot, neutrality_gap(scorer.score(c.text, p)));
            for (const auto& c : e2.generate_cot_feedback(p, 4, scorer, FeedbackConfig{}))
                fb = std::min(fb, neutrality_gap(*c.scores));
            o.require(fb <= cot, p.pair_id);
        }
    });

    criterion("forgetting_metric", 1, [](Outcome& o) {
        const Vocabulary v(std::vector<std::string>{"the", "park", "is", "open"});
        UniformLM m(v);
        const double got = forgetting_loglik(m, {"the park is open", "open", "the park"});
        o.require(got == -std::log(static_cast<double>(v.size())), "ln(1/V)");
    });

    criterion("mock_pipeline", 120, [](Outcome& o) {
        const auto config = fs::path(kData).parent_path() / "configs" / "mock_study.json";
        std::vector<fs::path> dirs;
        for (const char* name : {"compromise_acceptance_a", "compromise_acceptance_b"}) {
            const auto dir = fs::temp_directory_path() / name;
            fs::remove_all(dir);
            std::ifstream in(config);
            auto j = json::parse(in);
            j["run_dir"] = dir.string();
            run_stages(parse_config(j, config.parent_path()), {std::begin(kStudyChain), std::end(kStudyChain)});
            dirs.push_back(dir);
        }
        for (const auto& e : fs::directory_iterator(dirs[0]))
            if (e.is_regular_file())
                o.require(slurp(e.path()) == slurp(dirs[1] / e.path().filename()),
                          "differs: " + e.path().filename().string());
        const auto stats = json::parse(slurp(dirs[0] / "stats.json"));
        bool seen = false;
        for (const auto& row : stats["comparisons"])
            if (row["method"] == "cot_fb_1") {
                seen = true;
                o.require(row["first_pref_pct"].get<double>() == 100.0, "first preference below 100%");
                o.require(row["permutation_p"].get<double>() < 0.01, "permutation p >= 0.01");
            }
        o.require(seen, "no cot_fb_1 row");
        for (const auto& d : dirs) fs::remove_all(d);
    });

    std::printf("%d failure(s)\n", failures);
    return failures == 0 ? 0 : 1;
}
