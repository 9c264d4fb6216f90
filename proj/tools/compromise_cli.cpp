#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "compromise/alignment.hpp"
#include "compromise/eval_reporting.hpp"
#include "compromise/inference_stats.hpp"
#include "compromise/language_model.hpp"
#include "compromise/pipeline.hpp"
#include "compromise/preference_stats.hpp"
#include "compromise/study_protocol.hpp"
#include "compromise/study_server.hpp"
#include "compromise/text.hpp"

using namespace compromise;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read " + p.string());
    return json::parse(in);
}

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw Error("cannot read " + p.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) out.push_back(line);
    return out;
}

void emit(const json& j, const std::string& out) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out);
    f << j.dump(2) << '\n';
    if (!f) throw Error("failed writing " + out);
}

std::string absolute(const std::string& p) { return fs::absolute(p).string(); }

// Config file plus command-line overrides, applied to the JSON before validation.
struct ConfigArgs {
    std::string path;
    std::string run_dir;
    json overrides = json::object();

    RunConfig load() const {
        json j = read_json(path);
        j.merge_patch(overrides);
        if (!run_dir.empty()) j["run_dir"] = absolute(run_dir);
        return parse_config(j, fs::path(path).parent_path());
    }
};

template <typename T>
void set_if(json& j, const std::string& section, const std::string& key, const std::optional<T>& v) {
    if (v) j[section][key] = *v;
}

void print_stage(const StageResult& r) {
    std::cout << to_string(r.stage) << ": wrote";
    for (const auto& o : r.outputs) std::cout << ' ' << o.string();
    std::cout << " (manifest " << r.manifest.string() << ")\n";
}

volatile std::sig_atomic_t g_stop = 0;
StudyServer* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Compromise generation, empathy scoring, preference studies and alignment"};
    app.require_subcommand(1);

    ConfigArgs cfg;
    auto add_config = [&](CLI::App* sub) {
        sub->add_option("--config", cfg.path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--run-dir", cfg.run_dir, "Override the config's run_dir");
    };

    // generate
    auto* gen = app.add_subcommand("generate", "Generate candidate compromises");
    add_config(gen);
    std::vector<std::string> strategies;
    std::optional<std::string> pairs_path;
    std::optional<int> n, max_iters;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    gen->add_option("--strategy", strategies, "sp|cot|cot-llm|cot-fb (repeatable)");
    gen->add_option("--pairs", pairs_path, "View-pair file");
    gen->add_option("--n", n, "Compromises per request");
    gen->add_option("--max-iters", max_iters, "CoT+Feedback iterations");
    gen->add_option("--seed", seed, "Generation seed");
    gen->add_option("--backend", backend, "mock|remote");

    auto* score = app.add_subcommand("score", "Score the candidate pool");
    add_config(score);
    std::optional<std::string> scorer_kind;
    score->add_option("--scorer", scorer_kind, "overlap|hash|trained");

    auto* sel = app.add_subcommand("select", "Select the top-k neutral candidates per pair");
    add_config(sel);
    std::optional<int> k;
    sel->add_option("--k", k, "Candidates per pair");

    // study
    auto* study = app.add_subcommand("study", "Human preference study");
    study->require_subcommand(1);
    auto* splan = study->add_subcommand("plan", "Build the rater assignment");
    add_config(splan);
    std::optional<int> raters, items;
    splan->add_option("--raters", raters);
    splan->add_option("--items-per-rater", items);
    splan->add_option("--seed", seed);
    auto* ssim = study->add_subcommand("simulate", "Write synthetic ratings for the plan");
    add_config(ssim);
    std::optional<std::string> profile;
    ssim->add_option("--profile", profile, "uniform|fb_wins");
    ssim->add_option("--seed", seed);
    auto* sreport = study->add_subcommand("report", "Preference table from the rating log");
    add_config(sreport);
    auto* sserve = study->add_subcommand("serve", "Serve the rater API");
    std::string plan_path, ratings_path, host = "127.0.0.1", instructions_path, demo_path;
    int port = 8080;
    sserve->add_option("--plan", plan_path, "study_plan.json")->required()->check(CLI::ExistingFile);
    sserve->add_option("--ratings", ratings_path, "Rating log (appended)")->required();
    sserve->add_option("--demographics", demo_path, "Demographics log");
    sserve->add_option("--instructions", instructions_path, "Instruction texts");
    sserve->add_option("--host", host);
    sserve->add_option("--port", port);

    // stats
    auto* stats = app.add_subcommand("stats", "Significance tests against a baseline");
    std::string stats_config, stats_plan, stats_ratings, method, baseline = "single_prompt",
                test = "permutation", aggregate = "mean_rating", out;
    std::uint64_t iterations = 10000, stats_seed = 0;
    stats->add_option("--config", stats_config, "Run the pipeline stage instead");
    stats->add_option("--plan", stats_plan);
    stats->add_option("--ratings", stats_ratings);
    stats->add_option("--method", method);
    stats->add_option("--baseline", baseline);
    stats->add_option("--test", test)->check(CLI::IsMember({"bootstrap", "wilcoxon", "permutation"}));
    stats->add_option("--aggregate", aggregate)->check(CLI::IsMember({"mean_rating", "first_pref_count"}));
    stats->add_option("--iterations", iterations);
    stats->add_option("--seed", stats_seed);
    stats->add_option("--out", out);

    auto* ts = app.add_subcommand("train-scorer", "Train the empathic similarity model");
    add_config(ts);
    std::optional<std::string> split;
    std::optional<double> rating_max;
    ts->add_option("--pairs", pairs_path, "Rated story-pair file");
    ts->add_option("--split", split, "train,dev,test ratios");
    ts->add_option("--rating-max", rating_max, "Top of the raw rating scale");
    ts->add_option("--seed", seed);

    auto* sftc = app.add_subcommand("sft", "Supervised fine-tuning of the toy model");
    add_config(sftc);
    std::optional<int> epochs;
    std::optional<double> lr, margin;
    sftc->add_option("--epochs", epochs);
    sftc->add_option("--lr", lr);
    sftc->add_option("--seed", seed);

    auto* al = app.add_subcommand("align", "NCE or task-loss alignment");
    add_config(al);
    std::optional<std::string> loss;
    std::optional<int> trainable;
    al->add_option("--loss", loss, "nce|task");
    al->add_option("--epochs", epochs);
    al->add_option("--lr", lr);
    al->add_option("--margin", margin);
    al->add_option("--trainable-layers", trainable);
    al->add_option("--seed", seed);

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluation reports");
    ev->require_subcommand(1);
    auto* ev_run = ev->add_subcommand("run", "Pipeline evaluation stage");
    add_config(ev_run);
    auto* ev_rouge = ev->add_subcommand("rouge", "ROUGE of system outputs against references");
    std::string system_file, refs_file, variant = "all";
    ev_rouge->add_option("--system", system_file, "One output per line")->required()->check(CLI::ExistingFile);
    ev_rouge->add_option("--refs", refs_file, "One reference per line")->required()->check(CLI::ExistingFile);
    ev_rouge->add_option("--variant", variant)->check(CLI::IsMember({"all", "rouge1", "rouge2", "rougeL"}));
    ev_rouge->add_option("--out", out);
    auto* ev_neu = ev->add_subcommand("neutrality", "Neutrality-gap distributions");
    std::vector<std::string> systems;
    std::string svg, scorer_dir, neu_pairs;
    std::size_t sample = 100;
    std::uint64_t eval_seed = 0;
    ev_neu->add_option("--systems", systems, "name=file.jsonl with pair_id and text")->required();
    ev_neu->add_option("--pairs", neu_pairs, "View-pair file")->required()->check(CLI::ExistingFile);
    ev_neu->add_option("--sample", sample);
    ev_neu->add_option("--seed", eval_seed);
    ev_neu->add_option("--scorer-dir", scorer_dir, "Trained scorer (default: token overlap)");
    ev_neu->add_option("--out", out);
    ev_neu->add_option("--svg", svg, "Box plot output");
    auto* ev_fg = ev->add_subcommand("forgetting", "Per-token log-likelihood on a corpus");
    std::string model_dir, corpus_file;
    ev_fg->add_option("--model", model_dir, "Model checkpoint")->required()->check(CLI::ExistingDirectory);
    ev_fg->add_option("--corpus", corpus_file, "One document per line")->required()->check(CLI::ExistingFile);

    auto* run = app.add_subcommand("run", "Run several stages in order");
    add_config(run);
    std::vector<std::string> stage_names;
    run->add_option("--stages", stage_names, "Default: generate through stats");

    auto* vc = app.add_subcommand("validate-config", "Check a config and print it with defaults");
    std::string vc_path;
    vc->add_option("path", vc_path)->required();

    CLI11_PARSE(app, argc, argv);

    auto& ov = cfg.overrides;
    try {
        auto run_one = [&](Stage s) { print_stage(run_stage(cfg.load(), s)); };

        if (*gen) {
            if (!strategies.empty()) ov["generation"]["strategies"] = strategies;
            if (pairs_path) ov["data"]["view_pairs"] = absolute(*pairs_path);
            set_if(ov, "generation", "n", n);
            set_if(ov, "generation", "max_iters", max_iters);
            set_if(ov, "seeds", "generation", seed);
            set_if(ov, "backend", "kind", backend);
            run_one(Stage::generate);
        } else if (*score) {
            set_if(ov, "generation", "scorer", scorer_kind);
            run_one(Stage::score);
        } else if (*sel) {
            set_if(ov, "selection", "k", k);
            run_one(Stage::select);
        } else if (*splan) {
            set_if(ov, "study", "raters", raters);
            set_if(ov, "study", "items_per_rater", items);
            set_if(ov, "seeds", "study", seed);
            run_one(Stage::study_plan);
        } else if (*ssim) {
            set_if(ov, "study", "rating_profile", profile);
            set_if(ov, "seeds", "simulation", seed);
            run_one(Stage::study_simulate);
        } else if (*sreport) {
            run_one(Stage::study_report);
        } else if (*sserve) {
            const StudyPlan plan = plan_from_json(read_json(plan_path));
            RatingStore store(plan, fs::path(ratings_path));
            auto instr = load_instructions(instructions_path.empty() ? default_instructions_path()
                                                                      : fs::path(instructions_path));
            StudyServer server(plan, store, instr,
                               demo_path.empty() ? std::nullopt : std::optional<fs::path>(demo_path));
            const int bound = server.bind(host, port);
            g_server = &server;
            std::signal(SIGINT, [](int) {
                if (g_server) g_server->stop();
            });
            std::cout << "serving study on http://" << host << ':' << bound << std::endl;
            server.listen();
        } else if (*stats) {
            if (!stats_config.empty()) {
                cfg.path = stats_config;
                ov["stats"]["iterations"] = iterations;
                ov["stats"]["baseline"] = baseline;
                ov["stats"]["aggregate"] = aggregate;
                ov["seeds"]["stats"] = stats_seed;
                run_one(Stage::stats);
                return 0;
            }
            if (stats_plan.empty() || stats_ratings.empty() || method.empty())
                throw Error("stats needs --config, or --plan, --ratings and --method");
            const StudyPlan plan = plan_from_json(read_json(stats_plan));
            RatingStore store(plan, fs::path(stats_ratings));
            const auto outcomes = item_outcomes(store.latest(), plan);
            const auto m = method_label_from_string(method);
            const auto b = method_label_from_string(baseline);
            ComparisonConfig cc;
            cc.iterations = iterations;
            cc.seed = stats_seed;
            cc.aggregate = aggregate == "mean_rating" ? UserAggregate::mean_rating
                                                      : UserAggregate::first_pref_count;
            const auto cmp = compare_to_baseline(outcomes, m, b, cc);
            const StatResult& r = test == "bootstrap"  ? cmp.first_pref
                                  : test == "wilcoxon" ? cmp.wilcoxon
                                                       : cmp.permutation;
            json j = to_json(r);
            j["method"] = method;
            j["baseline"] = baseline;
            j["test"] = test;
            emit(j, out);
        } else if (*ts) {
            if (pairs_path) ov["data"]["story_pairs"] = absolute(*pairs_path);
            set_if(ov, "data", "story_rating_max", rating_max);
            set_if(ov, "seeds", "scorer", seed);
            if (split) {
                std::vector<double> r;
                std::stringstream ss(*split);
                std::string part;
                while (std::getline(ss, part, ',')) r.push_back(std::stod(part));
                if (r.size() != 3) throw Error("--split needs three comma-separated ratios");
                ov["scorer"]["split"] = r;
            }
            run_one(Stage::train_scorer);
        } else if (*sftc) {
            set_if(ov, "alignment", "sft_epochs", epochs);
            set_if(ov, "alignment", "sft_lr", lr);
            set_if(ov, "seeds", "alignment", seed);
            run_one(Stage::sft);
        } else if (*al) {
            if (loss) ov["alignment"]["loss"] = *loss == "task" ? "task_loss" : *loss;
            set_if(ov, "alignment", "epochs", epochs);
            set_if(ov, "alignment", "lr", lr);
            set_if(ov, "alignment", "margin", margin);
            set_if(ov, "alignment", "trainable_layers", trainable);
            set_if(ov, "seeds", "alignment", seed);
            run_one(Stage::align);
        } else if (*ev_run) {
            run_one(Stage::eval);
        } else if (*ev_rouge) {
            const auto outs = read_lines(system_file);
            const auto refs = read_lines(refs_file);
            json j = json::object();
            for (auto v : {RougeVariant::rouge1, RougeVariant::rouge2, RougeVariant::rougeL}) {
                if (variant != "all" && variant != to_string(v)) continue;
                const auto cr = corpus_rouge(outs, refs, v);
                json rows = json::array();
                for (size_t i = 0; i < cr.per_example.size(); ++i)
                    rows.push_back({{"index", i}, {"score", to_json(cr.per_example[i])}});
                j[to_string(v)] = {{"mean", to_json(cr.mean)}, {"per_example", rows}};
            }
            emit(j, out);
        } else if (*ev_neu) {
            SystemOutputs outputs;
            for (const auto& s : systems) {
                const auto eq = s.find('=');
                if (eq == std::string::npos) throw Error("--systems expects name=file, got '" + s + "'");
                auto& m = outputs[s.substr(0, eq)];
                for (const auto& line : read_lines(s.substr(eq + 1))) {
                    const auto row = json::parse(line);
                    m[row.at("pair_id")] = row.at("text");
                }
            }
            const auto pairs = load_view_pairs(neu_pairs);
            std::unique_ptr<EmbeddingModel> model;
            std::unique_ptr<CompromiseScorer> scorer;
            if (scorer_dir.empty()) {
                scorer = std::make_unique<TokenOverlapScorer>();
            } else {
                model = std::make_unique<EmbeddingModel>(EmbeddingModel::load(scorer_dir));
                scorer = std::make_unique<EncoderScorer>(*model);
            }
            const auto report = neutrality_report(outputs, pairs, sample, eval_seed, *scorer);
            if (!svg.empty()) std::ofstream(svg) << neutrality_boxplot_svg(report);
            emit(to_json(report), out);
        } else if (*ev_fg) {
            const TinyLM model = TinyLM::load(model_dir);
            const auto corpus = read_lines(corpus_file);
            std::cout << json{{"documents", corpus.size()},
                              {"loglik_per_token", forgetting_loglik(model, corpus)}}
                             .dump(2)
                      << '\n';
        } else if (*run) {
            const RunConfig c = cfg.load();
            std::vector<Stage> stages;
            for (const auto& s : stage_names) stages.push_back(stage_from_string(s));
            if (stages.empty()) stages.assign(std::begin(kStudyChain), std::end(kStudyChain));
            for (Stage s : stages) print_stage(run_stage(c, s));
        } else if (*vc) {
            try {
                std::cout << to_json(validate_config(vc_path)).dump(2) << '\n';
            } catch (const ConfigError& e) {
                for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
                return 2;
            }
        }
    } catch (const ConfigError& e) {
        for (const auto& p : e.problems()) std::cerr << "error: " << p << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
