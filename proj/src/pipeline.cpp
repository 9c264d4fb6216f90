#include "compromise/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <sstream>

#include "compromise/corpus.hpp"
#include "compromise/empathy_scorer.hpp"
#include "compromise/eval_reporting.hpp"
#include "compromise/hashing.hpp"
#include "compromise/language_model.hpp"
#include "compromise/mock_backend.hpp"
#include "compromise/neutrality_selector.hpp"
#include "compromise/random.hpp"
#include "compromise/study_protocol.hpp"
#include "compromise/text.hpp"

namespace compromise {

using nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "0.1.0";

std::string join_problems(const std::vector<std::string>& p) {
    std::string out = "invalid config:";
    for (const auto& s : p) out += "\n  - " + s;
    return out;
}

std::string to_string(BackendKind k) { return k == BackendKind::mock ? "mock" : "remote"; }
std::string to_string(ScorerKind k) {
    switch (k) {
        case ScorerKind::overlap: return "overlap";
        case ScorerKind::hash: return "hash";
        case ScorerKind::trained: return "trained";
    }
    return "?";
}
std::string to_string(RatingProfile p) { return p == RatingProfile::uniform ? "uniform" : "fb_wins"; }
std::string to_string(UserAggregate a) {
    return a == UserAggregate::mean_rating ? "mean_rating" : "first_pref_count";
}

// Walks one JSON object, recording every problem instead of stopping at the first.
class Section {
public:
    Section(const json& obj, std::string path, std::vector<std::string>& errors)
        : obj_(obj), path_(std::move(path)), errors_(errors) {
        if (!obj_.is_object()) errors_.push_back(where() + "must be an object");
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        if (!obj_.is_object() || !obj_.contains(key)) return;
        try {
            out = obj_.at(key).get<T>();
        } catch (const std::exception&) {
            errors_.push_back(where(key) + "has the wrong type (got " +
                              std::string(obj_.at(key).type_name()) + ")");
        }
    }

    template <typename T>
    void get_optional(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        if (!obj_.is_object() || !obj_.contains(key) || obj_.at(key).is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }

    void require(const std::string& key) {
        seen_.insert(key);
        if (obj_.is_object() && !obj_.contains(key)) errors_.push_back(where(key) + "is required");
    }

    /// Reads a string and maps it through `parse`, reporting the valid names.
    template <typename E>
    void get_enum(const std::string& key, E& out, const std::vector<std::pair<std::string, E>>& names) {
        std::string s;
        bool present = obj_.is_object() && obj_.contains(key);
        get(key, s);
        if (!present || s.empty()) return;
        for (const auto& [n, v] : names)
            if (n == s) {
                out = v;
                return;
            }
        std::string valid;
        for (const auto& [n, v] : names) valid += (valid.empty() ? "" : ", ") + n;
        errors_.push_back(where(key) + "unknown value '" + s + "' (valid: " + valid + ")");
    }

    void check(bool ok, const std::string& key, const std::string& msg) {
        if (!ok) errors_.push_back(where(key) + msg);
    }

    /// Child object, or an empty one when absent.
    const json& child(const std::string& key) {
        seen_.insert(key);
        static const json empty = json::object();
        return obj_.is_object() && obj_.contains(key) ? obj_.at(key) : empty;
    }

    void reject_unknown() {
        if (!obj_.is_object()) return;
        for (const auto& [k, v] : obj_.items())
            if (!seen_.count(k)) {
                std::string valid;
                for (const auto& s : seen_) valid += (valid.empty() ? "" : ", ") + s;
                errors_.push_back(where(k) + "unknown key (valid: " + valid + ")");
            }
    }

    std::string where(const std::string& key = {}) const {
        std::string p = path_;
        if (!key.empty()) p += (p.empty() ? "" : ".") + key;
        return p.empty() ? "" : p + ": ";
    }

    std::vector<std::string>& errors() { return errors_; }

private:
    const json& obj_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return (base / p).lexically_normal();
}

template <typename E>
std::vector<std::pair<std::string, E>> names_of(std::initializer_list<E> values) {
    std::vector<std::pair<std::string, E>> out;
    for (E v : values) out.emplace_back(to_string(v), v);
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : Error(join_problems(problems)), problems_(std::move(problems)) {}

AlignConfig RunConfig::align_config() const {
    AlignConfig a;
    a.loss_kind = alignment.loss;
    a.epochs = alignment.epochs.value_or(AlignConfig::default_epochs(alignment.loss));
    a.base_lr = alignment.lr;
    a.warmup_steps = alignment.warmup_steps;
    a.adam_beta1 = alignment.beta1;
    a.adam_beta2 = alignment.beta2;
    a.w_margin = alignment.margin;
    a.trainable_layers = alignment.trainable_layers;
    a.seed = seeds.alignment;
    a.batch_size = alignment.batch_size;
    a.max_steps = alignment.max_steps;
    a.rouge = alignment.rouge;
    return a;
}

SftConfig RunConfig::sft_config() const {
    SftConfig s;
    s.epochs = alignment.sft_epochs;
    s.base_lr = alignment.sft_lr;
    s.adam_beta1 = alignment.beta1;
    s.adam_beta2 = alignment.beta2;
    s.seed = seeds.alignment;
    s.batch_size = alignment.batch_size;
    return s;
}

RunConfig parse_config(const json& j, const fs::path& base_dir) {
    std::vector<std::string> errors;
    RunConfig c;
    Section top(j, "", errors);

    int version = 0;
    top.require("config_version");
    top.get("config_version", version);
    if (j.is_object() && j.contains("config_version"))
        top.check(version == kConfigVersion, "config_version",
                  "unsupported version " + std::to_string(version) + " (expected " +
                      std::to_string(kConfigVersion) + ")");
    std::string run_dir = c.run_dir.string();
    top.get("run_dir", run_dir);
    c.run_dir = resolve(base_dir, run_dir);

    {
        Section s(top.child("data"), "data", errors);
        std::string vp;
        std::optional<std::string> sp, fc;
        s.require("view_pairs");
        s.get("view_pairs", vp);
        s.get_optional("story_pairs", sp);
        s.get("story_rating_max", c.data.story_rating_max);
        s.get_optional("forgetting_corpus", fc);
        s.check(c.data.story_rating_max > 0, "story_rating_max", "must be positive");
        c.data.view_pairs = resolve(base_dir, vp);
        if (sp) c.data.story_pairs = resolve(base_dir, *sp);
        if (fc) c.data.forgetting_corpus = resolve(base_dir, *fc);
        s.reject_unknown();
    }
    {
        top.require("seeds");
        Section s(top.child("seeds"), "seeds", errors);
        const std::pair<const char*, std::uint64_t*> seeds[] = {
            {"generation", &c.seeds.generation}, {"study", &c.seeds.study},
            {"simulation", &c.seeds.simulation}, {"stats", &c.seeds.stats},
            {"scorer", &c.seeds.scorer},         {"alignment", &c.seeds.alignment},
            {"eval", &c.seeds.eval}};
        if (j.is_object() && j.contains("seeds"))
            for (const auto& [k, p] : seeds) {
                s.require(k);
                s.get(k, *p);
            }
        s.reject_unknown();
    }
    {
        Section s(top.child("backend"), "backend", errors);
        s.get_enum("kind", c.backend.kind, names_of({BackendKind::mock, BackendKind::remote}));
        s.get("model", c.backend.model);
        s.get_optional("request_budget", c.backend.request_budget);
        s.get("max_retries", c.backend.max_retries);
        s.get("temperature", c.backend.temperature);
        s.get("max_tokens", c.backend.max_tokens);
        s.check(c.backend.temperature >= 0, "temperature", "must be >= 0");
        s.check(c.backend.max_retries >= 0, "max_retries", "must be >= 0");
        s.reject_unknown();
    }
    {
        Section s(top.child("generation"), "generation", errors);
        std::vector<std::string> names;
        const bool has = s.child("strategies").is_array();
        s.get("strategies", names);
        if (has) {
            c.generation.strategies.clear();
            for (const auto& n : names) {
                try {
                    c.generation.strategies.push_back(strategy_from_string(n));
                } catch (const Error& e) {
                    errors.push_back(std::string("generation.strategies: ") + e.what());
                }
            }
            s.check(!names.empty(), "strategies", "must not be empty");
        }
        s.get("n", c.generation.n);
        s.get("max_iters", c.generation.max_iters);
        s.get("stop_epsilon", c.generation.stop_epsilon);
        s.get("max_in_flight", c.generation.max_in_flight);
        s.get("include_demographics", c.generation.include_demographics);
        s.get_enum("scorer", c.generation.scorer,
                   names_of({ScorerKind::overlap, ScorerKind::hash, ScorerKind::trained}));
        s.check(c.generation.n >= 1, "n", "must be >= 1");
        s.check(c.generation.max_iters >= 1, "max_iters", "must be >= 1");
        s.check(c.generation.stop_epsilon >= 0, "stop_epsilon", "must be >= 0");
        s.check(c.generation.max_in_flight >= 1, "max_in_flight", "must be >= 1");
        s.reject_unknown();
    }
    {
        Section s(top.child("selection"), "selection", errors);
        s.get("k", c.selection.k);
        s.check(c.selection.k >= 1, "k", "must be >= 1");
        s.reject_unknown();
    }
    {
        Section s(top.child("study"), "study", errors);
        s.get("raters", c.study.raters);
        s.get("items_per_rater", c.study.items_per_rater);
        s.get_optional("max_pairs", c.study.max_pairs);
        s.get("exclude_incomplete", c.study.exclude_incomplete);
        s.get_enum("rating_profile", c.study.profile,
                   names_of({RatingProfile::uniform, RatingProfile::fb_wins}));
        s.check(c.study.raters >= 1, "raters", "must be >= 1");
        s.check(c.study.items_per_rater >= 1, "items_per_rater", "must be >= 1");
        s.reject_unknown();
    }
    {
        Section s(top.child("stats"), "stats", errors);
        s.get("iterations", c.stats.iterations);
        s.get("level", c.stats.level);
        std::vector<std::pair<std::string, MethodLabel>> labels;
        for (MethodLabel m : kAllLabels) labels.emplace_back(to_string(m), m);
        s.get_enum("baseline", c.stats.baseline, labels);
        s.get_enum("aggregate", c.stats.aggregate,
                   names_of({UserAggregate::mean_rating, UserAggregate::first_pref_count}));
        s.check(c.stats.iterations >= 1, "iterations", "must be >= 1");
        s.check(c.stats.level > 0 && c.stats.level < 1, "level", "must lie in (0, 1)");
        s.reject_unknown();
    }
    {
        Section s(top.child("scorer"), "scorer", errors);
        s.get("dimension", c.scorer.dimension);
        s.get("buckets", c.scorer.buckets);
        s.get("epochs", c.scorer.epochs);
        s.get("batch_size", c.scorer.batch_size);
        s.get("lr", c.scorer.lr);
        s.get("split", c.scorer.split);
        s.check(c.scorer.dimension >= 1 && c.scorer.buckets >= 1, "dimension",
                "dimension and buckets must be positive");
        s.check(c.scorer.epochs >= 1, "epochs", "must be >= 1");
        s.reject_unknown();
    }
    {
        Section s(top.child("alignment"), "alignment", errors);
        auto& a = c.alignment;
        s.get_enum("loss", a.loss, names_of({LossKind::nce, LossKind::task_loss}));
        s.get_optional("epochs", a.epochs);
        s.get("lr", a.lr);
        s.get("warmup_steps", a.warmup_steps);
        s.get("beta1", a.beta1);
        s.get("beta2", a.beta2);
        s.get("margin", a.margin);
        s.get("trainable_layers", a.trainable_layers);
        s.get("batch_size", a.batch_size);
        s.get_optional("max_steps", a.max_steps);
        s.get_enum("rouge", a.rouge,
                   names_of({RougeVariant::rouge1, RougeVariant::rouge2, RougeVariant::rougeL}));
        s.get("sft_epochs", a.sft_epochs);
        s.get("sft_lr", a.sft_lr);
        s.get("hidden", a.hidden);
        s.get("blocks", a.blocks);
        s.get("max_tokens", a.max_tokens);
        s.check(!a.epochs || *a.epochs >= 1, "epochs", "must be >= 1");
        s.check(a.margin >= 0, "margin", "must be >= 0");
        s.check(a.trainable_layers >= 1, "trainable_layers", "must be >= 1");
        s.check(a.trainable_layers <= a.blocks + 2, "trainable_layers",
                "exceeds the number of parameter groups (blocks + 2)");
        s.check(a.batch_size >= 1, "batch_size", "must be >= 1");
        s.check(a.sft_epochs >= 1, "sft_epochs", "must be >= 1");
        s.check(a.hidden >= 1 && a.blocks >= 0, "hidden", "bad model size");
        s.reject_unknown();
    }
    {
        Section s(top.child("eval"), "eval", errors);
        s.get("sample", c.eval.sample);
        s.check(c.eval.sample >= 1, "sample", "must be >= 1");
        s.reject_unknown();
    }
    top.reject_unknown();
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return c;
}

RunConfig validate_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot read " + path.string()});
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError({path.string() + ": " + e.what()});
    }
    return parse_config(j, path.parent_path());
}

json to_json(const RunConfig& c) {
    auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
    auto opt_path = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
    json strategies = json::array();
    for (Strategy s : c.generation.strategies) strategies.push_back(to_string(s));
    const auto& a = c.alignment;
    return {
        {"config_version", kConfigVersion},
        {"run_dir", c.run_dir.string()},
        {"data",
         {{"view_pairs", c.data.view_pairs.string()},
          {"story_pairs", opt_path(c.data.story_pairs)},
          {"story_rating_max", c.data.story_rating_max},
          {"forgetting_corpus", opt_path(c.data.forgetting_corpus)}}},
        {"seeds",
         {{"generation", c.seeds.generation},
          {"study", c.seeds.study},
          {"simulation", c.seeds.simulation},
          {"stats", c.seeds.stats},
          {"scorer", c.seeds.scorer},
          {"alignment", c.seeds.alignment},
          {"eval", c.seeds.eval}}},
        {"backend",
         {{"kind", to_string(c.backend.kind)},
          {"model", c.backend.model},
          {"request_budget", opt(c.backend.request_budget)},
          {"max_retries", c.backend.max_retries},
          {"temperature", c.backend.temperature},
          {"max_tokens", c.backend.max_tokens}}},
        {"generation",
         {{"strategies", strategies},
          {"n", c.generation.n},
          {"max_iters", c.generation.max_iters},
          {"stop_epsilon", c.generation.stop_epsilon},
          {"max_in_flight", c.generation.max_in_flight},
          {"include_demographics", c.generation.include_demographics},
          {"scorer", to_string(c.generation.scorer)}}},
        {"selection", {{"k", c.selection.k}}},
        {"study",
         {{"raters", c.study.raters},
          {"items_per_rater", c.study.items_per_rater},
          {"max_pairs", opt(c.study.max_pairs)},
          {"exclude_incomplete", c.study.exclude_incomplete},
          {"rating_profile", to_string(c.study.profile)}}},
        {"stats",
         {{"iterations", c.stats.iterations},
          {"level", c.stats.level},
          {"baseline", to_string(c.stats.baseline)},
          {"aggregate", to_string(c.stats.aggregate)}}},
        {"scorer",
         {{"dimension", c.scorer.dimension},
          {"buckets", c.scorer.buckets},
          {"epochs", c.scorer.epochs},
          {"batch_size", c.scorer.batch_size},
          {"lr", c.scorer.lr},
          {"split", c.scorer.split}}},
        {"alignment",
         {{"loss", to_string(a.loss)},
          {"epochs", a.epochs.value_or(AlignConfig::default_epochs(a.loss))},
          {"lr", a.lr},
          {"warmup_steps", a.warmup_steps},
          {"beta1", a.beta1},
          {"beta2", a.beta2},
          {"margin", a.margin},
          {"trainable_layers", a.trainable_layers},
          {"batch_size", a.batch_size},
          {"max_steps", opt(a.max_steps)},
          {"rouge", to_string(a.rouge)},
          {"sft_epochs", a.sft_epochs},
          {"sft_lr", a.sft_lr},
          {"hidden", a.hidden},
          {"blocks", a.blocks},
          {"max_tokens", a.max_tokens}}},
        {"eval", {{"sample", c.eval.sample}}}};
}

std::string config_hash(const RunConfig& c) {
    auto j = to_json(c);
    j.erase("run_dir");
    return sha256_hex(j.dump());
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::generate: return "generate";
        case Stage::score: return "score";
        case Stage::select: return "select";
        case Stage::study_plan: return "study-plan";
        case Stage::study_simulate: return "study-simulate";
        case Stage::study_report: return "study-report";
        case Stage::stats: return "stats";
        case Stage::train_scorer: return "train-scorer";
        case Stage::sft: return "sft";
        case Stage::align: return "align";
        case Stage::eval: return "eval";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    std::string valid;
    for (Stage st : kAllStages) {
        if (to_string(st) == s) return st;
        valid += (valid.empty() ? "" : ", ") + to_string(st);
    }
    throw Error("unknown stage '" + s + "' (valid: " + valid + ")");
}

std::vector<Stage> stage_dependencies(Stage s, const RunConfig& c) {
    const bool trained = c.generation.scorer == ScorerKind::trained;
    std::vector<Stage> deps;
    switch (s) {
        case Stage::generate:
        case Stage::score:
            if (s == Stage::score) deps.push_back(Stage::generate);
            if (trained) deps.push_back(Stage::train_scorer);
            break;
        case Stage::select: deps = {Stage::score}; break;
        case Stage::study_plan: deps = {Stage::score}; break;
        case Stage::study_simulate: deps = {Stage::study_plan}; break;
        case Stage::study_report: deps = {Stage::study_plan, Stage::study_simulate}; break;
        case Stage::stats: deps = {Stage::study_plan, Stage::study_simulate}; break;
        case Stage::train_scorer: break;
        case Stage::sft: deps = {Stage::select}; break;
        case Stage::align: deps = {Stage::sft}; break;
        case Stage::eval:
            deps = {Stage::select, Stage::align};
            if (trained) deps.push_back(Stage::train_scorer);
            break;
    }
    return deps;
}

fs::path manifest_path(const RunConfig& c, Stage s) {
    return c.run_dir / (to_string(s) + ".manifest.json");
}

std::vector<RatingRecord> simulate_ratings(const StudyPlan& plan, RatingProfile profile,
                                           std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RatingRecord> out;
    for (const auto& rater : plan.raters)
        for (const auto& item : rater.items)
            for (const auto& slot : item.presented) {
                RatingRecord r;
                r.rater_id = rater.rater_id;
                r.pair_id = item.pair_id;
                r.slot_id = slot.slot_id;
                if (profile == RatingProfile::fb_wins && slot.label == MethodLabel::cot_fb_1)
                    r.rating = 100;
                else if (profile == RatingProfile::fb_wins)
                    r.rating = 1 + static_cast<int>(uniform_index(rng, 99));
                else
                    r.rating = 1 + static_cast<int>(uniform_index(rng, 100));
                r.timestamp = "synthetic";
                out.push_back(std::move(r));
            }
    return out;
}

namespace {

struct Artifacts {
    fs::path dir;
    fs::path pool() const { return dir / "pool.jsonl"; }
    fs::path scored_pool() const { return dir / "scored_pool.jsonl"; }
    fs::path selected() const { return dir / "selected.jsonl"; }
    fs::path selection_tsv() const { return dir / "selection_report.tsv"; }
    fs::path selection_json() const { return dir / "selection_report.json"; }
    fs::path plan() const { return dir / "study_plan.json"; }
    fs::path ratings() const { return dir / "ratings.jsonl"; }
    fs::path preferences() const { return dir / "preferences.json"; }
    fs::path preferences_tsv() const { return dir / "preferences.tsv"; }
    fs::path stats() const { return dir / "stats.json"; }
    fs::path scorer() const { return dir / "scorer"; }
    fs::path scorer_report() const { return dir / "scorer_report.json"; }
    fs::path alignment_data() const { return dir / "alignment_data.jsonl"; }
    fs::path base_model() const { return dir / "models" / "base"; }
    fs::path sft_model() const { return dir / "models" / "sft"; }
    fs::path aligned_model() const { return dir / "models" / "aligned"; }
    fs::path hypotheses() const { return dir / "hypotheses.jsonl"; }
    fs::path eval() const { return dir / "eval.json"; }
    fs::path neutrality() const { return dir / "neutrality.json"; }
    fs::path neutrality_svg() const { return dir / "neutrality.svg"; }
    fs::path llm_audit() const { return dir / "llm_audit.jsonl"; }
};

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("failed writing " + p.string());
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

// Scorer objects plus whatever they borrow.
struct ScorerBox {
    std::unique_ptr<EmbeddingModel> model;
    std::unique_ptr<CompromiseScorer> scorer;
};

ScorerBox make_scorer(const RunConfig& c, const Artifacts& a) {
    ScorerBox box;
    switch (c.generation.scorer) {
        case ScorerKind::overlap: box.scorer = std::make_unique<TokenOverlapScorer>(); break;
        case ScorerKind::hash: {
            EncoderConfig ec;
            ec.dimension = c.scorer.dimension;
            ec.buckets = c.scorer.buckets;
            ec.seed = c.seeds.scorer;
            box.model = std::make_unique<EmbeddingModel>(ec);
            box.scorer = std::make_unique<EncoderScorer>(*box.model);
            break;
        }
        case ScorerKind::trained:
            box.model = std::make_unique<EmbeddingModel>(EmbeddingModel::load(a.scorer()));
            box.scorer = std::make_unique<EncoderScorer>(*box.model);
            break;
    }
    return box;
}

std::vector<fs::path> expand(const fs::path& p) {
    if (!fs::is_directory(p)) return {p};
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

std::string rel(const fs::path& p, const fs::path& base) {
    const auto r = fs::absolute(p).lexically_normal().lexically_relative(
        fs::absolute(base).lexically_normal());
    return r.empty() ? p.string() : r.generic_string();
}

ojson hashed_files(const std::vector<fs::path>& paths, const fs::path& base) {
    ojson arr = ojson::array();
    for (const auto& p : paths)
        for (const auto& f : expand(p)) arr.push_back({{"path", rel(f, base)}, {"sha256", sha256_file(f)}});
    return arr;
}

struct StageIO {
    std::vector<fs::path> inputs;   // external data files
    std::vector<fs::path> outputs;
    ojson seeds = ojson::object();
    ojson extra = ojson::object();
};

using Seeds = RunConfig::Seeds;

std::vector<TrainingExample> read_alignment_data(const fs::path& p, std::vector<std::string>* ids) {
    std::vector<TrainingExample> out;
    for (const auto& line : read_lines(p)) {
        const auto j = json::parse(line);
        out.push_back({j.at("prompt"), j.at("target")});
        if (ids) ids->push_back(j.at("pair_id"));
    }
    return out;
}

std::string pair_prompt(const ViewPair& p, bool demographics) {
    return render_view_text(p.view_a, demographics) + " " + render_view_text(p.view_b, demographics);
}

StageIO stage_generate(const RunConfig& c, const Artifacts& a) {
    const auto pairs = load_view_pairs(c.data.view_pairs);
    std::unique_ptr<LlmBackend> inner;
    std::unique_ptr<LlmBackend> wrapped;
    LlmBackend* backend = nullptr;
    if (c.backend.kind == BackendKind::mock) {
        inner = std::make_unique<MockBackend>(c.seeds.generation, c.backend.request_budget);
        backend = inner.get();
    } else {
        RemoteBackendConfig rc;
        rc.model = c.backend.model;
        inner = std::make_unique<RemoteBackend>(rc, c.backend.request_budget);
        RetryPolicy policy;
        policy.max_retries = c.backend.max_retries;
        wrapped = std::make_unique<RetryingBackend>(*inner, policy, a.llm_audit());
        backend = wrapped.get();
    }
    auto box = make_scorer(c, a);
    DecompositionCache cache;
    SamplingConfig sampling{c.backend.temperature, c.seeds.generation, c.backend.max_tokens};
    CompromiseEngine engine(*backend, cache, sampling, c.generation.include_demographics);
    GenerationPlan plan;
    plan.strategies = c.generation.strategies;
    plan.n = c.generation.n;
    plan.feedback = {c.generation.max_iters, c.generation.stop_epsilon};
    plan.max_in_flight = c.generation.max_in_flight;
    const auto pool = generate_pool(engine, pairs, plan, box.scorer.get());
    write_pool(a.pool(), pool);
    StageIO io;
    io.inputs = {c.data.view_pairs};
    io.outputs = {a.pool()};
    if (c.backend.kind == BackendKind::remote) io.outputs.push_back(a.llm_audit());
    io.seeds = {{"generation", c.seeds.generation}};
    io.extra = {{"backend", backend->name()}, {"requests", backend->request_count()}};
    return io;
}

StageIO stage_score(const RunConfig& c, const Artifacts& a) {
    const auto pairs = load_view_pairs(c.data.view_pairs);
    std::map<std::string, const ViewPair*> by_id;
    for (const auto& p : pairs) by_id[p.pair_id] = &p;
    auto pool = load_pool(a.pool());
    auto box = make_scorer(c, a);
    for (auto& e : pool) {
        auto it = by_id.find(e.compromise.pair_id);
        if (it == by_id.end()) throw Error("pool entry for unknown pair '" + e.compromise.pair_id + "'");
        e.compromise.scores = box.scorer->score(e.compromise.text, *it->second);
    }
    write_pool(a.scored_pool(), pool);
    StageIO io;
    io.inputs = {c.data.view_pairs};
    io.outputs = {a.scored_pool()};
    io.extra = {{"scorer", to_string(c.generation.scorer)}, {"entries", pool.size()}};
    if (c.generation.scorer == ScorerKind::hash) io.seeds = {{"scorer", c.seeds.scorer}};
    return io;
}

StageIO stage_select(const RunConfig& c, const Artifacts& a) {
    const auto pairs = load_view_pairs(c.data.view_pairs);
    const auto pool = load_pool(a.scored_pool());
    const auto selected = select_candidates(pool_by_pair(pool), static_cast<size_t>(c.selection.k));
    std::map<std::string, Topic> topics;
    for (const auto& p : pairs) topics[p.pair_id] = p.topic;
    std::ostringstream lines;
    for (const auto& p : pairs) {
        auto it = selected.find(p.pair_id);
        if (it == selected.end()) continue;
        int rank = 0;
        for (const auto& comp : it->second) {
            PoolEntry e{comp, pool.empty() ? "" : pool.front().backend,
                        pool.empty() ? 0 : pool.front().seed};
            auto row = ojson::parse(pool_entry_to_line(e));
            row["rank"] = ++rank;
            row["gap"] = neutrality_gap(*comp.scores);
            lines << row.dump() << '\n';
        }
    }
    write_text(a.selected(), lines.str());
    const auto report = strategy_distribution(selected, topics);
    write_text(a.selection_tsv(), report_to_table(report, '\t'));
    write_text(a.selection_json(), report_to_json(report) + "\n");
    StageIO io;
    io.inputs = {c.data.view_pairs};
    io.outputs = {a.selected(), a.selection_tsv(), a.selection_json()};
    io.extra = {{"k", c.selection.k}};
    return io;
}

std::vector<std::string> rater_ids(int n) {
    std::vector<std::string> out;
    const int width = std::max<int>(2, static_cast<int>(std::to_string(n).size()));
    for (int i = 1; i <= n; ++i) {
        std::string s = std::to_string(i);
        out.push_back("r" + std::string(static_cast<size_t>(width) - s.size(), '0') + s);
    }
    return out;
}

StageIO stage_study_plan(const RunConfig& c, const Artifacts& a) {
    const auto pairs = load_view_pairs(c.data.view_pairs);
    const auto pool = pool_by_pair(load_pool(a.scored_pool()));
    StudyConfig sc;
    sc.items_per_rater = c.study.items_per_rater;
    sc.max_pairs = c.study.max_pairs;
    sc.exclude_incomplete = c.study.exclude_incomplete;
    const auto plan = build_assignment(rater_ids(c.study.raters), pairs, pool, c.seeds.study, sc);
    write_text(a.plan(), plan_to_json(plan).dump(2) + "\n");
    StageIO io;
    io.inputs = {c.data.view_pairs};
    io.outputs = {a.plan()};
    io.seeds = {{"study", c.seeds.study}};
    io.extra = {{"excluded_pairs", plan.excluded_pairs}};
    return io;
}

StudyPlan read_plan(const Artifacts& a) {
    std::ifstream in(a.plan());
    if (!in) throw Error("cannot read " + a.plan().string());
    return plan_from_json(json::parse(in));
}

StageIO stage_study_simulate(const RunConfig& c, const Artifacts& a) {
    const auto plan = read_plan(a);
    fs::remove(a.ratings());
    RatingStore store(plan, a.ratings());
    for (auto& r : simulate_ratings(plan, c.study.profile, c.seeds.simulation)) store.record(r);
    StageIO io;
    io.outputs = {a.ratings()};
    io.seeds = {{"simulation", c.seeds.simulation}};
    io.extra = {{"rating_profile", to_string(c.study.profile)}};
    return io;
}

StageIO stage_study_report(const RunConfig& c, const Artifacts& a) {
    const auto plan = read_plan(a);
    RatingStore store(plan, a.ratings());
    const auto table = derive_preferences(store.latest(), plan, c.study.exclude_incomplete);
    write_text(a.preferences(), to_json(table).dump(2) + "\n");
    std::ostringstream tsv;
    tsv << "method\tfirst_pref_pct\tsecond_pref_pct\n";
    char buf[128];
    for (MethodLabel m : kAllLabels) {
        std::snprintf(buf, sizeof buf, "%s\t%.2f\t%.2f\n", to_string(m).c_str(),
                      table.first_pref_pct.count(m) ? table.first_pref_pct.at(m) : 0.0,
                      table.second_pref_pct.count(m) ? table.second_pref_pct.at(m) : 0.0);
        tsv << buf;
    }
    write_text(a.preferences_tsv(), tsv.str());
    StageIO io;
    io.outputs = {a.preferences(), a.preferences_tsv()};
    io.extra = {{"cells", table.cells}};
    return io;
}

StageIO stage_stats(const RunConfig& c, const Artifacts& a) {
    const auto plan = read_plan(a);
    RatingStore store(plan, a.ratings());
    const auto outcomes = item_outcomes(store.latest(), plan, c.study.exclude_incomplete);
    ComparisonConfig cc;
    cc.iterations = c.stats.iterations;
    cc.seed = c.seeds.stats;
    cc.level = c.stats.level;
    cc.aggregate = c.stats.aggregate;
    json rows = json::array();
    for (MethodLabel m : kAllLabels) {
        if (m == c.stats.baseline) continue;
        rows.push_back(to_json(compare_to_baseline(outcomes, m, c.stats.baseline, cc)));
    }
    const json out = {{"baseline", to_string(c.stats.baseline)},
                      {"items", outcomes.size()},
                      {"comparisons", rows}};
    write_text(a.stats(), out.dump(2) + "\n");
    StageIO io;
    io.outputs = {a.stats()};
    io.seeds = {{"stats", c.seeds.stats}};
    return io;
}

StageIO stage_train_scorer(const RunConfig& c, const Artifacts& a) {
    if (!c.data.story_pairs) throw Error("train-scorer needs data.story_pairs in the config");
    const auto pairs = load_story_pairs(*c.data.story_pairs, c.data.story_rating_max);
    EncoderConfig ec;
    ec.dimension = c.scorer.dimension;
    ec.buckets = c.scorer.buckets;
    ec.seed = c.seeds.scorer;
    EmbeddingModel model(ec);
    ScorerTrainConfig tc;
    tc.epochs = c.scorer.epochs;
    tc.batch_size = c.scorer.batch_size;
    tc.learning_rate = c.scorer.lr;
    tc.seed = c.seeds.scorer;
    const auto report = train_scorer(model, pairs, c.scorer.split, tc);
    model.save(a.scorer(), "trained on " + c.data.story_pairs->filename().string() + " seed " +
                               std::to_string(c.seeds.scorer));
    json epochs = json::array();
    for (const auto& e : report.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"dev_mse", e.dev_mse},
                          {"dev_spearman", e.dev_spearman}});
    write_text(a.scorer_report(), json{{"train_size", report.train_size},
                                       {"dev_size", report.dev_size},
                                       {"initial_dev_mse", report.initial_dev_mse},
                                       {"epochs", epochs}}
                                          .dump(2) +
                                      "\n");
    StageIO io;
    io.inputs = {*c.data.story_pairs};
    io.outputs = {a.scorer(), a.scorer_report()};
    io.seeds = {{"scorer", c.seeds.scorer}};
    return io;
}

StageIO stage_sft(const RunConfig& c, const Artifacts& a) {
    const auto pairs = load_view_pairs(c.data.view_pairs);
    std::map<std::string, std::string> best;
    for (const auto& line : read_lines(a.selected())) {
        const auto j = json::parse(line);
        if (j.at("rank") == 1) best[j.at("pair_id")] = j.at("text");
    }
    std::vector<TrainingExample> data;
    std::ostringstream lines;
    for (const auto& p : pairs) {
        auto it = best.find(p.pair_id);
        if (it == best.end()) continue;
        data.push_back({pair_prompt(p, c.generation.include_demographics), it->second});
        lines << ojson{{"pair_id", p.pair_id}, {"prompt", data.back().prompt}, {"target", it->second}}
                     .dump()
              << '\n';
    }
    if (data.empty()) throw Error("sft: no selected compromises to train on");
    write_text(a.alignment_data(), lines.str());

    std::vector<std::string> texts;
    for (const auto& d : data) {
        texts.push_back(d.prompt);
        texts.push_back(d.target);
    }
    TinyLMConfig mc;
    mc.hidden = c.alignment.hidden;
    mc.blocks = c.alignment.blocks;
    mc.seed = c.seeds.alignment;
    TinyLM model(Vocabulary::from_texts(texts), mc);
    model.save(a.base_model(), {{"stage", "init"}});
    const auto cfg = c.sft_config();
    const auto report = sft(model, data, cfg);
    model.save(a.sft_model(), {{"stage", "sft"}, {"config", to_json(cfg)}, {"report", to_json(report)}});
    StageIO io;
    io.inputs = {c.data.view_pairs};
    io.outputs = {a.alignment_data(), a.base_model(), a.sft_model()};
    io.seeds = {{"alignment", c.seeds.alignment}};
    io.extra = {{"examples", data.size()}, {"report", to_json(report)}};
    return io;
}

StageIO stage_align(const RunConfig& c, const Artifacts& a) {
    TinyLM model = TinyLM::load(a.sft_model());
    const auto data = read_alignment_data(a.alignment_data(), nullptr);
    const auto cfg = c.align_config();
    const auto examples = make_alignment_examples(model, data, cfg.rouge, c.alignment.max_tokens);
    std::ostringstream lines;
    for (const auto& e : examples)
        lines << ojson{{"prompt", e.prompt},
                       {"target", e.target},
                       {"hypothesis", e.hypothesis},
                       {"target_rouge", e.target_rouge},
                       {"hypo_rouge", e.hypo_rouge}}
                     .dump()
              << '\n';
    write_text(a.hypotheses(), lines.str());
    const auto report = align(model, examples, cfg);
    json mask = json::array();
    const auto trainable = trainable_group_indices(model, cfg.trainable_layers);
    for (size_t g = 0; g < model.num_groups(); ++g)
        mask.push_back({{"group", model.group_name(g)},
                        {"trainable", std::find(trainable.begin(), trainable.end(), g) != trainable.end()}});
    json schedule = {{"kind", "linear-warmup-cosine"},
                     {"base_lr", cfg.base_lr},
                     {"warmup_steps", cfg.warmup_steps},
                     {"total_steps", report.steps}};
    model.save(a.aligned_model(), {{"stage", "align"},
                                   {"config", to_json(cfg)},
                                   {"schedule", schedule},
                                   {"frozen_mask", mask},
                                   {"report", to_json(report)}});
    StageIO io;
    io.outputs = {a.hypotheses(), a.aligned_model()};
    io.seeds = {{"alignment", c.seeds.alignment}};
    io.extra = {{"loss_kind", to_string(cfg.loss_kind)}, {"report", to_json(report)}};
    return io;
}

StageIO stage_eval(const RunConfig& c, const Artifacts& a) {
    const auto pairs = load_view_pairs(c.data.view_pairs);
    std::vector<std::string> ids;
    const auto data = read_alignment_data(a.alignment_data(), &ids);
    std::vector<std::string> refs;
    for (const auto& d : data) refs.push_back(d.target);

    const std::pair<std::string, fs::path> models[] = {
        {"base", a.base_model()}, {"sft", a.sft_model()}, {"aligned", a.aligned_model()}};
    SystemOutputs systems;
    json rouge_rows = json::object();
    json forgetting = json::object();

    std::vector<std::string> corpus;
    if (c.data.forgetting_corpus) {
        corpus = read_lines(*c.data.forgetting_corpus);
    } else {
        for (const auto& p : pairs) {
            corpus.push_back(render_view_text(p.view_a));
            corpus.push_back(render_view_text(p.view_b));
        }
    }

    auto score_outputs = [&](const std::string& name, const std::vector<std::string>& outs) {
        json per = json::array();
        for (RougeVariant v : {RougeVariant::rouge1, RougeVariant::rougeL}) {
            const auto cr = corpus_rouge(outs, refs, v);
            rouge_rows[name][to_string(v)] = to_json(cr.mean);
        }
        for (size_t i = 0; i < outs.size(); ++i) {
            systems[name][ids[i]] = outs[i];
            per.push_back({{"pair_id", ids[i]}, {"output", outs[i]}});
        }
        rouge_rows[name]["outputs"] = per;
    };

    for (const auto& [name, dir] : models) {
        const TinyLM model = TinyLM::load(dir);
        std::vector<std::string> outs;
        for (const auto& d : data) outs.push_back(generate_nonempty(model, d.prompt, c.alignment.max_tokens));
        score_outputs(name, outs);
        forgetting[name] = forgetting_loglik(model, corpus);
        if (name == "sft") {
            std::vector<std::string> best;
            for (size_t i = 0; i < data.size(); ++i) {
                SamplingConfig s{1.0, mix64(c.seeds.eval + i), c.alignment.max_tokens};
                const auto& ref = refs[i];
                auto r = best_of_k(model, data[i].prompt, 5, s, [&](const std::string& t) {
                    return t.empty() ? -1.0 : rouge_l(t, ref).f1;
                });
                best.push_back(r.text.empty() ? outs[i] : r.text);
            }
            score_outputs("sft_best_of_5", best);
        }
    }
    {
        std::vector<std::string> pipeline;
        for (const auto& d : data) pipeline.push_back(d.target);
        for (size_t i = 0; i < data.size(); ++i) systems["pipeline"][ids[i]] = pipeline[i];
    }
    auto box = make_scorer(c, a);
    const auto report = neutrality_report(systems, pairs, c.eval.sample, c.seeds.eval, *box.scorer);
    write_text(a.neutrality(), to_json(report).dump(2) + "\n");
    write_text(a.neutrality_svg(), neutrality_boxplot_svg(report));
    write_text(a.eval(), json{{"rouge", rouge_rows},
                              {"forgetting_loglik_per_token", forgetting},
                              {"forgetting_corpus_documents", corpus.size()}}
                                 .dump(2) +
                             "\n");
    StageIO io;
    io.inputs = {c.data.view_pairs};
    if (c.data.forgetting_corpus) io.inputs.push_back(*c.data.forgetting_corpus);
    io.outputs = {a.eval(), a.neutrality(), a.neutrality_svg()};
    io.seeds = {{"eval", c.seeds.eval}};
    return io;
}

void check_dependencies(const RunConfig& c, Stage s) {
    for (Stage d : stage_dependencies(s, c)) {
        const auto m = manifest_path(c, d);
        if (!fs::exists(m))
            throw Error("stage '" + to_string(s) + "' needs the output of stage '" + to_string(d) +
                        "', which has not been run (missing " + m.string() + ")");
        std::ifstream in(m);
        const auto j = json::parse(in);
        for (const auto& o : j.at("outputs")) {
            const auto p = c.run_dir / o.at("path").get<std::string>();
            if (!fs::exists(p))
                throw Error("stage '" + to_string(s) + "' needs '" + p.string() + "' from stage '" +
                            to_string(d) + "', which is missing; re-run '" + to_string(d) + "'");
        }
    }
}

}  // namespace

StageResult run_stage(const RunConfig& c, Stage s) {
    check_dependencies(c, s);
    fs::create_directories(c.run_dir);
    const Artifacts a{c.run_dir};
    StageIO io;
    switch (s) {
        case Stage::generate: io = stage_generate(c, a); break;
        case Stage::score: io = stage_score(c, a); break;
        case Stage::select: io = stage_select(c, a); break;
        case Stage::study_plan: io = stage_study_plan(c, a); break;
        case Stage::study_simulate: io = stage_study_simulate(c, a); break;
        case Stage::study_report: io = stage_study_report(c, a); break;
        case Stage::stats: io = stage_stats(c, a); break;
        case Stage::train_scorer: io = stage_train_scorer(c, a); break;
        case Stage::sft: io = stage_sft(c, a); break;
        case Stage::align: io = stage_align(c, a); break;
        case Stage::eval: io = stage_eval(c, a); break;
    }
    ojson upstream = ojson::array();
    for (Stage d : stage_dependencies(s, c))
        upstream.push_back({{"stage", to_string(d)}, {"manifest_sha256", sha256_file(manifest_path(c, d))}});
    ojson manifest = {{"format_version", 1},
                      {"tool_version", kToolVersion},
                      {"stage", to_string(s)},
                      {"config_sha256", config_hash(c)},
                      {"seeds", io.seeds},
                      {"inputs", hashed_files(io.inputs, c.run_dir)},
                      {"upstream", upstream},
                      {"outputs", hashed_files(io.outputs, c.run_dir)},
                      {"details", io.extra}};
    const auto mp = manifest_path(c, s);
    write_text(mp, manifest.dump(2) + "\n");
    return {s, io.outputs, mp};
}

std::vector<StageResult> run_stages(const RunConfig& c, const std::vector<Stage>& stages) {
    std::vector<StageResult> out;
    for (Stage s : stages) out.push_back(run_stage(c, s));
    return out;
}

}  // namespace compromise
