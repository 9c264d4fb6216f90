#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "compromise/alignment.hpp"
#include "compromise/compromise_engine.hpp"
#include "compromise/diagnostics.hpp"
#include "compromise/preference_stats.hpp"

namespace compromise {

inline constexpr int kConfigVersion = 1;

enum class BackendKind { mock, remote };
enum class ScorerKind { overlap, hash, trained };
enum class RatingProfile { uniform, fb_wins };

struct RunConfig {
    std::filesystem::path run_dir = "run";

    struct Data {
        std::filesystem::path view_pairs;
        std::optional<std::filesystem::path> story_pairs;
        double story_rating_max = 1.0;
        std::optional<std::filesystem::path> forgetting_corpus;
    } data;

    struct Seeds {
        std::uint64_t generation = 0;
        std::uint64_t study = 0;
        std::uint64_t simulation = 0;
        std::uint64_t stats = 0;
        std::uint64_t scorer = 0;
        std::uint64_t alignment = 0;
        std::uint64_t eval = 0;
    } seeds;

    struct Backend {
        BackendKind kind = BackendKind::mock;
        std::string model = RemoteBackendConfig{}.model;
        std::optional<std::uint64_t> request_budget;
        int max_retries = 3;
        double temperature = 0.7;
        int max_tokens = 1024;
    } backend;

    struct Generation {
        std::vector<Strategy> strategies{std::begin(kAllStrategies), std::end(kAllStrategies)};
        int n = 4;
        int max_iters = 3;
        double stop_epsilon = 0.01;
        int max_in_flight = 4;
        bool include_demographics = false;
        ScorerKind scorer = ScorerKind::overlap;
    } generation;

    struct Selection {
        int k = 4;
    } selection;

    struct Study {
        int raters = 10;
        int items_per_rater = 5;
        std::optional<std::size_t> max_pairs;
        bool exclude_incomplete = true;
        RatingProfile profile = RatingProfile::uniform;
    } study;

    struct Stats {
        std::uint64_t iterations = 10000;
        double level = 0.95;
        MethodLabel baseline = MethodLabel::single_prompt;
        UserAggregate aggregate = UserAggregate::mean_rating;
    } stats;

    struct Scorer {
        int dimension = 64;
        int buckets = 4096;
        int epochs = 4;
        int batch_size = 16;
        double lr = 1e-2;
        std::array<double, 3> split{0.75, 0.05, 0.20};
    } scorer;

    struct Alignment {
        LossKind loss = LossKind::nce;
        std::optional<int> epochs;  // unset: 8 (nce) or 12 (task_loss)
        double lr = 3e-5;
        std::int64_t warmup_steps = 0;
        double beta1 = 0.90;
        double beta2 = 0.99;
        double margin = 10.0;
        int trainable_layers = 3;
        int batch_size = 1;
        std::optional<std::int64_t> max_steps;
        RougeVariant rouge = RougeVariant::rougeL;
        int sft_epochs = 1;
        double sft_lr = 3e-5;
        int hidden = 32;
        int blocks = 4;
        int max_tokens = 64;
    } alignment;

    struct Eval {
        std::size_t sample = 100;
    } eval;

    AlignConfig align_config() const;
    SftConfig sft_config() const;
};

/// Every problem found in a config, not just the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Checks keys, types, enums and required seeds; fills defaults. Relative
/// paths resolve against `base_dir`.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig validate_config(const std::filesystem::path& path);

/// The fully populated config, paths as given.
nlohmann::json to_json(const RunConfig& c);

/// sha256 of the canonical JSON echo, leaving out run_dir.
std::string config_hash(const RunConfig& c);

enum class Stage {
    generate,
    score,
    select,
    study_plan,
    study_simulate,
    study_report,
    stats,
    train_scorer,
    sft,
    align,
    eval
};

inline constexpr Stage kAllStages[] = {Stage::generate,     Stage::score,        Stage::select,
                                       Stage::study_plan,   Stage::study_simulate,
                                       Stage::study_report, Stage::stats,        Stage::train_scorer,
                                       Stage::sft,          Stage::align,        Stage::eval};

/// generate through stats: the chain that needs only view pairs.
inline constexpr Stage kStudyChain[] = {Stage::generate,       Stage::score,        Stage::select,
                                        Stage::study_plan,     Stage::study_simulate,
                                        Stage::study_report,   Stage::stats};

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);

/// Stages whose outputs `s` reads.
std::vector<Stage> stage_dependencies(Stage s, const RunConfig& c);

struct StageResult {
    Stage stage;
    std::vector<std::filesystem::path> outputs;
    std::filesystem::path manifest;
};

/// Runs one stage inside c.run_dir and writes <stage>.manifest.json with the
/// config hash, input and output hashes, and seeds.
StageResult run_stage(const RunConfig& c, Stage s);

std::vector<StageResult> run_stages(const RunConfig& c, const std::vector<Stage>& stages);

std::filesystem::path manifest_path(const RunConfig& c, Stage s);

/// Synthetic ratings for every slot of a plan.
std::vector<RatingRecord> simulate_ratings(const StudyPlan& plan, RatingProfile profile,
                                           std::uint64_t seed);

}  // namespace compromise
