#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "compromise/compromise_engine.hpp"
#include "compromise/corpus.hpp"

#include <json.hpp>

namespace compromise {

enum class Perspective { as_A, as_B };
enum class MethodLabel { opposing_view, single_prompt, cot, cot_fb_1, cot_fb_2 };

inline constexpr MethodLabel kAllLabels[] = {MethodLabel::opposing_view, MethodLabel::single_prompt,
                                             MethodLabel::cot, MethodLabel::cot_fb_1,
                                             MethodLabel::cot_fb_2};

std::string to_string(Perspective p);
std::string to_string(MethodLabel m);
MethodLabel method_label_from_string(const std::string& s);

struct PresentedSlot {
    int slot_id = 0;  // 1-based display position
    std::string text;
    MethodLabel label = MethodLabel::opposing_view;  // never sent to raters
};

struct StudyItem {
    std::string pair_id;
    std::string story_self;        // assigned perspective ("Person A")
    std::string story_other;       // "Person B"
    std::string suggestion_self;
    std::string suggestion_other;  // also presented as the opposing-view slot
    std::vector<PresentedSlot> presented;
};

struct RaterPlan {
    std::string rater_id;
    Perspective perspective = Perspective::as_A;
    std::vector<StudyItem> items;
};

struct StudyPlan {
    std::vector<RaterPlan> raters;
    std::vector<std::string> excluded_pairs;
    std::uint64_t seed = 0;

    const RaterPlan* find(const std::string& rater_id) const;
    const StudyItem* find_item(const std::string& rater_id, const std::string& pair_id) const;
};

struct StudyConfig {
    int items_per_rater = 5;
    bool reuse_pairs = true;           // pairs may be rated by several raters
    std::optional<std::size_t> max_pairs;  // cap on distinct pairs drawn
    bool exclude_incomplete = true;    // drop raters with missing ratings from tables
};

/// Balanced perspectives, per-pair random choice of one single-prompt, one
/// CoT and two CoT+Feedback compromises, and per-rater random slot order.
StudyPlan build_assignment(const std::vector<std::string>& raters,
                           const std::vector<ViewPair>& pairs,
                           const std::map<std::string, std::vector<Compromise>>& candidates,
                           std::uint64_t seed, const StudyConfig& cfg = {});

nlohmann::json plan_to_json(const StudyPlan& plan);
StudyPlan plan_from_json(const nlohmann::json& j);

/// What a rater's browser receives: stories, suggestions and slot texts, no labels.
nlohmann::json blinded_item(const StudyItem& item);

struct RatingRecord {
    std::string rater_id;
    std::string pair_id;
    int slot_id = 0;
    int rating = 0;  // 1..100
    std::string timestamp;
};

nlohmann::json to_json(const RatingRecord& r);
RatingRecord rating_from_json(const nlohmann::json& j);

struct RatingAck {
    bool superseded = false;  // an earlier rating for the same slot was replaced
    std::size_t sequence = 0;
};

/// Append-only rating log. The latest record per (rater, pair, slot) wins;
/// every submission stays in the log.
class RatingStore {
public:
    using Clock = std::function<std::string()>;

    /// An existing log at `log_path` is replayed before new records are appended.
    RatingStore(const StudyPlan& plan, std::optional<std::filesystem::path> log_path = std::nullopt,
                Clock clock = {});

    /// Validates against the plan, appends durably, then updates the view.
    RatingAck record(RatingRecord r);

    std::vector<RatingRecord> latest() const;
    std::vector<RatingRecord> audit_log() const;
    std::size_t rated_slots(const std::string& rater_id) const;
    bool item_complete(const std::string& rater_id, const StudyItem& item) const;

private:
    void apply(const RatingRecord& r);

    const StudyPlan& plan_;
    std::optional<std::filesystem::path> log_path_;
    Clock clock_;
    mutable std::mutex mutex_;
    std::vector<RatingRecord> log_;
    std::map<std::tuple<std::string, std::string, int>, std::size_t> latest_;
};

/// Per-(rater, item) outcome: rating, first/second-preference credit and
/// average rank (1 = best) for every hidden label.
struct ItemOutcome {
    std::string rater_id;
    std::string pair_id;
    std::map<MethodLabel, double> rating;
    std::map<MethodLabel, double> first_credit;
    std::map<MethodLabel, double> second_credit;
    std::map<MethodLabel, double> rank;
};

std::vector<ItemOutcome> item_outcomes(const std::vector<RatingRecord>& ratings,
                                       const StudyPlan& plan, bool exclude_incomplete = true);

struct PreferenceTable {
    std::map<MethodLabel, double> first_pref_pct;
    std::map<MethodLabel, double> second_pref_pct;
    std::map<MethodLabel, double> first_pref_count;  // fractional under ties
    std::size_t cells = 0;
};

/// Ranks the five slots of every complete (rater, item) by rating; tied
/// slots split the credit of the positions they jointly occupy.
PreferenceTable derive_preferences(const std::vector<RatingRecord>& ratings, const StudyPlan& plan,
                                   bool exclude_incomplete = true);

nlohmann::json to_json(const PreferenceTable& t);

}  // namespace compromise
