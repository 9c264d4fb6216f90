#include "compromise/study_protocol.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <set>

#include "compromise/random.hpp"
#include "compromise/text.hpp"

namespace compromise {

using nlohmann::json;

std::string to_string(Perspective p) { return p == Perspective::as_A ? "as_A" : "as_B"; }

std::string to_string(MethodLabel m) {
    switch (m) {
        case MethodLabel::opposing_view: return "opposing_view";
        case MethodLabel::single_prompt: return "single_prompt";
        case MethodLabel::cot: return "cot";
        case MethodLabel::cot_fb_1: return "cot_fb_1";
        case MethodLabel::cot_fb_2: return "cot_fb_2";
    }
    return "?";
}

MethodLabel method_label_from_string(const std::string& s) {
    for (MethodLabel m : kAllLabels)
        if (to_string(m) == s) return m;
    throw Error("unknown method label '" + s +
                "' (valid: opposing_view, single_prompt, cot, cot_fb_1, cot_fb_2)");
}

const RaterPlan* StudyPlan::find(const std::string& rater_id) const {
    for (const auto& r : raters)
        if (r.rater_id == rater_id) return &r;
    return nullptr;
}

const StudyItem* StudyPlan::find_item(const std::string& rater_id, const std::string& pair_id) const {
    const RaterPlan* r = find(rater_id);
    if (!r) return nullptr;
    for (const auto& it : r->items)
        if (it.pair_id == pair_id) return &it;
    return nullptr;
}

namespace {

struct ChosenSet {
    std::string single_prompt, cot, fb1, fb2;
};

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[uniform_index(rng, v.size())];
}

}  // namespace

StudyPlan build_assignment(const std::vector<std::string>& raters,
                           const std::vector<ViewPair>& pairs,
                           const std::map<std::string, std::vector<Compromise>>& candidates,
                           std::uint64_t seed, const StudyConfig& cfg) {
    if (raters.empty()) throw Error("build_assignment needs at least one rater");
    if (cfg.items_per_rater < 1) throw Error("items_per_rater must be >= 1");
    {
        std::set<std::string> unique(raters.begin(), raters.end());
        if (unique.size() != raters.size()) throw Error("duplicate rater ids");
    }
    StudyPlan plan;
    plan.seed = seed;
    Rng rng(seed);

    // Eligible pairs and their fixed compromise choices, in input order.
    std::vector<const ViewPair*> eligible;
    std::map<std::string, ChosenSet> chosen;
    for (const auto& p : pairs) {
        std::vector<std::string> sp, cot, fb;
        if (auto it = candidates.find(p.pair_id); it != candidates.end()) {
            for (const auto& c : it->second) {
                if (c.strategy == Strategy::single_prompt) sp.push_back(c.text);
                if (c.strategy == Strategy::cot) cot.push_back(c.text);
                if (c.strategy == Strategy::cot_feedback) fb.push_back(c.text);
            }
        }
        if (sp.empty() || cot.empty() || fb.size() < 2) {
            warn("pair " + p.pair_id +
                 " excluded from the study: needs one single-prompt, one CoT and two CoT+Feedback "
                 "compromises");
            plan.excluded_pairs.push_back(p.pair_id);
            continue;
        }
        ChosenSet cs;
        cs.single_prompt = pick(sp, rng);
        cs.cot = pick(cot, rng);
        const size_t i = uniform_index(rng, fb.size());
        size_t j = uniform_index(rng, fb.size() - 1);
        if (j >= i) ++j;
        cs.fb1 = fb[i];
        cs.fb2 = fb[j];
        chosen[p.pair_id] = cs;
        eligible.push_back(&p);
    }
    seeded_shuffle(eligible, rng);
    if (cfg.max_pairs && eligible.size() > *cfg.max_pairs) eligible.resize(*cfg.max_pairs);

    const size_t per = static_cast<size_t>(cfg.items_per_rater);
    if (eligible.size() < per)
        throw Error("only " + std::to_string(eligible.size()) + " eligible pairs; each rater needs " +
                    std::to_string(per));
    if (!cfg.reuse_pairs && eligible.size() < per * raters.size())
        throw Error("unique-pair mode needs " + std::to_string(per * raters.size()) +
                    " eligible pairs, have " + std::to_string(eligible.size()));

    // Balanced perspectives: alternate over a seeded permutation of raters.
    std::vector<size_t> order(raters.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    seeded_shuffle(order, rng);
    std::vector<Perspective> perspective(raters.size());
    for (size_t k = 0; k < order.size(); ++k)
        perspective[order[k]] = k % 2 == 0 ? Perspective::as_A : Perspective::as_B;

    for (size_t r = 0; r < raters.size(); ++r) {
        RaterPlan rp;
        rp.rater_id = raters[r];
        rp.perspective = perspective[r];
        for (size_t j = 0; j < per; ++j) {
            const ViewPair& p = *eligible[(r * per + j) % eligible.size()];
            const auto& cs = chosen.at(p.pair_id);
            const bool as_a = rp.perspective == Perspective::as_A;
            const Viewpoint& self = as_a ? p.view_a : p.view_b;
            const Viewpoint& other = as_a ? p.view_b : p.view_a;
            StudyItem item;
            item.pair_id = p.pair_id;
            item.story_self = render_view_text(self);
            item.story_other = render_view_text(other);
            item.suggestion_self = self.suggestions;
            item.suggestion_other = other.suggestions;
            std::vector<PresentedSlot> slots = {{0, other.suggestions, MethodLabel::opposing_view},
                                                {0, cs.single_prompt, MethodLabel::single_prompt},
                                                {0, cs.cot, MethodLabel::cot},
                                                {0, cs.fb1, MethodLabel::cot_fb_1},
                                                {0, cs.fb2, MethodLabel::cot_fb_2}};
            seeded_shuffle(slots, rng);
            for (size_t s = 0; s < slots.size(); ++s) slots[s].slot_id = static_cast<int>(s + 1);
            item.presented = std::move(slots);
            rp.items.push_back(std::move(item));
        }
        plan.raters.push_back(std::move(rp));
    }
    return plan;
}

json plan_to_json(const StudyPlan& plan) {
    json raters = json::array();
    for (const auto& r : plan.raters) {
        json items = json::array();
        for (const auto& it : r.items) {
            json slots = json::array();
            for (const auto& s : it.presented)
                slots.push_back({{"slot_id", s.slot_id}, {"text", s.text}, {"label", to_string(s.label)}});
            items.push_back({{"pair_id", it.pair_id},
                             {"story_self", it.story_self},
                             {"story_other", it.story_other},
                             {"suggestion_self", it.suggestion_self},
                             {"suggestion_other", it.suggestion_other},
                             {"slots", slots}});
        }
        raters.push_back(
            {{"rater_id", r.rater_id}, {"perspective", to_string(r.perspective)}, {"items", items}});
    }
    return {{"format_version", 1},
            {"seed", plan.seed},
            {"excluded_pairs", plan.excluded_pairs},
            {"raters", raters}};
}

StudyPlan plan_from_json(const json& j) {
    StudyPlan plan;
    plan.seed = j.at("seed");
    plan.excluded_pairs = j.at("excluded_pairs").get<std::vector<std::string>>();
    for (const auto& r : j.at("raters")) {
        RaterPlan rp;
        rp.rater_id = r.at("rater_id");
        rp.perspective = r.at("perspective") == "as_A" ? Perspective::as_A : Perspective::as_B;
        for (const auto& it : r.at("items")) {
            StudyItem item;
            item.pair_id = it.at("pair_id");
            item.story_self = it.at("story_self");
            item.story_other = it.at("story_other");
            item.suggestion_self = it.at("suggestion_self");
            item.suggestion_other = it.at("suggestion_other");
            for (const auto& s : it.at("slots"))
                item.presented.push_back(
                    {s.at("slot_id"), s.at("text"), method_label_from_string(s.at("label"))});
            rp.items.push_back(std::move(item));
        }
        plan.raters.push_back(std::move(rp));
    }
    return plan;
}

json blinded_item(const StudyItem& item) {
    json slots = json::array();
    for (const auto& s : item.presented) slots.push_back({{"slot_id", s.slot_id}, {"text", s.text}});
    return {{"pair_id", item.pair_id},
            {"person_a_story", item.story_self},
            {"person_b_story", item.story_other},
            {"person_a_suggestion", item.suggestion_self},
            {"person_b_suggestion", item.suggestion_other},
            {"suggestions", slots}};
}

json to_json(const RatingRecord& r) {
    return {{"rater_id", r.rater_id},
            {"pair_id", r.pair_id},
            {"slot_id", r.slot_id},
            {"rating", r.rating},
            {"timestamp", r.timestamp}};
}

RatingRecord rating_from_json(const json& j) {
    RatingRecord r;
    r.rater_id = j.at("rater_id").get<std::string>();
    r.pair_id = j.at("pair_id").get<std::string>();
    r.slot_id = j.at("slot_id").get<int>();
    const auto& rating = j.at("rating");
    if (!rating.is_number_integer()) throw Error("rating must be an integer in [1, 100]");
    r.rating = rating.get<int>();
    if (j.contains("timestamp") && j["timestamp"].is_string()) r.timestamp = j["timestamp"];
    return r;
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

RatingStore::RatingStore(const StudyPlan& plan, std::optional<std::filesystem::path> log_path,
                         Clock clock)
    : plan_(plan), log_path_(std::move(log_path)), clock_(std::move(clock)) {
    if (!clock_) clock_ = utc_now;
    if (log_path_ && std::filesystem::exists(*log_path_)) {
        std::ifstream in(*log_path_);
        std::string raw;
        size_t line = 0;
        while (std::getline(in, raw)) {
            ++line;
            if (trim(raw).empty()) continue;
            try {
                apply(rating_from_json(json::parse(raw)));
            } catch (const std::exception& e) {
                throw Error(log_path_->string() + ": line " + std::to_string(line) + ": " + e.what());
            }
        }
    }
}

void RatingStore::apply(const RatingRecord& r) {
    const StudyItem* item = plan_.find_item(r.rater_id, r.pair_id);
    if (!item)
        throw Error("unknown slot: rater '" + r.rater_id + "' has no item for pair '" + r.pair_id +
                    "'");
    const bool slot_ok = std::any_of(item->presented.begin(), item->presented.end(),
                                     [&](const PresentedSlot& s) { return s.slot_id == r.slot_id; });
    if (!slot_ok) throw Error("unknown slot " + std::to_string(r.slot_id) + " for pair " + r.pair_id);
    if (r.rating < 1 || r.rating > 100)
        throw Error("rating " + std::to_string(r.rating) + " outside [1, 100]");
    log_.push_back(r);
    latest_[{r.rater_id, r.pair_id, r.slot_id}] = log_.size() - 1;
}

RatingAck RatingStore::record(RatingRecord r) {
    std::lock_guard lock(mutex_);
    if (r.timestamp.empty()) r.timestamp = clock_();
    const auto key = std::make_tuple(r.rater_id, r.pair_id, r.slot_id);
    const bool superseded = latest_.count(key) > 0;
    {
        // Validate before touching the log file.
        const StudyItem* item = plan_.find_item(r.rater_id, r.pair_id);
        if (!item)
            throw Error("unknown slot: rater '" + r.rater_id + "' has no item for pair '" +
                        r.pair_id + "'");
        if (r.rating < 1 || r.rating > 100)
            throw Error("rating " + std::to_string(r.rating) + " outside [1, 100]");
    }
    const size_t before = log_.size();
    apply(r);
    if (log_path_) {
        std::ofstream out(*log_path_, std::ios::app | std::ios::binary);
        out << to_json(r).dump() << '\n';
        out.flush();
        if (!out) {
            log_.resize(before);
            throw Error("failed to append rating to " + log_path_->string());
        }
    }
    return {superseded, log_.size()};
}

std::vector<RatingRecord> RatingStore::latest() const {
    std::lock_guard lock(mutex_);
    std::vector<size_t> idx;
    for (const auto& [k, i] : latest_) idx.push_back(i);
    std::sort(idx.begin(), idx.end());
    std::vector<RatingRecord> out;
    for (size_t i : idx) out.push_back(log_[i]);
    return out;
}

std::vector<RatingRecord> RatingStore::audit_log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

std::size_t RatingStore::rated_slots(const std::string& rater_id) const {
    std::lock_guard lock(mutex_);
    size_t n = 0;
    for (const auto& [k, i] : latest_)
        if (std::get<0>(k) == rater_id) ++n;
    return n;
}

bool RatingStore::item_complete(const std::string& rater_id, const StudyItem& item) const {
    std::lock_guard lock(mutex_);
    for (const auto& s : item.presented)
        if (!latest_.count({rater_id, item.pair_id, s.slot_id})) return false;
    return true;
}

std::vector<ItemOutcome> item_outcomes(const std::vector<RatingRecord>& ratings,
                                       const StudyPlan& plan, bool exclude_incomplete) {
    // Later records supersede earlier ones, so a raw log can be passed directly.
    std::map<std::tuple<std::string, std::string, int>, int> value;
    for (const auto& r : ratings) value[{r.rater_id, r.pair_id, r.slot_id}] = r.rating;

    std::vector<ItemOutcome> out;
    for (const auto& rater : plan.raters) {
        std::vector<ItemOutcome> mine;
        bool complete = true;
        for (const auto& item : rater.items) {
            std::vector<std::pair<MethodLabel, int>> rated;
            for (const auto& s : item.presented) {
                auto it = value.find({rater.rater_id, item.pair_id, s.slot_id});
                if (it != value.end()) rated.emplace_back(s.label, it->second);
            }
            if (rated.size() != item.presented.size()) {
                complete = false;
                continue;
            }
            ItemOutcome o;
            o.rater_id = rater.rater_id;
            o.pair_id = item.pair_id;
            std::stable_sort(rated.begin(), rated.end(),
                             [](const auto& a, const auto& b) { return a.second > b.second; });
            for (size_t i = 0; i < rated.size();) {
                size_t j = i;
                while (j + 1 < rated.size() && rated[j + 1].second == rated[i].second) ++j;
                const double group = static_cast<double>(j - i + 1);
                const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
                for (size_t k = i; k <= j; ++k) {
                    const MethodLabel label = rated[k].first;
                    o.rating[label] = rated[k].second;
                    o.rank[label] = avg_rank;
                    o.first_credit[label] = (i == 0) ? 1.0 / group : 0.0;
                    o.second_credit[label] = (i <= 1 && j >= 1) ? 1.0 / group : 0.0;
                }
                i = j + 1;
            }
            mine.push_back(std::move(o));
        }
        if (exclude_incomplete && !complete) continue;
        out.insert(out.end(), mine.begin(), mine.end());
    }
    return out;
}

PreferenceTable derive_preferences(const std::vector<RatingRecord>& ratings, const StudyPlan& plan,
                                   bool exclude_incomplete) {
    const auto outcomes = item_outcomes(ratings, plan, exclude_incomplete);
    PreferenceTable t;
    t.cells = outcomes.size();
    std::map<MethodLabel, double> second;
    for (MethodLabel m : kAllLabels) {
        t.first_pref_count[m] = 0.0;
        second[m] = 0.0;
    }
    for (const auto& o : outcomes) {
        for (const auto& [m, c] : o.first_credit) t.first_pref_count[m] += c;
        for (const auto& [m, c] : o.second_credit) second[m] += c;
    }
    for (MethodLabel m : kAllLabels) {
        const double denom = t.cells ? static_cast<double>(t.cells) : 1.0;
        t.first_pref_pct[m] = 100.0 * t.first_pref_count[m] / denom;
        t.second_pref_pct[m] = 100.0 * second[m] / denom;
    }
    return t;
}

json to_json(const PreferenceTable& t) {
    json rows = json::object();
    for (MethodLabel m : kAllLabels)
        rows[to_string(m)] = {{"first_pref_pct", t.first_pref_pct.at(m)},
                              {"second_pref_pct", t.second_pref_pct.at(m)},
                              {"first_pref_count", t.first_pref_count.at(m)}};
    return {{"cells", t.cells}, {"methods", rows}};
}

}  // namespace compromise
