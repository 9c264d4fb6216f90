#include <doctest.h>

#include <filesystem>
#include <set>

#include "compromise/diagnostics.hpp"
#include "compromise/study_protocol.hpp"

using namespace compromise;
namespace fs = std::filesystem;

namespace {

ViewPair make_pair(int i) {
    ViewPair p;
    p.pair_id = "pair-" + std::to_string(i);
    p.topic = i % 2 ? Topic::safe : Topic::welcome;
    p.view_a = {"the park " + std::to_string(i), "it is bright", "more lamps " + std::to_string(i),
                Polarity::positive, p.topic, {}};
    p.view_b = {"the park " + std::to_string(i), "it is dark", "more patrols " + std::to_string(i),
                Polarity::negative, p.topic, {}};
    return p;
}

struct Fixture {
    std::vector<ViewPair> pairs;
    std::map<std::string, std::vector<Compromise>> candidates;

    explicit Fixture(int n) {
        for (int i = 0; i < n; ++i) {
            pairs.push_back(make_pair(i));
            const auto id = pairs.back().pair_id;
            auto& c = candidates[id];
            c.push_back({"alpha " + id, id, Strategy::single_prompt, 0, {}});
            c.push_back({"beta " + id, id, Strategy::cot, 0, {}});
            c.push_back({"gamma one " + id, id, Strategy::cot_feedback, 1, {}});
            c.push_back({"gamma two " + id, id, Strategy::cot_feedback, 2, {}});
        }
    }
};

std::vector<std::string> rater_ids(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("r" + std::to_string(i));
    return out;
}

// Rates every slot of every item; `fn` maps a label to its rating.
template <class F>
void rate_all(RatingStore& store, const StudyPlan& plan, F fn) {
    for (const auto& r : plan.raters)
        for (const auto& item : r.items)
            for (const auto& s : item.presented) store.record({r.rater_id, item.pair_id, s.slot_id, fn(s.label), ""});
}

}  // namespace

TEST_CASE("fifty raters are balanced over one hundred pairs") {
    Fixture f(120);
    StudyConfig cfg;
    cfg.max_pairs = 100;
    const auto plan = build_assignment(rater_ids(50), f.pairs, f.candidates, 1, cfg);
    REQUIRE(plan.raters.size() == 50);
    int as_a = 0;
    std::set<std::string> distinct;
    for (const auto& r : plan.raters) {
        as_a += r.perspective == Perspective::as_A;
        CHECK(r.items.size() == 5);
        std::set<std::string> mine;
        for (const auto& item : r.items) {
            distinct.insert(item.pair_id);
            mine.insert(item.pair_id);
            REQUIRE(item.presented.size() == 5);
            std::multiset<MethodLabel> labels;
            for (const auto& s : item.presented) labels.insert(s.label);
            CHECK(labels == std::multiset<MethodLabel>(std::begin(kAllLabels), std::end(kAllLabels)));
            for (const auto& s : item.presented)
                if (s.label == MethodLabel::opposing_view) CHECK(s.text == item.suggestion_other);
        }
        CHECK(mine.size() == 5);
    }
    CHECK(as_a == 25);
    CHECK(distinct.size() == 100);
}

TEST_CASE("odd rater counts differ by at most one") {
    Fixture f(10);
    const auto plan = build_assignment(rater_ids(7), f.pairs, f.candidates, 5);
    int as_a = 0;
    for (const auto& r : plan.raters) as_a += r.perspective == Perspective::as_A;
    CHECK((as_a == 3 || as_a == 4));
}

TEST_CASE("one rater gets five items") {
    Fixture f(5);
    const auto plan = build_assignment({"solo"}, f.pairs, f.candidates, 2);
    REQUIRE(plan.raters.size() == 1);
    CHECK(plan.raters[0].items.size() == 5);
}

TEST_CASE("plans are deterministic and slot order varies") {
    Fixture f(20);
    const auto a = build_assignment(rater_ids(10), f.pairs, f.candidates, 3);
    const auto b = build_assignment(rater_ids(10), f.pairs, f.candidates, 3);
    CHECK(plan_to_json(a).dump() == plan_to_json(b).dump());
    const auto c = build_assignment(rater_ids(10), f.pairs, f.candidates, 4);
    CHECK(plan_to_json(a).dump() != plan_to_json(c).dump());

    std::set<int> opposing_slots;
    for (const auto& r : a.raters)
        for (const auto& item : r.items)
            for (const auto& s : item.presented)
                if (s.label == MethodLabel::opposing_view) opposing_slots.insert(s.slot_id);
    CHECK(opposing_slots.size() > 1);

    CHECK(plan_to_json(plan_from_json(plan_to_json(a))).dump() == plan_to_json(a).dump());
}

TEST_CASE("pairs without enough candidates are excluded with a warning") {
    Fixture f(6);
    f.candidates["pair-0"].pop_back();
    WarningCapture w;
    const auto plan = build_assignment({"x"}, f.pairs, f.candidates, 1);
    CHECK(plan.excluded_pairs == std::vector<std::string>{"pair-0"});
    CHECK(w.messages().size() == 1);
    for (const auto& item : plan.raters[0].items) CHECK(item.pair_id != "pair-0");
}

TEST_CASE("blinded items carry no method labels") {
    Fixture f(5);
    const auto plan = build_assignment({"x"}, f.pairs, f.candidates, 1);
    for (const auto& item : plan.raters[0].items) {
        const auto s = blinded_item(item).dump();
        for (MethodLabel m : kAllLabels) CHECK(s.find(to_string(m)) == std::string::npos);
        CHECK(s.find("label") == std::string::npos);
    }
}

TEST_CASE("recording ratings") {
    Fixture f(5);
    const auto plan = build_assignment({"x"}, f.pairs, f.candidates, 1);
    RatingStore store(plan, std::nullopt, [] { return std::string("t"); });
    const auto& item = plan.raters[0].items[0];

    const auto ack = store.record({"x", item.pair_id, 1, 73, ""});
    CHECK_FALSE(ack.superseded);
    REQUIRE(store.latest().size() == 1);
    CHECK(store.latest()[0].rating == 73);
    CHECK(store.latest()[0].timestamp == "t");

    CHECK_THROWS_AS(store.record({"x", item.pair_id, 2, 0, ""}), Error);
    CHECK_THROWS_AS(store.record({"x", item.pair_id, 2, 101, ""}), Error);
    CHECK_THROWS_AS(store.record({"x", item.pair_id, 6, 50, ""}), Error);
    CHECK_THROWS_AS(store.record({"nobody", item.pair_id, 1, 50, ""}), Error);
    CHECK_THROWS_AS(store.record({"x", "pair-none", 1, 50, ""}), Error);

    CHECK(store.record({"x", item.pair_id, 1, 40, ""}).superseded);
    CHECK(store.latest().size() == 1);
    CHECK(store.latest()[0].rating == 40);
    CHECK(store.audit_log().size() == 2);
    CHECK(store.rated_slots("x") == 1);
}

TEST_CASE("first preference goes to the top-rated label") {
    Fixture f(5);
    const auto plan = build_assignment({"x"}, f.pairs, f.candidates, 1);
    RatingStore store(plan);
    rate_all(store, plan, [](MethodLabel m) {
        switch (m) {
            case MethodLabel::cot_fb_1: return 100;
            case MethodLabel::cot_fb_2: return 50;
            case MethodLabel::cot: return 40;
            case MethodLabel::single_prompt: return 30;
            default: return 20;
        }
    });
    const auto t = derive_preferences(store.latest(), plan);
    CHECK(t.cells == 5);
    CHECK(t.first_pref_pct.at(MethodLabel::cot_fb_1) == 100.0);
    CHECK(t.second_pref_pct.at(MethodLabel::cot_fb_2) == 100.0);
    CHECK(t.first_pref_pct.at(MethodLabel::opposing_view) == 0.0);
}

TEST_CASE("ties split preference credit") {
    Fixture f(5);
    StudyConfig cfg;
    cfg.items_per_rater = 1;
    const auto plan = build_assignment({"x"}, f.pairs, f.candidates, 1, cfg);
    RatingStore store(plan);
    rate_all(store, plan, [](MethodLabel m) {
        return (m == MethodLabel::cot || m == MethodLabel::cot_fb_2) ? 90 : 10;
    });
    const auto t = derive_preferences(store.latest(), plan);
    CHECK(t.first_pref_count.at(MethodLabel::cot) == 0.5);
    CHECK(t.first_pref_count.at(MethodLabel::cot_fb_2) == 0.5);
    CHECK(t.second_pref_pct.at(MethodLabel::cot) == 50.0);
    double sum = 0;
    for (const auto& [m, c] : t.first_pref_count) sum += c;
    CHECK(sum == doctest::Approx(static_cast<double>(t.cells)));
}

TEST_CASE("incomplete raters are excluded by default") {
    Fixture f(10);
    const auto plan = build_assignment({"a", "b"}, f.pairs, f.candidates, 1);
    RatingStore store(plan);
    rate_all(store, plan, [](MethodLabel m) { return m == MethodLabel::cot ? 80 : 20; });
    // A second store where rater b misses one slot.
    RatingStore partial(plan);
    for (const auto& r : store.latest())
        if (!(r.rater_id == "b" && r.slot_id == 1 && r.pair_id == plan.raters[1].items[0].pair_id))
            partial.record(r);
    CHECK(derive_preferences(partial.latest(), plan).cells == 5);
    CHECK(derive_preferences(partial.latest(), plan, false).cells == 9);
    CHECK(derive_preferences(store.latest(), plan).cells == 10);
}

TEST_CASE("replaying the rating log reproduces the table") {
    Fixture f(10);
    const auto plan = build_assignment(rater_ids(4), f.pairs, f.candidates, 8);
    const auto log = fs::temp_directory_path() / "compromise_ratings_test.jsonl";
    fs::remove(log);
    nlohmann::json before;
    {
        RatingStore store(plan, log);
        int k = 0;
        rate_all(store, plan, [&](MethodLabel) { return 1 + (k++ * 37) % 100; });
        store.record({"r0", plan.raters[0].items[0].pair_id, 2, 99, ""});
        before = to_json(derive_preferences(store.latest(), plan));
    }
    RatingStore replay(plan, log);
    CHECK(to_json(derive_preferences(replay.latest(), plan)).dump() == before.dump());
    CHECK(to_json(derive_preferences(replay.audit_log(), plan)).dump() == before.dump());
    fs::remove(log);
}
