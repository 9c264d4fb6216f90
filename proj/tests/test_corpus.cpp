#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "compromise/corpus.hpp"
#include "compromise/diagnostics.hpp"
#include "compromise/random.hpp"

#include <json.hpp>

using namespace compromise;
namespace fs = std::filesystem;

namespace {

const fs::path kPairs = fs::path(TEST_DATA_DIR) / "fixtures" / "view_pairs_example.jsonl";
const fs::path kStories = fs::path(TEST_DATA_DIR) / "fixtures" / "story_pairs_example.jsonl";

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

ViewPair simple_pair(const std::string& id) {
    ViewPair p;
    p.pair_id = id;
    p.topic = Topic::safe;
    p.view_a = {"park", "lights", "cameras", Polarity::positive, Topic::safe, {}};
    p.view_b = {"alley", "dark", "lamps", Polarity::negative, Topic::safe, {}};
    return p;
}

}  // namespace

TEST_CASE("fixture file loads in order") {
    const auto pairs = load_view_pairs(kPairs);
    REQUIRE(pairs.size() == 5);
    CHECK(pairs[0].pair_id == "park-safe-001");
    CHECK(pairs[1].pair_id == "church-welcome-002");
    CHECK(pairs[1].topic == Topic::welcome);
    CHECK(pairs[0].view_a.polarity == Polarity::positive);
    CHECK(pairs[0].view_b.polarity == Polarity::negative);
    CHECK(pairs[0].view_a.demographics.at("age") == "35-44");
}

TEST_CASE("appendix park viewpoint renders to its printed paragraph") {
    const auto pairs = load_view_pairs(kPairs);
    const std::string expected =
        "I am writing about this place: A nearby park. I feel safe here because I feel safe here "
        "when others are around. There's a good sense of community. Some ways this place could be "
        "modified to be safer are: There's no fences, gates, no visitor check, and it's extremely "
        "open. This is good and bad.";
    CHECK(render_view_text(pairs[0].view_a) == expected);
    CHECK(render_view_text(pairs[0].view_a) == render_view_text(pairs[0].view_a));
}

TEST_CASE("single-word fields slot into the template") {
    Viewpoint v{"Park", "lights", "cameras", Polarity::positive, Topic::safe, {}};
    CHECK(render_view_text(v) ==
          "I am writing about this place: Park I feel safe here because lights Some ways this "
          "place could be modified to be safer are: cameras");
    v.polarity = Polarity::negative;
    CHECK(render_view_text(v) ==
          "I am writing about this place: Park I feel safety could be improved here because "
          "lights Some ways this place could be modified to be safer are: cameras");
    v.topic = Topic::welcome;
    CHECK(render_view_text(v) ==
          "I am writing about this place: Park I feel excluded by others for who I am in this "
          "location because lights Some ways this place could be modified to be less excluding "
          "and more welcoming are: cameras");
    v.polarity = Polarity::positive;
    CHECK(render_view_text(v) ==
          "I am writing about this place: Park I feel welcomed by others for who I am in this "
          "location because lights Some ways this place could be modified to be more welcoming "
          "are: cameras");
}

TEST_CASE("demographics are appended only on request") {
    const auto pairs = load_view_pairs(kPairs);
    const auto plain = render_view_text(pairs[0].view_a);
    const auto with = render_view_text(pairs[0].view_a, true);
    CHECK(with == plain + " About me: age: 35-44, gender: female.");
    CHECK(render_view_text(pairs[1].view_a, true) == render_view_text(pairs[1].view_a));
}

TEST_CASE("rendering separates distinct field triples") {
    Viewpoint a{"a b", "c", "d", Polarity::positive, Topic::safe, {}};
    Viewpoint b{"a", "b c", "d", Polarity::positive, Topic::safe, {}};
    CHECK(render_view_text(a) != render_view_text(b));
}

TEST_CASE("missing reason names the field and the line") {
    const std::string good = view_pair_to_line(simple_pair("p1"));
    auto bad = nlohmann::json::parse(view_pair_to_line(simple_pair("p2")));
    bad["view_a"].erase("reason");
    const auto msg = error_of([&] { parse_view_pairs(good + "\n" + bad.dump() + "\n"); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("view_a.reason") != std::string::npos);
}

TEST_CASE("duplicate pair ids are rejected") {
    const std::string line = view_pair_to_line(simple_pair("same"));
    const auto msg = error_of([&] { parse_view_pairs(line + "\n" + line + "\n"); });
    CHECK(msg.find("duplicate pair_id") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("empty input and blank lines") {
    CHECK(parse_view_pairs("").empty());
    const std::string line = view_pair_to_line(simple_pair("x"));
    CHECK(parse_view_pairs("\n" + line + "\n\n").size() == 1);
}

TEST_CASE("malformed JSON cites its line") {
    const auto msg = error_of([] { parse_view_pairs("{not json\n"); });
    CHECK(msg.find("line 1") != std::string::npos);
}

TEST_CASE("invariants: polarity and topic") {
    auto p = simple_pair("bad");
    p.view_a.polarity = Polarity::negative;
    CHECK_THROWS_AS(validate(p), Error);
    p = simple_pair("bad");
    p.view_b.topic = Topic::welcome;
    CHECK_THROWS_AS(validate(p), Error);
    p = simple_pair("bad");
    p.view_b.reason = "";
    CHECK_THROWS_AS(validate(p), Error);
}

TEST_CASE("write then load reproduces every field") {
    const auto pairs = load_view_pairs(kPairs);
    const auto tmp = fs::temp_directory_path() / "compromise_roundtrip.jsonl";
    write_view_pairs(tmp, pairs);
    const auto again = load_view_pairs(tmp);
    REQUIRE(again.size() == pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        CHECK(view_pair_to_line(again[i]) == view_pair_to_line(pairs[i]));
        CHECK(again[i].view_a.demographics == pairs[i].view_a.demographics);
    }
    fs::remove(tmp);
}

TEST_CASE("story pairs normalise by the declared scale") {
    const auto stories = load_story_pairs(kStories, 5.0);
    REQUIRE(stories.size() == 6);
    CHECK(stories[0].empathy_rating == doctest::Approx(0.9));
    CHECK(stories[1].empathy_rating == doctest::Approx(0.2));
    CHECK_THROWS_AS(load_story_pairs(kStories, 1.0), Error);

    const auto tmp = fs::temp_directory_path() / "compromise_stories.jsonl";
    write_story_pairs(tmp, stories);
    const auto again = load_story_pairs(tmp);
    REQUIRE(again.size() == stories.size());
    for (size_t i = 0; i < stories.size(); ++i) {
        CHECK(again[i].text_1 == stories[i].text_1);
        CHECK(again[i].empathy_rating == stories[i].empathy_rating);
    }
    fs::remove(tmp);
}

namespace {

std::vector<std::string> ids(size_t n) {
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) out.push_back("id" + std::to_string(i));
    return out;
}

}  // namespace

TEST_CASE("split sizes follow floor allocation with remainder to train") {
    auto s = split_dataset(ids(3000), {0.75, 0.05, 0.20}, 1);
    CHECK(s.train.size() == 2250);
    CHECK(s.dev.size() == 150);
    CHECK(s.test.size() == 600);
    s = split_dataset(ids(7), {0.75, 0.05, 0.20}, 1);
    CHECK(s.train.size() == 6);
    CHECK(s.dev.size() == 0);
    CHECK(s.test.size() == 1);
}

TEST_CASE("split is deterministic per seed") {
    const auto a = split_dataset(ids(50), {0.75, 0.05, 0.20}, 9);
    const auto b = split_dataset(ids(50), {0.75, 0.05, 0.20}, 9);
    const auto c = split_dataset(ids(50), {0.75, 0.05, 0.20}, 10);
    CHECK(a.train == b.train);
    CHECK(a.dev == b.dev);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
}

TEST_CASE("split ratios must sum to one") {
    CHECK_THROWS_AS(split_dataset(ids(10), {0.5, 0.2, 0.2}, 0), Error);
}

TEST_CASE("split partitions random id sets") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const size_t n = uniform_index(rng, 300);
        const auto all = ids(n);
        const auto s = split_dataset(all, {0.75, 0.05, 0.20}, rng());
        std::multiset<std::string> seen;
        for (const auto* part : {&s.train, &s.dev, &s.test}) seen.insert(part->begin(), part->end());
        CHECK(seen.size() == n);
        CHECK(std::set<std::string>(seen.begin(), seen.end()) ==
              std::set<std::string>(all.begin(), all.end()));
    }
}
