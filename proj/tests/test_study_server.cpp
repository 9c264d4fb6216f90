#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <thread>

#include "compromise/study_server.hpp"

#include <httplib.h>

using namespace compromise;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ViewPair make_pair(int i) {
    ViewPair p;
    p.pair_id = "pair-" + std::to_string(i);
    p.topic = Topic::safe;
    p.view_a = {"the square", "it is lively", "benches " + std::to_string(i), Polarity::positive, Topic::safe, {}};
    p.view_b = {"the square", "it is empty", "guards " + std::to_string(i), Polarity::negative, Topic::safe, {}};
    return p;
}

StudyPlan small_plan() {
    std::vector<ViewPair> pairs;
    std::map<std::string, std::vector<Compromise>> cands;
    for (int i = 0; i < 5; ++i) {
        pairs.push_back(make_pair(i));
        const auto id = pairs.back().pair_id;
        cands[id] = {{"alpha", id, Strategy::single_prompt, 0, {}},
                     {"beta", id, Strategy::cot, 0, {}},
                     {"gamma", id, Strategy::cot_feedback, 1, {}},
                     {"delta", id, Strategy::cot_feedback, 2, {}}};
    }
    return build_assignment({"r1", "r2"}, pairs, cands, 4);
}

void check_blinded(const json& j) {
    const auto s = j.dump();
    for (MethodLabel m : kAllLabels) CHECK(s.find("\"" + to_string(m) + "\"") == std::string::npos);
    CHECK(s.find("label") == std::string::npos);
}

}  // namespace

TEST_CASE("handlers walk a rater through the study") {
    const auto plan = small_plan();
    RatingStore store(plan);
    StudyServer server(plan, store, load_instructions(default_instructions_path()));

    auto next = server.next_item("r1");
    CHECK(next["done"] == false);
    CHECK(next["item_index"] == 0);
    CHECK(next["item"]["suggestions"].size() == 5);
    check_blinded(next);

    for (int item = 0; item < 5; ++item) {
        next = server.next_item("r1");
        REQUIRE(next["done"] == false);
        check_blinded(next);
        for (const auto& s : next["item"]["suggestions"]) {
            const auto ack = server.submit_rating(
                {{"rater_id", "r1"}, {"pair_id", next["item"]["pair_id"]}, {"slot_id", s["slot_id"]}, {"rating", 60}});
            CHECK(ack["status"] == "stored");
        }
    }
    CHECK(server.next_item("r1")["done"] == true);
    const auto prog = server.progress("r1");
    CHECK(prog["completed_items"] == 5);
    CHECK(prog["rated_slots"] == 25);
    CHECK(server.progress("r2")["completed_items"] == 0);
}

TEST_CASE("handler errors carry HTTP statuses") {
    const auto plan = small_plan();
    RatingStore store(plan);
    StudyServer server(plan, store, json::object());
    const auto pair = plan.raters[0].items[0].pair_id;

    auto status_of = [](auto&& fn) {
        try {
            fn();
        } catch (const HttpError& e) {
            return e.status();
        }
        return 200;
    };
    CHECK(status_of([&] { server.next_item("ghost"); }) == 404);
    CHECK(status_of([&] {
              server.submit_rating({{"rater_id", "r1"}, {"pair_id", pair}, {"slot_id", 1}, {"rating", 0}});
          }) == 422);
    CHECK(status_of([&] {
              server.submit_rating({{"rater_id", "r1"}, {"pair_id", pair}, {"slot_id", 1}, {"rating", 5.5}});
          }) == 400);
    CHECK(status_of([&] { server.submit_rating({{"rater_id", "r1"}}); }) == 400);
    CHECK(status_of([&] { server.submit_demographics({{"rater_id", "r1"}, {"answers", 3}}); }) == 400);
}

TEST_CASE("demographics are stored once submitted") {
    const auto plan = small_plan();
    RatingStore store(plan);
    const auto log = fs::temp_directory_path() / "compromise_demo_test.jsonl";
    fs::remove(log);
    {
        StudyServer server(plan, store, json::object(), log);
        server.submit_demographics({{"rater_id", "r2"}, {"answers", {{"age", "25-34"}}}});
        CHECK(server.progress("r2")["demographics_submitted"] == true);
    }
    StudyServer again(plan, store, json::object(), log);
    CHECK(again.progress("r2")["demographics_submitted"] == true);
    CHECK(again.progress("r1")["demographics_submitted"] == false);
    fs::remove(log);
}

TEST_CASE("the HTTP API serves concurrent raters on localhost") {
    const auto plan = small_plan();
    RatingStore store(plan);
    const auto instructions = load_instructions(default_instructions_path());
    StudyServer server(plan, store, instructions);
    const int port = server.bind("127.0.0.1", 0);
    std::thread t([&] { server.listen(); });
    for (int i = 0; i < 200; ++i) {
        httplib::Client probe("127.0.0.1", port);
        if (probe.Get("/api/instructions")) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    httplib::Client cli("127.0.0.1", port);
    auto res = cli.Get("/api/instructions");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto instr = json::parse(res->body);
    CHECK(instr["welcome"].get<std::string>().rfind("Welcome to the study.", 0) == 0);
    CHECK(instr == instructions);

    CHECK(cli.Get("/api/session/ghost/next")->status == 404);

    auto run_rater = [&](const std::string& rater) {
        httplib::Client c("127.0.0.1", port);
        for (;;) {
            auto r = c.Get("/api/session/" + rater + "/next");
            REQUIRE(r);
            const auto j = json::parse(r->body);
            check_blinded(j);
            if (j["done"] == true) break;
            for (const auto& s : j["item"]["suggestions"]) {
                const json body = {{"rater_id", rater},
                                   {"pair_id", j["item"]["pair_id"]},
                                   {"slot_id", s["slot_id"]},
                                   {"rating", 10 + s["slot_id"].get<int>()}};
                auto p = c.Post("/api/rating", body.dump(), "application/json");
                REQUIRE(p);
                CHECK(p->status == 200);
            }
        }
    };
    std::thread a(run_rater, "r1"), b(run_rater, "r2");
    a.join();
    b.join();

    auto bad = cli.Post("/api/rating", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    auto demo = cli.Post("/api/demographics", json{{"rater_id", "r1"}, {"answers", json::object()}}.dump(),
                         "application/json");
    REQUIRE(demo);
    CHECK(demo->status == 200);

    auto prog = json::parse(cli.Get("/api/session/r2/progress")->body);
    CHECK(prog["completed_items"] == 5);
    CHECK(store.latest().size() == 50);
    CHECK(derive_preferences(store.latest(), plan).cells == 10);

    server.stop();
    t.join();
}
