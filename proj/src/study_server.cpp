#include "compromise/study_server.hpp"

#include <fstream>
#include <mutex>
#include <set>

#include <httplib.h>

namespace compromise {

using nlohmann::json;

std::filesystem::path default_instructions_path() {
    return std::filesystem::path(COMPROMISE_RESOURCE_DIR) / "instructions.json";
}

json load_instructions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open instructions resource " + path.string());
    return json::parse(in);
}

struct StudyServer::Impl {
    const StudyPlan& plan;
    RatingStore& store;
    json instructions;
    std::optional<std::filesystem::path> demographics_log;
    std::mutex demo_mutex;
    std::set<std::string> demographics_done;
    httplib::Server http;

    Impl(const StudyPlan& p, RatingStore& s, json instr, std::optional<std::filesystem::path> demo)
        : plan(p), store(s), instructions(std::move(instr)), demographics_log(std::move(demo)) {}
};

StudyServer::StudyServer(const StudyPlan& plan, RatingStore& store, json instructions,
                         std::optional<std::filesystem::path> demographics_log)
    : impl_(std::make_unique<Impl>(plan, store, std::move(instructions),
                                   std::move(demographics_log))) {
    if (impl_->demographics_log && std::filesystem::exists(*impl_->demographics_log)) {
        std::ifstream in(*impl_->demographics_log);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) impl_->demographics_done.insert(json::parse(line).at("rater_id"));
    }

    auto reply = [](httplib::Response& res, const json& body, int status = 200) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    auto guarded = [reply](auto fn) {
        return [fn, reply](const httplib::Request& req, httplib::Response& res) {
            try {
                reply(res, fn(req));
            } catch (const HttpError& e) {
                reply(res, {{"error", e.what()}}, e.status());
            } catch (const json::exception& e) {
                reply(res, {{"error", std::string("malformed request: ") + e.what()}}, 400);
            } catch (const Error& e) {
                reply(res, {{"error", e.what()}}, 400);
            }
        };
    };

    auto& http = impl_->http;
    http.Get("/api/instructions",
             guarded([this](const httplib::Request&) { return impl_->instructions; }));
    http.Get(R"(/api/session/([^/]+)/next)", guarded([this](const httplib::Request& req) {
                 return next_item(req.matches[1].str());
             }));
    http.Get(R"(/api/session/([^/]+)/progress)", guarded([this](const httplib::Request& req) {
                 return progress(req.matches[1].str());
             }));
    http.Post("/api/rating", guarded([this](const httplib::Request& req) {
                  return submit_rating(json::parse(req.body));
              }));
    http.Post("/api/demographics", guarded([this](const httplib::Request& req) {
                  return submit_demographics(json::parse(req.body));
              }));
}

StudyServer::~StudyServer() { stop(); }

int StudyServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int p = impl_->http.bind_to_any_port(host);
        if (p < 0) throw Error("cannot bind " + host);
        return p;
    }
    if (!impl_->http.bind_to_port(host, port))
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void StudyServer::listen() { impl_->http.listen_after_bind(); }

void StudyServer::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

json StudyServer::next_item(const std::string& rater_id) const {
    const RaterPlan* rp = impl_->plan.find(rater_id);
    if (!rp) throw HttpError(404, "unknown rater '" + rater_id + "'");
    for (size_t i = 0; i < rp->items.size(); ++i) {
        if (!impl_->store.item_complete(rater_id, rp->items[i])) {
            return {{"done", false},
                    {"rater_id", rater_id},
                    {"item_index", i},
                    {"total_items", rp->items.size()},
                    {"item", blinded_item(rp->items[i])}};
        }
    }
    std::lock_guard lock(impl_->demo_mutex);
    return {{"done", true},
            {"rater_id", rater_id},
            {"total_items", rp->items.size()},
            {"demographics_submitted", impl_->demographics_done.count(rater_id) > 0}};
}

json StudyServer::progress(const std::string& rater_id) const {
    const RaterPlan* rp = impl_->plan.find(rater_id);
    if (!rp) throw HttpError(404, "unknown rater '" + rater_id + "'");
    size_t complete = 0, slots = 0;
    for (const auto& item : rp->items) {
        slots += item.presented.size();
        if (impl_->store.item_complete(rater_id, item)) ++complete;
    }
    std::lock_guard lock(impl_->demo_mutex);
    return {{"rater_id", rater_id},
            {"completed_items", complete},
            {"total_items", rp->items.size()},
            {"rated_slots", impl_->store.rated_slots(rater_id)},
            {"total_slots", slots},
            {"demographics_submitted", impl_->demographics_done.count(rater_id) > 0}};
}

json StudyServer::submit_rating(const json& body) {
    RatingRecord r;
    try {
        r = rating_from_json(body);
    } catch (const std::exception& e) {
        throw HttpError(400, e.what());
    }
    if (!impl_->plan.find(r.rater_id)) throw HttpError(404, "unknown rater '" + r.rater_id + "'");
    try {
        const auto ack = impl_->store.record(r);
        return {{"status", "stored"}, {"superseded", ack.superseded}, {"sequence", ack.sequence}};
    } catch (const Error& e) {
        throw HttpError(422, e.what());
    }
}

json StudyServer::submit_demographics(const json& body) {
    const std::string rater_id = body.at("rater_id");
    if (!impl_->plan.find(rater_id)) throw HttpError(404, "unknown rater '" + rater_id + "'");
    if (!body.contains("answers") || !body["answers"].is_object())
        throw HttpError(400, "'answers' must be an object");
    std::lock_guard lock(impl_->demo_mutex);
    if (impl_->demographics_log) {
        std::ofstream out(*impl_->demographics_log, std::ios::app | std::ios::binary);
        out << json{{"rater_id", rater_id}, {"answers", body["answers"]}}.dump() << '\n';
    }
    impl_->demographics_done.insert(rater_id);
    return {{"status", "stored"}};
}

}  // namespace compromise
