#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "compromise/study_protocol.hpp"

namespace compromise {

nlohmann::json load_instructions(const std::filesystem::path& path);
std::filesystem::path default_instructions_path();

/// HTTP API for the rater console.
///   GET  /api/instructions
///   GET  /api/session/{rater_id}/next       next unrated item, blinded
///   GET  /api/session/{rater_id}/progress
///   POST /api/rating                        one RatingRecord as JSON
///   POST /api/demographics                  {"rater_id": ..., "answers": {...}}
class StudyServer {
public:
    StudyServer(const StudyPlan& plan, RatingStore& store, nlohmann::json instructions,
                std::optional<std::filesystem::path> demographics_log = std::nullopt);
    ~StudyServer();
    StudyServer(const StudyServer&) = delete;
    StudyServer& operator=(const StudyServer&) = delete;

    /// Binds; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void listen();
    void stop();

    // Handlers, also callable without a socket.
    nlohmann::json next_item(const std::string& rater_id) const;
    nlohmann::json progress(const std::string& rater_id) const;
    nlohmann::json submit_rating(const nlohmann::json& body);
    nlohmann::json submit_demographics(const nlohmann::json& body);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Raised by handlers; carries the HTTP status to return.
class HttpError : public Error {
public:
    HttpError(int status, const std::string& msg) : Error(msg), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

}  // namespace compromise
