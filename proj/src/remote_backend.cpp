#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "compromise/llm_backend.hpp"

namespace compromise {

RemoteBackend::RemoteBackend(RemoteBackendConfig cfg, std::optional<std::uint64_t> request_budget)
    : LlmBackend(request_budget), cfg_(std::move(cfg)) {
    const char* key = std::getenv(cfg_.api_key_env.c_str());
    if (!key || !*key) throw Error("environment variable " + cfg_.api_key_env + " is not set");
    api_key_ = key;
}

std::string RemoteBackend::do_complete(const std::string& prompt, const SamplingConfig& sampling) {
    httplib::Client client(cfg_.host);
    client.set_read_timeout(cfg_.timeout);
    client.set_connection_timeout(std::chrono::seconds(30));
    const httplib::Headers headers = {{"x-api-key", api_key_},
                                      {"anthropic-version", "2023-06-01"}};
    nlohmann::json body = {{"model", cfg_.model},
                           {"max_tokens", sampling.max_tokens},
                           {"temperature", sampling.temperature},
                           {"messages", {{{"role", "user"}, {"content", prompt}}}}};
    auto res = client.Post("/v1/messages", headers, body.dump(), "application/json");
    if (!res) throw BackendError("transport error: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw BackendError("HTTP " + std::to_string(res->status));
    if (res->status != 200)
        throw Error("HTTP " + std::to_string(res->status) + ": " + res->body);
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.contains("content"))
        throw Error("unexpected response body: " + res->body.substr(0, 200));
    std::string text;
    for (const auto& block : reply["content"])
        if (block.value("type", "") == "text") text += block.value("text", "");
    return text;
}

}  // namespace compromise
