#include "compromise/llm_backend.hpp"

#include <fstream>
#include <thread>

#include <json.hpp>

namespace compromise {

std::string LlmBackend::complete(const std::string& prompt, const SamplingConfig& sampling) {
    if (sampling.temperature < 0.0) throw Error("sampling temperature must be >= 0");
    const auto n = ++requests_;
    if (budget_ && n > *budget_)
        throw Error("request budget of " + std::to_string(*budget_) + " exhausted for backend " +
                    name());
    return do_complete(prompt, sampling);
}

RetryingBackend::RetryingBackend(LlmBackend& inner, RetryPolicy policy,
                                 std::optional<std::filesystem::path> audit_log, Sleeper sleeper)
    : inner_(inner), policy_(policy), audit_log_(std::move(audit_log)), sleeper_(std::move(sleeper)) {
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void RetryingBackend::audit(const std::string& prompt, const std::string& response, int attempt,
                            const std::string& error) {
    if (!audit_log_) return;
    nlohmann::json rec = {{"backend", inner_.name()},
                          {"attempt", attempt},
                          {"prompt", prompt},
                          {"response", response},
                          {"error", error}};
    std::lock_guard lock(audit_mutex_);
    std::ofstream out(*audit_log_, std::ios::app | std::ios::binary);
    out << rec.dump() << '\n';
}

std::string RetryingBackend::do_complete(const std::string& prompt, const SamplingConfig& sampling) {
    auto delay = policy_.initial_delay;
    for (int attempt = 0;; ++attempt) {
        try {
            std::string out = inner_.complete(prompt, sampling);
            audit(prompt, out, attempt, "");
            return out;
        } catch (const BackendError& e) {
            audit(prompt, "", attempt, e.what());
            if (attempt >= policy_.max_retries)
                throw BackendError("backend " + inner_.name() + " failed after " +
                                   std::to_string(attempt + 1) + " attempts: " + e.what());
            sleeper_(delay);
            delay = std::chrono::milliseconds(
                static_cast<long>(static_cast<double>(delay.count()) * policy_.multiplier));
        }
    }
}

}  // namespace compromise
