#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "compromise/diagnostics.hpp"

namespace compromise {

struct SamplingConfig {
    double temperature = 0.7;
    std::uint64_t seed = 0;
    int max_tokens = 1024;
};

/// A backend call that failed in a way worth retrying (timeouts, 5xx, 429).
class BackendError : public Error {
public:
    using Error::Error;
};

/// Plain text-in, text-out chat completion. Thread-safe implementations only:
/// the generator issues requests for different pairs concurrently.
class LlmBackend {
public:
    explicit LlmBackend(std::optional<std::uint64_t> request_budget = std::nullopt)
        : budget_(request_budget) {}
    virtual ~LlmBackend() = default;

    virtual std::string name() const = 0;

    /// Counts the request against the budget, then forwards to do_complete.
    std::string complete(const std::string& prompt, const SamplingConfig& sampling);

    std::uint64_t request_count() const { return requests_.load(); }
    std::optional<std::uint64_t> request_budget() const { return budget_; }

protected:
    virtual std::string do_complete(const std::string& prompt, const SamplingConfig& sampling) = 0;

private:
    std::optional<std::uint64_t> budget_;
    std::atomic<std::uint64_t> requests_{0};
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_delay{500};
    double multiplier = 2.0;
};

/// Wraps another backend with exponential-backoff retries on BackendError
/// and an append-only audit log of every request/response pair.
class RetryingBackend : public LlmBackend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    RetryingBackend(LlmBackend& inner, RetryPolicy policy,
                    std::optional<std::filesystem::path> audit_log = std::nullopt,
                    Sleeper sleeper = {});

    std::string name() const override { return inner_.name(); }

protected:
    std::string do_complete(const std::string& prompt, const SamplingConfig& sampling) override;

private:
    void audit(const std::string& prompt, const std::string& response, int attempt,
               const std::string& error);

    LlmBackend& inner_;
    RetryPolicy policy_;
    std::optional<std::filesystem::path> audit_log_;
    Sleeper sleeper_;
    std::mutex audit_mutex_;
};

struct RemoteBackendConfig {
    std::string host = "https://api.anthropic.com";
    std::string model = "claude-3-opus-20240229";
    std::string api_key_env = "ANTHROPIC_API_KEY";
    std::chrono::seconds timeout{120};
};

/// Messages-API client for hosted chat models. Never used by the tests.
class RemoteBackend : public LlmBackend {
public:
    explicit RemoteBackend(RemoteBackendConfig cfg,
                           std::optional<std::uint64_t> request_budget = std::nullopt);
    std::string name() const override { return "remote:" + cfg_.model; }

protected:
    std::string do_complete(const std::string& prompt, const SamplingConfig& sampling) override;

private:
    RemoteBackendConfig cfg_;
    std::string api_key_;
};

}  // namespace compromise
