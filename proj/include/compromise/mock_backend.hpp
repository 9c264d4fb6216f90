#pragma once

#include <cstdint>
#include <optional>

#include "compromise/llm_backend.hpp"

namespace compromise {

/// Deterministic stand-in for a chat model. It recognises each prompt kind
/// and answers in the requested format by recombining words from the two
/// suggestions:
///   - single prompts lean heavily towards one view;
///   - CoT generations draw from both views;
///   - self-evaluation returns token-overlap scores plus seeded noise;
///   - improvement and refinement prompts append one word from the
///     lower-scoring view (and absent from the other view) to each listed
///     compromise, so gaps measured by TokenOverlapScorer never grow.
/// The reply depends only on (seed, sampling seed, prompt).
class MockBackend : public LlmBackend {
public:
    explicit MockBackend(std::uint64_t seed = 0,
                         std::optional<std::uint64_t> request_budget = std::nullopt)
        : LlmBackend(request_budget), seed_(seed) {}

    std::string name() const override { return "mock"; }

protected:
    std::string do_complete(const std::string& prompt, const SamplingConfig& sampling) override;

private:
    std::uint64_t seed_;
};

}  // namespace compromise
