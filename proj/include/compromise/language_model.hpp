#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "compromise/llm_backend.hpp"

namespace compromise {

/// Word-level vocabulary over word_tokens(). Ids 0..2 are <bos>, <eos>, <unk>.
class Vocabulary {
public:
    static constexpr int kBos = 0;
    static constexpr int kEos = 1;
    static constexpr int kUnk = 2;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& words);
    /// Every distinct token of `texts`, in first-seen order.
    static Vocabulary from_texts(const std::vector<std::string>& texts);

    int size() const { return static_cast<int>(words_.size()); }
    int id(const std::string& word) const;
    const std::string& word(int id) const { return words_.at(static_cast<size_t>(id)); }
    std::vector<int> encode(std::string_view text) const;
    std::string decode(std::span<const int> ids) const;
    const std::vector<std::string>& words() const { return words_; }

private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
};

/// Gradients laid out like the model's parameter groups.
using GroupGradients = std::vector<std::vector<double>>;

/// Language model surface used by fine-tuning, alignment and evaluation.
/// Parameters are exposed as ordered groups (input side first) so that
/// freezing "all but the last k layers" is a statement about group indices.
class TrainableLM {
public:
    virtual ~TrainableLM() = default;

    virtual const Vocabulary& vocab() const = 0;

    /// log p(completion[t] | prompt, completion[<t]) for every completion token.
    virtual std::vector<double> token_log_probs(std::span<const int> prompt,
                                                std::span<const int> completion) const = 0;

    /// Adds weight * d/dθ sum_t token_log_probs into `grads`.
    virtual void accumulate_log_prob_gradient(std::span<const int> prompt,
                                              std::span<const int> completion, double weight,
                                              GroupGradients& grads) const = 0;

    /// Seeded multinomial sampling (greedy at temperature 0) until <eos> or max_tokens.
    virtual std::vector<int> sample(std::span<const int> prompt,
                                    const SamplingConfig& sampling) const = 0;

    virtual std::size_t num_groups() const = 0;
    virtual std::string group_name(std::size_t g) const = 0;
    virtual std::span<double> group_params(std::size_t g) = 0;
    virtual std::span<const double> group_params(std::size_t g) const = 0;

    GroupGradients zero_gradients() const;

    std::vector<double> log_prob(std::string_view prompt, std::string_view completion) const;
    std::string generate(std::string_view prompt, const SamplingConfig& sampling) const;
};

/// Every token equally likely; the analytic reference for log-likelihood checks.
class UniformLM : public TrainableLM {
public:
    explicit UniformLM(Vocabulary vocab) : vocab_(std::move(vocab)) {}

    const Vocabulary& vocab() const override { return vocab_; }
    std::vector<double> token_log_probs(std::span<const int> prompt,
                                        std::span<const int> completion) const override;
    void accumulate_log_prob_gradient(std::span<const int>, std::span<const int>, double,
                                      GroupGradients&) const override {}
    std::vector<int> sample(std::span<const int> prompt,
                            const SamplingConfig& sampling) const override;
    std::size_t num_groups() const override { return 0; }
    std::string group_name(std::size_t) const override { return {}; }
    std::span<double> group_params(std::size_t) override { return {}; }
    std::span<const double> group_params(std::size_t) const override { return {}; }

private:
    Vocabulary vocab_;
};

struct TinyLMConfig {
    int hidden = 32;
    int blocks = 4;
    double init_scale = 0.1;
    std::uint64_t seed = 7;
};

/// Small autoregressive model for desk-scale training:
///   h0   = E[prev token] + mean(E[prompt tokens])
///   h_l  = h_{l-1} + tanh(W_l h_{l-1} + b_l)      l = 1..blocks
///   p    = softmax(U h_L + c)
/// Groups: "embedding", "block_1".."block_N", "head" (untied from the embedding).
class TinyLM : public TrainableLM {
public:
    TinyLM(Vocabulary vocab, TinyLMConfig cfg = {});

    const Vocabulary& vocab() const override { return vocab_; }
    const TinyLMConfig& config() const { return cfg_; }

    std::vector<double> token_log_probs(std::span<const int> prompt,
                                        std::span<const int> completion) const override;
    void accumulate_log_prob_gradient(std::span<const int> prompt, std::span<const int> completion,
                                      double weight, GroupGradients& grads) const override;
    std::vector<int> sample(std::span<const int> prompt,
                            const SamplingConfig& sampling) const override;

    std::size_t num_groups() const override { return groups_.size(); }
    std::string group_name(std::size_t g) const override;
    std::span<double> group_params(std::size_t g) override { return groups_.at(g); }
    std::span<const double> group_params(std::size_t g) const override { return groups_.at(g); }

    void save(const std::filesystem::path& dir, const nlohmann::json& training_record = {}) const;
    static TinyLM load(const std::filesystem::path& dir);

private:
    using Map = Eigen::Map<Eigen::MatrixXd>;
    using CMap = Eigen::Map<const Eigen::MatrixXd>;

    CMap embedding() const;
    CMap block_weight(int l) const;
    CMap block_bias(int l) const;
    CMap head_weight() const;
    CMap head_bias() const;

    Eigen::VectorXd context(std::span<const int> prompt) const;
    struct Trace {
        std::vector<Eigen::VectorXd> h;    // h_0 .. h_L
        std::vector<Eigen::VectorXd> act;  // tanh outputs of blocks 1..L
    };
    Eigen::VectorXd logits_at(const Eigen::VectorXd& ctx, int prev, Trace* trace) const;

    Vocabulary vocab_;
    TinyLMConfig cfg_;
    std::vector<std::vector<double>> groups_;
};

double log_sum_exp(const Eigen::VectorXd& v);

}  // namespace compromise
