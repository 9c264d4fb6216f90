#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "compromise/corpus.hpp"

namespace compromise {

/// Anything that maps text to a fixed-width vector. Pretrained encoders
/// (e5-large and friends) plug in here through an external runtime.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual Eigen::VectorXd embed(std::string_view text) const = 0;
    virtual int dimension() const = 0;
};

struct EncoderConfig {
    int dimension = 64;
    int buckets = 4096;       // hashed unigram+bigram feature space
    int max_tokens = 512;     // encoder window; longer inputs are truncated
    bool normalized = true;
    std::uint64_t seed = 13;  // initial table
};

/// Trainable bi-encoder: hashed unigram/bigram features, one learned vector
/// per bucket, mean-pooled and L2-normalized. With untouched weights it is
/// the deterministic hash-embedding encoder used throughout the tests.
class EmbeddingModel : public TextEncoder {
public:
    explicit EmbeddingModel(EncoderConfig cfg = {});

    Eigen::VectorXd embed(std::string_view text) const override;
    int dimension() const override { return cfg_.dimension; }
    const EncoderConfig& config() const { return cfg_; }

    /// Column j holds the vector for hash bucket j.
    Eigen::MatrixXd& table() { return table_; }
    const Eigen::MatrixXd& table() const { return table_; }

    /// Bucket ids for a text after tokenization and truncation.
    std::vector<int> features(std::string_view text) const;

    /// Pre-normalization mean of the bucket vectors.
    Eigen::VectorXd pooled(const std::vector<int>& feats) const;

    void save(const std::filesystem::path& dir, const std::string& origin = {}) const;
    static EmbeddingModel load(const std::filesystem::path& dir);

private:
    EncoderConfig cfg_;
    Eigen::MatrixXd table_;
};

/// Similarities of one compromise to view_a and view_b.
struct EmpathyScorePair {
    double score_a = 0.0;
    double score_b = 0.0;
};

/// Cosine of the two embeddings, clamped to [-1, 1].
double empathic_similarity(const TextEncoder& model, std::string_view text_1,
                           std::string_view text_2);

EmpathyScorePair score_compromise(const TextEncoder& model, std::string_view compromise,
                                  const ViewPair& pair);

struct ScorerTrainConfig {
    int epochs = 4;
    int batch_size = 16;
    double learning_rate = 1e-2;
    std::uint64_t seed = 0;
    std::string validation_metric = "spearman";
};

struct ScorerEpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;  // mean squared error over the epoch
    double dev_mse = 0.0;
    double dev_spearman = 0.0;
};

struct ScorerTrainReport {
    std::size_t train_size = 0;
    std::size_t dev_size = 0;
    double initial_dev_mse = 0.0;
    std::vector<ScorerEpochMetrics> epochs;
};

/// (1 + cos) / 2, the quantity regressed onto the [0, 1] human rating.
double predicted_rating(const TextEncoder& model, const RatedStoryPair& pair);

/// Squared error of predicted_rating against the label, and its gradient
/// with respect to the bucket table accumulated into `grad` (scaled by `weight`).
double pair_loss_and_gradient(const EmbeddingModel& model, const RatedStoryPair& pair,
                              Eigen::MatrixXd* grad, double weight = 1.0);

double mean_squared_error(const TextEncoder& model, const std::vector<RatedStoryPair>& pairs);

/// Adam on mean squared error between (1+cos)/2 and the rating.
ScorerTrainReport train_scorer(EmbeddingModel& model, const std::vector<RatedStoryPair>& train,
                               const std::vector<RatedStoryPair>& dev,
                               const ScorerTrainConfig& cfg);

/// Splits `pairs` with split_dataset, trains on train and reports on dev.
ScorerTrainReport train_scorer(EmbeddingModel& model, const std::vector<RatedStoryPair>& pairs,
                               std::array<double, 3> ratios, const ScorerTrainConfig& cfg);

}  // namespace compromise
