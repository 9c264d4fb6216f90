#include "compromise/empathy_scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "compromise/diagnostics.hpp"
#include "compromise/hashing.hpp"
#include "compromise/inference_stats.hpp"
#include "compromise/optim.hpp"
#include "compromise/random.hpp"
#include "compromise/text.hpp"

namespace compromise {

EmbeddingModel::EmbeddingModel(EncoderConfig cfg) : cfg_(cfg) {
    if (cfg_.dimension <= 0 || cfg_.buckets <= 0 || cfg_.max_tokens <= 0)
        throw Error("encoder dimension, buckets and max_tokens must be positive");
    table_.resize(cfg_.dimension, cfg_.buckets);
    Rng rng(cfg_.seed);
    for (Eigen::Index j = 0; j < table_.cols(); ++j)
        for (Eigen::Index i = 0; i < table_.rows(); ++i)
            table_(i, j) = 2.0 * uniform_unit(rng) - 1.0;
}

std::vector<int> EmbeddingModel::features(std::string_view text) const {
    auto toks = word_tokens(text);
    if (toks.empty()) throw Error("cannot embed empty text");
    if (static_cast<int>(toks.size()) > cfg_.max_tokens) {
        warn("input of " + std::to_string(toks.size()) + " tokens truncated to encoder window of " +
             std::to_string(cfg_.max_tokens));
        toks.resize(cfg_.max_tokens);
    }
    std::vector<int> feats;
    feats.reserve(toks.size() * 2);
    const auto buckets = static_cast<std::uint64_t>(cfg_.buckets);
    for (size_t i = 0; i < toks.size(); ++i) {
        feats.push_back(static_cast<int>(fnv1a64("u:" + toks[i]) % buckets));
        if (i + 1 < toks.size())
            feats.push_back(static_cast<int>(fnv1a64("b:" + toks[i] + " " + toks[i + 1]) % buckets));
    }
    return feats;
}

Eigen::VectorXd EmbeddingModel::pooled(const std::vector<int>& feats) const {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(cfg_.dimension);
    for (int f : feats) u += table_.col(f);
    return u / static_cast<double>(feats.size());
}

Eigen::VectorXd EmbeddingModel::embed(std::string_view text) const {
    Eigen::VectorXd u = pooled(features(text));
    if (cfg_.normalized) {
        const double n = u.norm();
        if (n == 0.0) throw Error("degenerate zero embedding");
        u /= n;
    }
    return u;
}

void EmbeddingModel::save(const std::filesystem::path& dir, const std::string& origin) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {{"format_version", 1},
                               {"encoder", "hash-bow"},
                               {"dimension", cfg_.dimension},
                               {"buckets", cfg_.buckets},
                               {"max_tokens", cfg_.max_tokens},
                               {"normalized", cfg_.normalized},
                               {"init_seed", cfg_.seed},
                               {"origin", origin}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    std::ofstream w(dir / "weights.bin", std::ios::binary);
    w.write(reinterpret_cast<const char*>(table_.data()),
            static_cast<std::streamsize>(table_.size() * sizeof(double)));
    if (!w) throw Error("failed writing scorer weights to " + dir.string());
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& dir) {
    std::ifstream m(dir / "manifest.json");
    if (!m) throw Error("missing scorer manifest in " + dir.string());
    auto manifest = nlohmann::json::parse(m);
    if (manifest.value("encoder", "") != "hash-bow")
        throw Error("unsupported encoder '" + manifest.value("encoder", "") + "'");
    EncoderConfig cfg;
    cfg.dimension = manifest.at("dimension");
    cfg.buckets = manifest.at("buckets");
    cfg.max_tokens = manifest.at("max_tokens");
    cfg.normalized = manifest.at("normalized");
    cfg.seed = manifest.at("init_seed");
    EmbeddingModel model(cfg);
    std::ifstream w(dir / "weights.bin", std::ios::binary);
    w.read(reinterpret_cast<char*>(model.table_.data()),
           static_cast<std::streamsize>(model.table_.size() * sizeof(double)));
    if (!w) throw Error("truncated scorer weights in " + dir.string());
    return model;
}

double empathic_similarity(const TextEncoder& model, std::string_view text_1,
                           std::string_view text_2) {
    const Eigen::VectorXd a = model.embed(text_1);
    const Eigen::VectorXd b = model.embed(text_2);
    const double denom = a.norm() * b.norm();
    if (denom == 0.0) throw Error("degenerate zero embedding");
    return std::clamp(a.dot(b) / denom, -1.0, 1.0);
}

EmpathyScorePair score_compromise(const TextEncoder& model, std::string_view compromise,
                                  const ViewPair& pair) {
    if (trim(compromise).empty()) throw Error("compromise text is empty");
    return {empathic_similarity(model, compromise, render_view_text(pair.view_a)),
            empathic_similarity(model, compromise, render_view_text(pair.view_b))};
}

double predicted_rating(const TextEncoder& model, const RatedStoryPair& pair) {
    return 0.5 * (1.0 + empathic_similarity(model, pair.text_1, pair.text_2));
}

double pair_loss_and_gradient(const EmbeddingModel& model, const RatedStoryPair& pair,
                              Eigen::MatrixXd* grad, double weight) {
    const auto f1 = model.features(pair.text_1);
    const auto f2 = model.features(pair.text_2);
    const Eigen::VectorXd u1 = model.pooled(f1);
    const Eigen::VectorXd u2 = model.pooled(f2);
    const double n1 = u1.norm(), n2 = u2.norm();
    if (n1 == 0.0 || n2 == 0.0) throw Error("degenerate zero embedding");
    const Eigen::VectorXd a = u1 / n1, b = u2 / n2;
    const double cos = a.dot(b);
    const double resid = 0.5 * (1.0 + cos) - pair.empathy_rating;
    if (grad) {
        // d loss / d cos = 2 * resid * 1/2; d cos / d u1 = (b - cos a) / |u1|.
        const double dcos = resid * weight;
        const Eigen::VectorXd g1 = dcos * (b - cos * a) / n1 / static_cast<double>(f1.size());
        const Eigen::VectorXd g2 = dcos * (a - cos * b) / n2 / static_cast<double>(f2.size());
        for (int f : f1) grad->col(f) += g1;
        for (int f : f2) grad->col(f) += g2;
    }
    return resid * resid;
}

double mean_squared_error(const TextEncoder& model, const std::vector<RatedStoryPair>& pairs) {
    if (pairs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : pairs) {
        const double r = predicted_rating(model, p) - p.empathy_rating;
        total += r * r;
    }
    return total / static_cast<double>(pairs.size());
}

namespace {

double dev_spearman(const TextEncoder& model, const std::vector<RatedStoryPair>& dev) {
    if (dev.size() < 2) return 0.0;
    std::vector<double> pred, gold;
    for (const auto& p : dev) {
        pred.push_back(predicted_rating(model, p));
        gold.push_back(p.empathy_rating);
    }
    return spearman_correlation(pred, gold);
}

}  // namespace

ScorerTrainReport train_scorer(EmbeddingModel& model, const std::vector<RatedStoryPair>& train,
                               const std::vector<RatedStoryPair>& dev,
                               const ScorerTrainConfig& cfg) {
    if (train.size() < 2) throw Error("train_scorer needs at least 2 training pairs");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0) throw Error("epochs and batch_size must be positive");
    if (cfg.learning_rate < 0.0) throw Error("learning_rate must be non-negative");
    if (cfg.validation_metric != "spearman")
        throw Error("unsupported validation metric '" + cfg.validation_metric + "'");

    ScorerTrainReport report;
    report.train_size = train.size();
    report.dev_size = dev.size();
    report.initial_dev_mse = mean_squared_error(model, dev);

    Rng rng(cfg.seed);
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    AdamState adam(static_cast<size_t>(model.table().size()));
    const AdamHyper hyper{0.9, 0.999, 1e-8};
    Eigen::MatrixXd grad(model.table().rows(), model.table().cols());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        seeded_shuffle(order, rng);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const double w = 1.0 / static_cast<double>(end - start);
            grad.setZero();
            for (size_t k = start; k < end; ++k)
                epoch_loss += pair_loss_and_gradient(model, train[order[k]], &grad, w);
            adam.step({model.table().data(), static_cast<size_t>(model.table().size())},
                      {grad.data(), static_cast<size_t>(grad.size())}, cfg.learning_rate, hyper);
        }
        ScorerEpochMetrics m;
        m.epoch = epoch;
        m.train_loss = epoch_loss / static_cast<double>(train.size());
        m.dev_mse = mean_squared_error(model, dev);
        m.dev_spearman = dev_spearman(model, dev);
        report.epochs.push_back(m);
    }
    return report;
}

ScorerTrainReport train_scorer(EmbeddingModel& model, const std::vector<RatedStoryPair>& pairs,
                               std::array<double, 3> ratios, const ScorerTrainConfig& cfg) {
    std::vector<std::string> ids;
    for (size_t i = 0; i < pairs.size(); ++i) ids.push_back(std::to_string(i));
    const auto split = split_dataset(ids, ratios, cfg.seed);
    auto pick = [&](const std::vector<std::string>& which) {
        std::vector<RatedStoryPair> out;
        for (const auto& id : which) out.push_back(pairs[std::stoul(id)]);
        return out;
    };
    return train_scorer(model, pick(split.train), pick(split.dev), cfg);
}

}  // namespace compromise
