#include "compromise/language_model.hpp"

#include <cmath>
#include <fstream>

#include "compromise/diagnostics.hpp"
#include "compromise/hashing.hpp"
#include "compromise/random.hpp"
#include "compromise/text.hpp"

namespace compromise {

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
    words_ = {"<bos>", "<eos>", "<unk>"};
    for (int i = 0; i < 3; ++i) index_[words_[static_cast<size_t>(i)]] = i;
    for (const auto& w : words) {
        if (index_.count(w)) continue;
        index_[w] = static_cast<int>(words_.size());
        words_.push_back(w);
    }
}

Vocabulary Vocabulary::from_texts(const std::vector<std::string>& texts) {
    std::vector<std::string> words;
    for (const auto& t : texts)
        for (auto& w : word_tokens(t)) words.push_back(std::move(w));
    return Vocabulary(words);
}

int Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const auto& w : word_tokens(text)) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kBos || id == kEos) continue;
        if (!out.empty()) out += ' ';
        out += word(id);
    }
    return out;
}

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

GroupGradients TrainableLM::zero_gradients() const {
    GroupGradients g(num_groups());
    for (size_t i = 0; i < g.size(); ++i) g[i].assign(group_params(i).size(), 0.0);
    return g;
}

std::vector<double> TrainableLM::log_prob(std::string_view prompt, std::string_view completion) const {
    const auto p = vocab().encode(prompt);
    const auto c = vocab().encode(completion);
    return token_log_probs(p, c);
}

std::string TrainableLM::generate(std::string_view prompt, const SamplingConfig& sampling) const {
    const auto p = vocab().encode(prompt);
    return vocab().decode(sample(p, sampling));
}

std::vector<double> UniformLM::token_log_probs(std::span<const int>,
                                               std::span<const int> completion) const {
    return std::vector<double>(completion.size(), -std::log(static_cast<double>(vocab_.size())));
}

std::vector<int> UniformLM::sample(std::span<const int> prompt, const SamplingConfig& sampling) const {
    Rng rng(mix64(sampling.seed) ^ prompt.size());
    std::vector<int> out;
    for (int t = 0; t < sampling.max_tokens; ++t) {
        const int id = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(vocab_.size())));
        if (id == Vocabulary::kEos) break;
        if (id == Vocabulary::kBos) continue;
        out.push_back(id);
    }
    return out;
}

TinyLM::TinyLM(Vocabulary vocab, TinyLMConfig cfg) : vocab_(std::move(vocab)), cfg_(cfg) {
    if (cfg_.hidden <= 0 || cfg_.blocks < 0) throw Error("TinyLM: bad architecture");
    const size_t d = static_cast<size_t>(cfg_.hidden);
    const size_t V = static_cast<size_t>(vocab_.size());
    groups_.emplace_back(d * V);
    for (int l = 0; l < cfg_.blocks; ++l) groups_.emplace_back(d * d + d);
    groups_.emplace_back(V * d + V);
    Rng rng(cfg_.seed);
    for (auto& g : groups_)
        for (auto& x : g) x = cfg_.init_scale * (2.0 * uniform_unit(rng) - 1.0);
    // Biases start at zero.
    for (int l = 0; l < cfg_.blocks; ++l) {
        auto& g = groups_[static_cast<size_t>(l) + 1];
        std::fill(g.begin() + static_cast<long>(d * d), g.end(), 0.0);
    }
    auto& head = groups_.back();
    std::fill(head.begin() + static_cast<long>(V * d), head.end(), 0.0);
}

std::string TinyLM::group_name(std::size_t g) const {
    if (g == 0) return "embedding";
    if (g + 1 == groups_.size()) return "head";
    return "block_" + std::to_string(g);
}

TinyLM::CMap TinyLM::embedding() const {
    return CMap(groups_[0].data(), cfg_.hidden, vocab_.size());
}
TinyLM::CMap TinyLM::block_weight(int l) const {
    return CMap(groups_[static_cast<size_t>(l) + 1].data(), cfg_.hidden, cfg_.hidden);
}
TinyLM::CMap TinyLM::block_bias(int l) const {
    return CMap(groups_[static_cast<size_t>(l) + 1].data() + cfg_.hidden * cfg_.hidden, cfg_.hidden, 1);
}
TinyLM::CMap TinyLM::head_weight() const {
    return CMap(groups_.back().data(), vocab_.size(), cfg_.hidden);
}
TinyLM::CMap TinyLM::head_bias() const {
    return CMap(groups_.back().data() + vocab_.size() * cfg_.hidden, vocab_.size(), 1);
}

Eigen::VectorXd TinyLM::context(std::span<const int> prompt) const {
    Eigen::VectorXd ctx = Eigen::VectorXd::Zero(cfg_.hidden);
    if (prompt.empty()) return ctx;
    const auto E = embedding();
    for (int id : prompt) ctx += E.col(id);
    return ctx / static_cast<double>(prompt.size());
}

Eigen::VectorXd TinyLM::logits_at(const Eigen::VectorXd& ctx, int prev, Trace* trace) const {
    Eigen::VectorXd h = embedding().col(prev) + ctx;
    if (trace) trace->h.push_back(h);
    for (int l = 0; l < cfg_.blocks; ++l) {
        Eigen::VectorXd t = (block_weight(l) * h + block_bias(l)).array().tanh().matrix();
        h += t;
        if (trace) {
            trace->act.push_back(std::move(t));
            trace->h.push_back(h);
        }
    }
    return head_weight() * h + head_bias();
}

namespace {

void check_ids(std::span<const int> ids, int vocab) {
    for (int id : ids)
        if (id < 0 || id >= vocab) throw Error("token id out of range");
}

}  // namespace

std::vector<double> TinyLM::token_log_probs(std::span<const int> prompt,
                                            std::span<const int> completion) const {
    check_ids(prompt, vocab_.size());
    check_ids(completion, vocab_.size());
    const Eigen::VectorXd ctx = context(prompt);
    std::vector<double> out;
    out.reserve(completion.size());
    int prev = Vocabulary::kBos;
    for (int y : completion) {
        const Eigen::VectorXd z = logits_at(ctx, prev, nullptr);
        out.push_back(z(y) - log_sum_exp(z));
        prev = y;
    }
    return out;
}

void TinyLM::accumulate_log_prob_gradient(std::span<const int> prompt,
                                          std::span<const int> completion, double weight,
                                          GroupGradients& grads) const {
    check_ids(prompt, vocab_.size());
    check_ids(completion, vocab_.size());
    if (grads.size() != groups_.size()) throw Error("gradient buffer does not match model");
    const int d = cfg_.hidden;
    const int V = vocab_.size();
    Map dE(grads[0].data(), d, V);
    Map dU(grads.back().data(), V, d);
    Map dc(grads.back().data() + V * d, V, 1);

    const Eigen::VectorXd ctx = context(prompt);
    Eigen::VectorXd dctx = Eigen::VectorXd::Zero(d);
    int prev = Vocabulary::kBos;
    for (int y : completion) {
        Trace tr;
        const Eigen::VectorXd z = logits_at(ctx, prev, &tr);
        Eigen::VectorXd dz = -(z.array() - log_sum_exp(z)).exp().matrix();
        dz(y) += 1.0;
        dz *= weight;
        const Eigen::VectorXd& top = tr.h.back();
        dU.noalias() += dz * top.transpose();
        dc += dz;
        Eigen::VectorXd dh = head_weight().transpose() * dz;
        for (int l = cfg_.blocks - 1; l >= 0; --l) {
            const Eigen::VectorXd da =
                (dh.array() * (1.0 - tr.act[static_cast<size_t>(l)].array().square())).matrix();
            Map dW(grads[static_cast<size_t>(l) + 1].data(), d, d);
            Map db(grads[static_cast<size_t>(l) + 1].data() + d * d, d, 1);
            dW.noalias() += da * tr.h[static_cast<size_t>(l)].transpose();
            db += da;
            dh += block_weight(l).transpose() * da;
        }
        dE.col(prev) += dh;
        dctx += dh;
        prev = y;
    }
    if (!prompt.empty()) {
        dctx /= static_cast<double>(prompt.size());
        for (int id : prompt) dE.col(id) += dctx;
    }
}

std::vector<int> TinyLM::sample(std::span<const int> prompt, const SamplingConfig& sampling) const {
    check_ids(prompt, vocab_.size());
    Rng rng(mix64(sampling.seed));
    const Eigen::VectorXd ctx = context(prompt);
    std::vector<int> out;
    int prev = Vocabulary::kBos;
    for (int t = 0; t < sampling.max_tokens; ++t) {
        Eigen::VectorXd z = logits_at(ctx, prev, nullptr);
        z(Vocabulary::kBos) = -std::numeric_limits<double>::infinity();
        int next;
        if (sampling.temperature <= 0.0) {
            z.maxCoeff(&next);
        } else {
            z /= sampling.temperature;
            const Eigen::VectorXd p = (z.array() - log_sum_exp(z)).exp().matrix();
            double u = uniform_unit(rng), acc = 0.0;
            next = static_cast<int>(p.size()) - 1;
            for (Eigen::Index i = 0; i < p.size(); ++i) {
                acc += p(i);
                if (u < acc) {
                    next = static_cast<int>(i);
                    break;
                }
            }
        }
        if (next == Vocabulary::kEos) break;
        out.push_back(next);
        prev = next;
    }
    return out;
}

void TinyLM::save(const std::filesystem::path& dir, const nlohmann::json& training_record) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {{"format_version", 1},
                               {"architecture", "tiny-residual-lm"},
                               {"hidden", cfg_.hidden},
                               {"blocks", cfg_.blocks},
                               {"init_scale", cfg_.init_scale},
                               {"init_seed", cfg_.seed},
                               {"vocabulary", std::vector<std::string>(vocab_.words().begin() + 3,
                                                                       vocab_.words().end())},
                               {"groups", nlohmann::json::array()},
                               {"training", training_record}};
    for (size_t g = 0; g < groups_.size(); ++g)
        manifest["groups"].push_back({{"name", group_name(g)}, {"size", groups_[g].size()}});
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
    std::ofstream w(dir / "weights.bin", std::ios::binary);
    for (const auto& g : groups_)
        w.write(reinterpret_cast<const char*>(g.data()),
                static_cast<std::streamsize>(g.size() * sizeof(double)));
    if (!w) throw Error("failed writing model weights to " + dir.string());
}

TinyLM TinyLM::load(const std::filesystem::path& dir) {
    std::ifstream m(dir / "manifest.json");
    if (!m) throw Error("missing model manifest in " + dir.string());
    const auto manifest = nlohmann::json::parse(m);
    TinyLMConfig cfg;
    cfg.hidden = manifest.at("hidden");
    cfg.blocks = manifest.at("blocks");
    cfg.init_scale = manifest.at("init_scale");
    cfg.seed = manifest.at("init_seed");
    TinyLM model(Vocabulary(manifest.at("vocabulary").get<std::vector<std::string>>()), cfg);
    std::ifstream w(dir / "weights.bin", std::ios::binary);
    for (auto& g : model.groups_)
        w.read(reinterpret_cast<char*>(g.data()), static_cast<std::streamsize>(g.size() * sizeof(double)));
    if (!w) throw Error("truncated model weights in " + dir.string());
    return model;
}

}  // namespace compromise
