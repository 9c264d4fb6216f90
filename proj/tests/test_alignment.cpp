#include <doctest.h>

#include <cmath>
#include <random>

#include "compromise/alignment.hpp"
#include "compromise/diagnostics.hpp"

using namespace compromise;

namespace {

// Bigram table over words x, y, z; <bos> is the start state.
class BigramLM : public TrainableLM {
public:
    BigramLM() : vocab_(std::vector<std::string>{"x", "y", "z"}) {}
    const Vocabulary& vocab() const override { return vocab_; }
    std::vector<double> token_log_probs(std::span<const int>, std::span<const int> c) const override {
        std::vector<double> out;
        int prev = Vocabulary::kBos;
        for (int t : c) {
            out.push_back(std::log(prob(prev, t)));
            prev = t;
        }
        return out;
    }
    void accumulate_log_prob_gradient(std::span<const int>, std::span<const int>, double,
                                      GroupGradients&) const override {}
    std::vector<int> sample(std::span<const int>, const SamplingConfig&) const override { return {}; }
    std::size_t num_groups() const override { return 0; }
    std::string group_name(std::size_t) const override { return {}; }
    std::span<double> group_params(std::size_t) override { return {}; }
    std::span<const double> group_params(std::size_t) const override { return {}; }

private:
    static double prob(int prev, int next) {
        // rows: bos, x, y, z; columns: x, y, z
        static const double table[4][3] = {
            {0.5, 0.3, 0.2}, {0.25, 0.25, 0.5}, {0.1, 0.1, 0.8}, {0.6, 0.2, 0.2}};
        const int row = prev == Vocabulary::kBos ? 0 : prev - 2;
        return table[row][next - 3];
    }
    Vocabulary vocab_;
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::vector<double>> snapshot(const TrainableLM& m) {
    std::vector<std::vector<double>> out;
    for (size_t g = 0; g < m.num_groups(); ++g) {
        const auto p = m.group_params(g);
        out.emplace_back(p.begin(), p.end());
    }
    return out;
}

const std::vector<TrainingExample> kData = {
    {"the park feels unsafe at night", "add lamps along the path"},
    {"the square is lively and open", "keep benches and add shade"},
    {"the street has too many cars", "slow the traffic near the school"},
    {"the library welcomes everyone", "extend the opening hours"},
};

TinyLM toy_model(std::uint64_t seed = 3) {
    std::vector<std::string> texts;
    for (const auto& e : kData) {
        texts.push_back(e.prompt);
        texts.push_back(e.target);
    }
    return TinyLM(Vocabulary::from_texts(texts), {16, 4, 0.3, seed});
}

}  // namespace

TEST_CASE("nce loss values") {
    CHECK(nce_loss(0, 0) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
    CHECK(std::abs(nce_loss(0, 0) - 1.386294361) < 1e-9);
    CHECK(nce_loss(40, -40) <= 1e-15);
    CHECK(std::abs(nce_loss(-1, -2) - 1.440190) < 1e-6);
    CHECK(std::isfinite(nce_loss(-1e4, 1e4)));
    CHECK(nce_loss(-1e4, 1e4) == doctest::Approx(2e4));
    CHECK_THROWS_AS(nce_loss(std::nan(""), 0), Error);
    CHECK_THROWS_AS(nce_loss(0, INFINITY), Error);
}

TEST_CASE("nce gradient matches finite differences") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-6, 6);
    for (int i = 0; i < 20; ++i) {
        const double t = u(rng), h = u(rng), e = 1e-6;
        const auto g = nce_gradient(t, h);
        CHECK(g.d_target == doctest::Approx(sigmoid(t) - 1));
        CHECK(g.d_hypo == doctest::Approx(sigmoid(h)));
        const double fd_t = (nce_loss(t + e, h) - nce_loss(t - e, h)) / (2 * e);
        const double fd_h = (nce_loss(t, h + e) - nce_loss(t, h - e)) / (2 * e);
        CHECK(g.d_target == doctest::Approx(fd_t).epsilon(1e-6));
        CHECK(g.d_hypo == doctest::Approx(fd_h).epsilon(1e-6));
    }
}

TEST_CASE("nce loss is monotone and non-negative") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-20, 20);
    for (int i = 0; i < 500; ++i) {
        const double t = u(rng), h = u(rng);
        CHECK(nce_loss(t, h) >= 0);
        CHECK(nce_loss(t + 0.5, h) < nce_loss(t, h));
        CHECK(nce_loss(t, h + 0.5) > nce_loss(t, h));
    }
}

TEST_CASE("task loss values and subgradient") {
    CHECK(task_loss(-2, -4, 0.7, 0.7, 10) == 0.0);
    CHECK(task_loss(-4, -2, 1.0, 0.8, 10) == doctest::Approx(4.0));
    CHECK(task_loss(-2, -10, 1.0, 0.5, 10) == 0.0);
    CHECK(task_loss(-4, -2, 1.0, 0.3, 0) == doctest::Approx(2.0));
    CHECK_THROWS_AS(task_loss(0, 0, 1, 1, -1), Error);
    CHECK_THROWS_AS(task_loss(NAN, 0, 1, 1, 1), Error);

    auto g = task_loss_gradient(-4, -2, 1.0, 0.8, 10);
    CHECK(g.d_target == -1.0);
    CHECK(g.d_hypo == 1.0);
    g = task_loss_gradient(-2, -10, 1.0, 0.5, 10);
    CHECK(g.d_target == 0.0);
    CHECK(g.d_hypo == 0.0);
    g = task_loss_gradient(-2, -2, 1.0, 1.0, 10);  // at the kink
    CHECK(g.d_target == 0.0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-10, 10), r(0, 1);
    for (int i = 0; i < 50; ++i) {
        const double t = u(rng), h = u(rng), hr = r(rng), e = 1e-6;
        if (std::abs(h - t + (1 - hr) * 10) < 1e-3) continue;
        const auto gg = task_loss_gradient(t, h, 1.0, hr, 10);
        CHECK(gg.d_target == doctest::Approx((task_loss(t + e, h, 1, hr, 10) - task_loss(t - e, h, 1, hr, 10)) / (2 * e)));
        CHECK(gg.d_hypo == doctest::Approx((task_loss(t, h + e, 1, hr, 10) - task_loss(t, h - e, 1, hr, 10)) / (2 * e)));
    }
}

TEST_CASE("lr schedule endpoints") {
    CHECK(lr_schedule(0, 100, 10, 3e-5) == 0.0);
    CHECK(lr_schedule(5, 100, 10, 3e-5) == doctest::Approx(1.5e-5));
    CHECK(lr_schedule(10, 100, 10, 3e-5) == doctest::Approx(3e-5));
    CHECK(lr_schedule(55, 100, 10, 3e-5) == doctest::Approx(1.5e-5));
    CHECK(lr_schedule(100, 100, 10, 3e-5) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(lr_schedule(0, 100, 0, 3e-5) == doctest::Approx(3e-5));
    CHECK_THROWS_AS(lr_schedule(101, 100, 10, 3e-5), Error);
    CHECK_THROWS_AS(lr_schedule(1, 100, 101, 3e-5), Error);
}

TEST_CASE("sequence log-probability") {
    UniformLM uniform(Vocabulary(std::vector<std::string>{"a"}));
    REQUIRE(uniform.vocab().size() == 4);
    CHECK(sequence_log_prob(uniform, "a", "a a a") == doctest::Approx(-4.158883).epsilon(1e-7));
    CHECK_THROWS_AS(sequence_log_prob(uniform, "a", ""), Error);
    CHECK_THROWS_AS(sequence_log_prob(uniform, "a", " ,; "), Error);

    BigramLM bigram;
    // 0.5 * 0.25 * 0.8 = 0.1
    CHECK(sequence_log_prob(bigram, "ignored", "x y z") == doctest::Approx(-2.302585093));
    // 0.2 * 0.2 * 0.2 = 0.008
    CHECK(sequence_log_prob(bigram, "", "z z z") == doctest::Approx(-4.828313737));
}

TEST_CASE("sft raises the target likelihood") {
    auto m = toy_model();
    const std::vector<TrainingExample> one(50, kData[0]);
    const double before = sequence_log_prob(m, kData[0].prompt, kData[0].target);
    SftConfig cfg;
    cfg.base_lr = 1e-3;
    const auto rep = sft(m, one, cfg);
    CHECK(rep.steps == 50);
    CHECK(sequence_log_prob(m, kData[0].prompt, kData[0].target) > before);
    CHECK(SftConfig{}.epochs == 1);
}

TEST_CASE("zero learning rate leaves the model bit-identical") {
    auto m = toy_model();
    const auto before = snapshot(m);
    SftConfig cfg;
    cfg.base_lr = 0;
    sft(m, kData, cfg);
    CHECK(snapshot(m) == before);
    CHECK_THROWS_AS(sft(m, {}, cfg), Error);
}

TEST_CASE("alignment examples come from the model's own greedy output") {
    auto m = toy_model(5);
    const auto examples = make_alignment_examples(m, kData);
    REQUIRE(examples.size() == kData.size());
    for (size_t i = 0; i < examples.size(); ++i) {
        const auto& e = examples[i];
        CHECK(!e.hypothesis.empty());
        CHECK(e.hypothesis == generate_nonempty(m, kData[i].prompt, 64));
        CHECK(e.target_rouge == 1.0);
        CHECK(e.hypo_rouge == doctest::Approx(rouge_l(e.hypothesis, e.target).f1));
    }
}

TEST_CASE("nce alignment raises targets and lowers hypotheses") {
    auto m = toy_model(5);
    const std::vector<std::string> hypos = {"unsafe night", "lively open", "too many cars", "welcomes everyone"};
    std::vector<AlignmentExample> examples;
    for (size_t i = 0; i < kData.size(); ++i)
        examples.push_back({kData[i].prompt, kData[i].target, hypos[i], 1.0, rouge_l(hypos[i], kData[i].target).f1});
    const auto before = snapshot(m);
    AlignConfig cfg;
    cfg.epochs = 25;
    cfg.max_steps = 100;
    const auto rep = align(m, examples, cfg);
    CHECK(rep.steps == 100);
    CHECK(rep.final_mean_target > rep.initial_mean_target);
    CHECK(rep.final_mean_hypo < rep.initial_mean_hypo);
    CHECK(rep.trainable_groups == std::vector<std::string>{"block_3", "block_4", "head"});

    const auto after = snapshot(m);
    CHECK(after[0] == before[0]);
    CHECK(after[1] == before[1]);
    CHECK(after[2] == before[2]);
    CHECK(after[5] != before[5]);
}

TEST_CASE("task-loss alignment with identical target and hypothesis does nothing") {
    auto m = toy_model();
    std::vector<AlignmentExample> data;
    for (const auto& e : kData) data.push_back({e.prompt, e.target, e.target, 1.0, 1.0});
    const auto before = snapshot(m);
    AlignConfig cfg;
    cfg.loss_kind = LossKind::task_loss;
    cfg.base_lr = 1e-2;
    cfg.epochs = 2;
    const auto rep = align(m, data, cfg);
    for (double l : rep.epoch_loss) CHECK(l == 0.0);
    CHECK(snapshot(m) == before);
}

TEST_CASE("freezing every group is an error") {
    auto m = toy_model();
    const auto examples = make_alignment_examples(m, kData);
    AlignConfig cfg;
    cfg.trainable_layers = 0;
    CHECK_THROWS_WITH_AS(align(m, examples, cfg), doctest::Contains("frozen"), Error);
    CHECK_THROWS_AS(trainable_group_indices(m, 7), Error);
    CHECK(trainable_group_indices(m, 6).size() == 6);
}

TEST_CASE("loss kinds and defaults") {
    CHECK(loss_kind_from_string("nce") == LossKind::nce);
    CHECK(loss_kind_from_string("task_loss") == LossKind::task_loss);
    CHECK_THROWS_AS(loss_kind_from_string("hinge"), Error);
    CHECK(AlignConfig::default_epochs(LossKind::nce) == 8);
    CHECK(AlignConfig::default_epochs(LossKind::task_loss) == 12);
    const AlignConfig c;
    CHECK(c.base_lr == 3e-5);
    CHECK(c.adam_beta1 == 0.9);
    CHECK(c.adam_beta2 == 0.99);
    CHECK(c.w_margin == 10.0);
    CHECK(c.trainable_layers == 3);
}
