#include "compromise/alignment.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "compromise/diagnostics.hpp"
#include "compromise/optim.hpp"
#include "compromise/random.hpp"

namespace compromise {

using nlohmann::json;

namespace {

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void require_finite(std::initializer_list<double> xs, const char* what) {
    for (double x : xs)
        if (!std::isfinite(x)) throw Error(std::string(what) + ": non-finite input");
}

}  // namespace

double nce_loss(double s_target, double s_hypo) {
    require_finite({s_target, s_hypo}, "nce_loss");
    return softplus(-s_target) + softplus(s_hypo);
}

LossGradient nce_gradient(double s_target, double s_hypo) {
    require_finite({s_target, s_hypo}, "nce_gradient");
    return {sigmoid(s_target) - 1.0, sigmoid(s_hypo)};
}

double task_loss(double s_target, double s_hypo, double target_rouge, double hypo_rouge,
                 double w_margin) {
    require_finite({s_target, s_hypo, target_rouge, hypo_rouge, w_margin}, "task_loss");
    if (w_margin < 0) throw Error("task_loss: w_margin must be >= 0");
    return std::max(0.0, s_hypo - s_target + std::abs(target_rouge - hypo_rouge) * w_margin);
}

LossGradient task_loss_gradient(double s_target, double s_hypo, double target_rouge,
                                double hypo_rouge, double w_margin) {
    if (task_loss(s_target, s_hypo, target_rouge, hypo_rouge, w_margin) > 0) return {-1.0, 1.0};
    return {};
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                   double base_lr) {
    if (step < 0 || step > total_steps || warmup_steps < 0 || warmup_steps > total_steps)
        throw Error("lr_schedule: need 0 <= step <= total and 0 <= warmup <= total");
    if (step < warmup_steps)
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (total_steps == warmup_steps) return base_lr;
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double sequence_log_prob(const TrainableLM& model, std::string_view prompt,
                         std::string_view completion) {
    const auto c = model.vocab().encode(completion);
    if (c.empty()) throw Error("sequence_log_prob: completion has no tokens");
    const auto lp = model.token_log_probs(model.vocab().encode(prompt), c);
    const double s = std::accumulate(lp.begin(), lp.end(), 0.0);
    if (!std::isfinite(s)) throw Error("sequence_log_prob: non-finite log-probability");
    return s;
}

std::string to_string(LossKind k) { return k == LossKind::nce ? "nce" : "task_loss"; }

LossKind loss_kind_from_string(std::string_view s) {
    if (s == "nce") return LossKind::nce;
    if (s == "task_loss" || s == "task") return LossKind::task_loss;
    throw Error("unknown loss '" + std::string(s) + "' (valid: nce, task_loss)");
}

json to_json(const AlignConfig& c) {
    return {{"loss_kind", to_string(c.loss_kind)},
            {"epochs", c.epochs},
            {"base_lr", c.base_lr},
            {"warmup_steps", c.warmup_steps},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"w_margin", c.w_margin},
            {"trainable_layers", c.trainable_layers},
            {"seed", c.seed},
            {"batch_size", c.batch_size},
            {"max_steps", c.max_steps ? json(*c.max_steps) : json(nullptr)},
            {"rouge", to_string(c.rouge)}};
}

json to_json(const SftConfig& c) {
    return {{"epochs", c.epochs},
            {"base_lr", c.base_lr},
            {"warmup_steps", c.warmup_steps},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"seed", c.seed},
            {"batch_size", c.batch_size},
            {"trainable_layers", c.trainable_layers ? json(*c.trainable_layers) : json(nullptr)}};
}

json to_json(const TrainReport& r) {
    return {{"steps", r.steps},
            {"epoch_loss", r.epoch_loss},
            {"initial_mean_target", r.initial_mean_target},
            {"final_mean_target", r.final_mean_target},
            {"initial_mean_hypo", r.initial_mean_hypo},
            {"final_mean_hypo", r.final_mean_hypo},
            {"trainable_groups", r.trainable_groups}};
}

std::vector<std::size_t> trainable_group_indices(const TrainableLM& model, int k) {
    const auto n = model.num_groups();
    if (k <= 0) throw Error("every parameter group is frozen; nothing to train");
    if (static_cast<std::size_t>(k) > n)
        throw Error("trainable_layers = " + std::to_string(k) + " but the model has only " +
                    std::to_string(n) + " parameter groups");
    std::vector<std::size_t> idx;
    for (std::size_t g = n - static_cast<std::size_t>(k); g < n; ++g) idx.push_back(g);
    return idx;
}

namespace {

struct Trainer {
    TrainableLM& model;
    std::vector<std::size_t> groups;
    std::vector<AdamState> adam;
    AdamHyper hyper;
    GroupGradients grads;

    Trainer(TrainableLM& m, std::vector<std::size_t> g, double b1, double b2)
        : model(m), groups(std::move(g)), hyper{b1, b2, 1e-8}, grads(m.zero_gradients()) {
        for (auto gi : groups) adam.emplace_back(model.group_params(gi).size());
    }

    void clear() {
        for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    }

    void apply(double lr) {
        if (lr == 0.0) return;
        for (size_t i = 0; i < groups.size(); ++i)
            adam[i].step(model.group_params(groups[i]), grads[groups[i]], lr, hyper);
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (auto g : groups) out.push_back(model.group_name(g));
        return out;
    }
};

std::int64_t plan_steps(size_t n, int batch, int epochs, std::optional<std::int64_t> max_steps) {
    if (epochs <= 0) throw Error("epochs must be positive");
    if (batch <= 0) throw Error("batch_size must be positive");
    const auto per_epoch = static_cast<std::int64_t>((n + static_cast<size_t>(batch) - 1) /
                                                     static_cast<size_t>(batch));
    std::int64_t total = per_epoch * epochs;
    if (max_steps) total = std::min(total, *max_steps);
    return total;
}

std::vector<int> encode_nonempty(const TrainableLM& model, const std::string& text,
                                 const char* what) {
    auto ids = model.vocab().encode(text);
    if (ids.empty()) throw Error(std::string(what) + " has no tokens: '" + text + "'");
    return ids;
}

}  // namespace

TrainReport sft(TrainableLM& model, const std::vector<TrainingExample>& examples,
                const SftConfig& cfg) {
    if (examples.empty()) throw Error("sft: no training examples");
    std::vector<std::size_t> groups;
    if (cfg.trainable_layers) {
        groups = trainable_group_indices(model, *cfg.trainable_layers);
    } else {
        groups.resize(model.num_groups());
        std::iota(groups.begin(), groups.end(), 0);
    }
    Trainer tr(model, groups, cfg.adam_beta1, cfg.adam_beta2);

    std::vector<std::vector<int>> prompts, targets;
    for (const auto& e : examples) {
        prompts.push_back(model.vocab().encode(e.prompt));
        targets.push_back(encode_nonempty(model, e.target, "sft target"));
    }
    auto mean_target = [&] {
        double s = 0;
        for (size_t i = 0; i < examples.size(); ++i) {
            const auto lp = model.token_log_probs(prompts[i], targets[i]);
            s += std::accumulate(lp.begin(), lp.end(), 0.0);
        }
        return s / static_cast<double>(examples.size());
    };

    TrainReport report;
    report.trainable_groups = tr.names();
    report.initial_mean_target = mean_target();
    const auto total = plan_steps(examples.size(), cfg.batch_size, cfg.epochs, std::nullopt);
    Rng rng(cfg.seed);
    std::vector<size_t> order(examples.size());
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        seeded_shuffle(order, rng);
        double epoch_loss = 0;
        for (size_t start = 0; start < order.size() && step < total;
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const double b = static_cast<double>(end - start);
            tr.clear();
            for (size_t j = start; j < end; ++j) {
                const size_t i = order[j];
                const auto lp = model.token_log_probs(prompts[i], targets[i]);
                epoch_loss -= std::accumulate(lp.begin(), lp.end(), 0.0);
                model.accumulate_log_prob_gradient(prompts[i], targets[i], -1.0 / b, tr.grads);
            }
            ++step;
            tr.apply(lr_schedule(step, total + 1, cfg.warmup_steps, cfg.base_lr));
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(examples.size()));
    }
    report.steps = step;
    report.final_mean_target = mean_target();
    return report;
}

std::string generate_nonempty(const TrainableLM& model, std::string_view prompt, int max_tokens) {
    std::string out = model.generate(prompt, SamplingConfig{0.0, 0, max_tokens});
    for (std::uint64_t s = 1; out.empty() && s <= 32; ++s)
        out = model.generate(prompt, SamplingConfig{1.0, s, max_tokens});
    if (out.empty()) throw Error("model produced no tokens for prompt '" + std::string(prompt) + "'");
    return out;
}

std::vector<AlignmentExample> make_alignment_examples(const TrainableLM& model,
                                                      const std::vector<TrainingExample>& data,
                                                      RougeVariant rouge_variant, int max_tokens) {
    std::vector<AlignmentExample> out;
    for (const auto& d : data) {
        std::string hyp = generate_nonempty(model, d.prompt, max_tokens);
        AlignmentExample ex;
        ex.prompt = d.prompt;
        ex.target = d.target;
        ex.hypothesis = hyp;
        ex.target_rouge = 1.0;
        ex.hypo_rouge = rouge(hyp, d.target, rouge_variant).f1;
        out.push_back(std::move(ex));
    }
    return out;
}

TrainReport align(TrainableLM& model, const std::vector<AlignmentExample>& data,
                  const AlignConfig& cfg) {
    if (data.empty()) throw Error("align: no alignment examples");
    if (cfg.w_margin < 0) throw Error("align: w_margin must be >= 0");
    Trainer tr(model, trainable_group_indices(model, cfg.trainable_layers), cfg.adam_beta1,
               cfg.adam_beta2);

    std::vector<std::vector<int>> prompts, targets, hypos;
    for (const auto& e : data) {
        if (e.hypo_rouge < 0 || e.hypo_rouge > 1 || e.target_rouge < 0 || e.target_rouge > 1)
            throw Error("align: ROUGE values must lie in [0, 1]");
        prompts.push_back(model.vocab().encode(e.prompt));
        targets.push_back(encode_nonempty(model, e.target, "alignment target"));
        hypos.push_back(encode_nonempty(model, e.hypothesis, "alignment hypothesis"));
    }
    auto seq = [&](const std::vector<int>& p, const std::vector<int>& c) {
        const auto lp = model.token_log_probs(p, c);
        return std::accumulate(lp.begin(), lp.end(), 0.0);
    };
    auto means = [&](double& t, double& h) {
        t = h = 0;
        for (size_t i = 0; i < data.size(); ++i) {
            t += seq(prompts[i], targets[i]);
            h += seq(prompts[i], hypos[i]);
        }
        t /= static_cast<double>(data.size());
        h /= static_cast<double>(data.size());
    };

    TrainReport report;
    report.trainable_groups = tr.names();
    means(report.initial_mean_target, report.initial_mean_hypo);
    const auto total = plan_steps(data.size(), cfg.batch_size, cfg.epochs, cfg.max_steps);
    Rng rng(cfg.seed);
    std::vector<size_t> order(data.size());
    std::int64_t step = 0;
    for (int epoch = 0; step < total; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        seeded_shuffle(order, rng);
        double epoch_loss = 0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size() && step < total;
             start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            const double b = static_cast<double>(end - start);
            tr.clear();
            bool any = false;
            for (size_t j = start; j < end; ++j) {
                const size_t i = order[j];
                const auto& e = data[i];
                const double st = seq(prompts[i], targets[i]);
                const double sh = seq(prompts[i], hypos[i]);
                LossGradient g;
                if (cfg.loss_kind == LossKind::nce) {
                    epoch_loss += nce_loss(st, sh);
                    g = nce_gradient(st, sh);
                } else {
                    epoch_loss += task_loss(st, sh, e.target_rouge, e.hypo_rouge, cfg.w_margin);
                    g = task_loss_gradient(st, sh, e.target_rouge, e.hypo_rouge, cfg.w_margin);
                }
                if (g.d_target != 0.0) {
                    model.accumulate_log_prob_gradient(prompts[i], targets[i], g.d_target / b, tr.grads);
                    any = true;
                }
                if (g.d_hypo != 0.0) {
                    model.accumulate_log_prob_gradient(prompts[i], hypos[i], g.d_hypo / b, tr.grads);
                    any = true;
                }
                ++seen;
            }
            ++step;
            if (any) tr.apply(lr_schedule(step, total + 1, cfg.warmup_steps, cfg.base_lr));
        }
        report.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
        (void)epoch;
    }
    report.steps = step;
    means(report.final_mean_target, report.final_mean_hypo);
    return report;
}

}  // namespace compromise
