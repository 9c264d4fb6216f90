#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "compromise/eval_reporting.hpp"
#include "compromise/language_model.hpp"

namespace compromise {

/// -log σ(s_target) - log σ(-s_hypo)
double nce_loss(double s_target, double s_hypo);

struct LossGradient {
    double d_target = 0.0;
    double d_hypo = 0.0;
};

LossGradient nce_gradient(double s_target, double s_hypo);

/// max(0, s_hypo - s_target + |target_rouge - hypo_rouge| * w_margin)
double task_loss(double s_target, double s_hypo, double target_rouge, double hypo_rouge,
                 double w_margin);

/// (-1, +1) while the hinge is active, 0 otherwise (including the kink).
LossGradient task_loss_gradient(double s_target, double s_hypo, double target_rouge,
                                double hypo_rouge, double w_margin);

/// Linear warm-up to base_lr, then cosine decay to 0 at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps,
                   double base_lr);

/// Sum of completion token log-probabilities given the prompt.
double sequence_log_prob(const TrainableLM& model, std::string_view prompt,
                         std::string_view completion);

struct AlignmentExample {
    std::string prompt;
    std::string target;
    std::string hypothesis;
    double target_rouge = 1.0;
    double hypo_rouge = 0.0;
};

enum class LossKind { nce, task_loss };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(std::string_view s);

struct AlignConfig {
    LossKind loss_kind = LossKind::nce;
    int epochs = 8;
    double base_lr = 3e-5;
    std::int64_t warmup_steps = 0;
    double adam_beta1 = 0.90;
    double adam_beta2 = 0.99;
    double w_margin = 10.0;
    int trainable_layers = 3;
    std::uint64_t seed = 0;
    int batch_size = 1;
    std::optional<std::int64_t> max_steps;
    RougeVariant rouge = RougeVariant::rougeL;

    /// 8 for NCE, 12 for the task loss.
    static int default_epochs(LossKind k) { return k == LossKind::nce ? 8 : 12; }
};

nlohmann::json to_json(const AlignConfig& c);

struct SftConfig {
    int epochs = 1;
    double base_lr = 3e-5;
    std::int64_t warmup_steps = 0;
    double adam_beta1 = 0.90;
    double adam_beta2 = 0.99;
    std::uint64_t seed = 0;
    int batch_size = 1;
    /// Unset trains every group.
    std::optional<int> trainable_layers;
};

nlohmann::json to_json(const SftConfig& c);

struct TrainingExample {
    std::string prompt;
    std::string target;
};

struct TrainReport {
    std::int64_t steps = 0;
    std::vector<double> epoch_loss;
    double initial_mean_target = 0.0;
    double final_mean_target = 0.0;
    double initial_mean_hypo = 0.0;
    double final_mean_hypo = 0.0;
    std::vector<std::string> trainable_groups;
};

nlohmann::json to_json(const TrainReport& r);

/// Negative log-likelihood fine-tuning on prompt -> target.
TrainReport sft(TrainableLM& model, const std::vector<TrainingExample>& examples,
                const SftConfig& cfg = {});

/// Greedy decoding; when that stops immediately, seeded samples until one has tokens.
std::string generate_nonempty(const TrainableLM& model, std::string_view prompt, int max_tokens);

/// Greedy hypotheses from `model` (the fine-tuned one), scored against the target.
std::vector<AlignmentExample> make_alignment_examples(const TrainableLM& model,
                                                      const std::vector<TrainingExample>& data,
                                                      RougeVariant rouge = RougeVariant::rougeL,
                                                      int max_tokens = 64);

/// Updates only the last cfg.trainable_layers parameter groups.
TrainReport align(TrainableLM& model, const std::vector<AlignmentExample>& data,
                  const AlignConfig& cfg);

/// Indices of the last k groups; throws when k selects nothing or too much.
std::vector<std::size_t> trainable_group_indices(const TrainableLM& model, int k);

}  // namespace compromise
