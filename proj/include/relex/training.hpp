#pragma once

// Desk-scale two-stage training loop: AdamW with decoupled weight decay,
// differential learning rates (encoder vs task heads, split on the tensor
// name prefix "encoder."), linear warmup, a per-step loss trace, and a
// central-finite-difference gradient check.

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "relex/config.hpp"
#include "relex/errors.hpp"
#include "relex/model.hpp"

namespace relex {

// synthetic-corpus sizes standing in for the original large-scale stages
inline constexpr int kDefaultStage1Examples = 2000;
inline constexpr int kDefaultStage2Examples = 200;

/// Linear ramp from 0 up to `peak` across the first `warmup_steps` steps
/// (1-based), constant afterwards.
inline double warmup_lr(double peak, int step, int warmup_steps) {
    if (step < 1)
        throw ContractError("warmup_lr: steps are 1-based");
    if (warmup_steps <= 0 || step >= warmup_steps) return peak;
    return peak * (static_cast<double>(step) / static_cast<double>(warmup_steps));
}

struct TraceRow {
    int step = 0;
    double encoder_lr = 0.0;
    double head_lr = 0.0;
    double entity_loss = 0.0;
    double adjacency_loss = 0.0;
    double relation_loss = 0.0;
    double total_loss = 0.0;

    bool operator==(const TraceRow&) const = default;
};

inline std::string trace_to_csv(const std::vector<TraceRow>& trace) {
    std::string out =
        "step,encoder_lr,head_lr,entity_loss,adjacency_loss,relation_loss,total_loss\n";
    for (const TraceRow& row : trace) {
        out += std::to_string(row.step);
        for (double v : {row.encoder_lr, row.head_lr, row.entity_loss,
                         row.adjacency_loss, row.relation_loss, row.total_loss}) {
            out += ',';
            out += detail::format_double(v);
        }
        out += '\n';
    }
    return out;
}

inline void save_trace(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open trace file for writing: " + path);
    out << trace_to_csv(trace);
}

/// Adaptive-moment descent with decoupled weight decay. Moment buffers are
/// owned here, so constructing a fresh optimizer reinitializes the state.
class AdamW {
public:
    struct Group {
        std::vector<nn::Tensor*> tensors;
    };

    AdamW(std::vector<Group> groups, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8)
        : groups_(std::move(groups)), weight_decay_(weight_decay), beta1_(beta1),
          beta2_(beta2), eps_(eps) {
        state_.resize(groups_.size());
        for (std::size_t g = 0; g < groups_.size(); ++g)
            for (nn::Tensor* t : groups_[g].tensors)
                state_[g].push_back({Matrix::Zero(t->value.rows(), t->value.cols()),
                                     Matrix::Zero(t->value.rows(), t->value.cols())});
    }

    /// One update from the gradients currently in the tensors; `group_lrs`
    /// must carry one rate per group.
    void step(const std::vector<double>& group_lrs) {
        if (group_lrs.size() != groups_.size())
            throw ContractError("AdamW::step: one learning rate per group required");
        ++t_;
        double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t g = 0; g < groups_.size(); ++g) {
            double lr = group_lrs[g];
            if (lr == 0.0) continue;
            for (std::size_t i = 0; i < groups_[g].tensors.size(); ++i) {
                nn::Tensor* t = groups_[g].tensors[i];
                Slot& s = state_[g][i];
                s.m = beta1_ * s.m + (1.0 - beta1_) * t->grad;
                s.v = beta2_ * s.v + (1.0 - beta2_) * t->grad.cwiseProduct(t->grad);
                Matrix update = (s.m / c1).array() /
                                ((s.v / c2).array().sqrt() + eps_);
                t->value -= lr * (update + weight_decay_ * t->value);
            }
        }
    }

    long steps_taken() const { return t_; }

private:
    struct Slot {
        Matrix m, v;
    };

    std::vector<Group> groups_;
    std::vector<std::vector<Slot>> state_;
    double weight_decay_, beta1_, beta2_, eps_;
    long t_ = 0;
};

/// Two groups: tensors named "encoder.*" take encoder_lr, the rest head_lr.
inline std::vector<AdamW::Group> parameter_groups(nn::ParameterStore& store) {
    AdamW::Group encoder, heads;
    for (nn::Tensor* t : store.all()) {
        if (t->name.rfind("encoder.", 0) == 0)
            encoder.tensors.push_back(t);
        else
            heads.tensors.push_back(t);
    }
    return {encoder, heads};
}

struct StageResult {
    std::vector<TraceRow> trace;
    int pruned_entities = 0;
    int dropped_relations = 0;
};

/// One optimization stage over the corpus. Fresh optimizer state, per-epoch
/// shuffling, batched loss averaging, and a row of trace per step. Loss going
/// non-finite raises TrainingError carrying the step index.
inline StageResult train_stage(Model& model,
                               const std::vector<AnnotatedExample>& corpus,
                               const std::vector<std::string>& entity_labels,
                               const std::vector<std::string>& relation_labels,
                               const StageConfig& stage, unsigned seed) {
    if (corpus.empty())
        throw ConfigError("train_stage: corpus must be nonempty");
    stage.validate("stage");

    std::mt19937 rng(seed);
    AdamW optimizer(parameter_groups(model.parameters()), stage.weight_decay);
    const int n = static_cast<int>(corpus.size());
    const int steps_per_epoch = (n + stage.batch_size - 1) / stage.batch_size;
    const int total_steps = stage.epochs * steps_per_epoch;
    const int warmup_steps =
        static_cast<int>(stage.warmup_ratio * static_cast<double>(total_steps));

    StageResult result;
    result.trace.reserve(static_cast<std::size_t>(total_steps));
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0u);

    int global_step = 0;
    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (int start = 0; start < n; start += stage.batch_size) {
            ++global_step;
            const int batch = std::min(stage.batch_size, n - start);
            model.parameters().zero_grad();

            TraceRow row;
            row.step = global_step;
            {
                ag::Tape tape;
                ag::Value batch_total;
                for (int i = 0; i < batch; ++i) {
                    TrainingStep s = model.training_loss(
                        tape, corpus[order[static_cast<std::size_t>(start + i)]],
                        entity_labels, relation_labels, rng, true);
                    row.entity_loss += s.entity.scalar();
                    row.adjacency_loss += s.adjacency.scalar();
                    row.relation_loss += s.relation.scalar();
                    result.pruned_entities += s.pruned_entities;
                    result.dropped_relations += s.dropped_relations;
                    batch_total = batch_total ? ag::add(batch_total, s.total) : s.total;
                }
                ag::Value mean = ag::scale(batch_total, 1.0 / batch);
                row.entity_loss /= batch;
                row.adjacency_loss /= batch;
                row.relation_loss /= batch;
                row.total_loss = mean.scalar();
                if (!std::isfinite(row.total_loss))
                    throw TrainingError("loss diverged to a non-finite value",
                                        global_step);
                ag::backward(mean);
            }

            row.encoder_lr = warmup_lr(stage.encoder_lr, global_step, warmup_steps);
            row.head_lr = warmup_lr(stage.head_lr, global_step, warmup_steps);
            optimizer.step({row.encoder_lr, row.head_lr});
            result.trace.push_back(row);
        }
    }
    return result;
}

struct GradientCheckCoordinate {
    std::string tensor;
    int row = 0;
    int col = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double relative_error = 0.0;
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::vector<GradientCheckCoordinate> coordinates;
};

/// Central finite differences against the tape gradients of the eval-mode
/// total loss, sampling `per_tensor` coordinates from every tensor outside
/// `frozen_groups` (group = tensor name up to the first dot). Sampling is
/// deterministic in `seed`.
inline GradientCheckResult gradient_check(
    Model& model, const AnnotatedExample& example,
    const std::vector<std::string>& entity_labels,
    const std::vector<std::string>& relation_labels, double epsilon = 1e-6,
    unsigned seed = 0, int per_tensor = 2,
    const std::set<std::string>& frozen_groups = {}) {
    if (epsilon <= 0.0)
        throw ConfigError("gradient_check: epsilon must be positive");
    if (per_tensor < 1)
        throw ConfigError("gradient_check: per_tensor must be at least 1");

    std::mt19937 unused_rng(0);
    auto loss_value = [&]() {
        ag::Tape tape;
        return model
            .training_loss(tape, example, entity_labels, relation_labels,
                           unused_rng, false)
            .total.scalar();
    };

    model.parameters().zero_grad();
    {
        ag::Tape tape;
        TrainingStep step = model.training_loss(tape, example, entity_labels,
                                                relation_labels, unused_rng, false);
        ag::backward(step.total);
    }

    std::mt19937 sampler(seed);
    GradientCheckResult result;
    for (nn::Tensor* t : model.parameters().all()) {
        std::string group = t->name.substr(0, t->name.find('.'));
        if (frozen_groups.count(group)) continue;
        std::uniform_int_distribution<int> pick_row(
            0, static_cast<int>(t->value.rows()) - 1);
        std::uniform_int_distribution<int> pick_col(
            0, static_cast<int>(t->value.cols()) - 1);
        for (int k = 0; k < per_tensor; ++k) {
            GradientCheckCoordinate coord;
            coord.tensor = t->name;
            coord.row = pick_row(sampler);
            coord.col = pick_col(sampler);
            coord.analytic = t->grad(coord.row, coord.col);

            double saved = t->value(coord.row, coord.col);
            t->value(coord.row, coord.col) = saved + epsilon;
            double up = loss_value();
            t->value(coord.row, coord.col) = saved - epsilon;
            double down = loss_value();
            t->value(coord.row, coord.col) = saved;

            coord.numeric = (up - down) / (2.0 * epsilon);
            // absolute floor keeps double-precision roundoff on near-zero
            // coordinates from registering as a relative disagreement
            double scale = std::max({std::abs(coord.analytic),
                                     std::abs(coord.numeric), 1e-4});
            coord.relative_error = std::abs(coord.analytic - coord.numeric) / scale;
            result.max_relative_error =
                std::max(result.max_relative_error, coord.relative_error);
            result.coordinates.push_back(std::move(coord));
        }
    }
    return result;
}

} // namespace relex
