#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "relex/autograd.hpp"
#include "relex/errors.hpp"

namespace relex {

using ag::Matrix;
using ag::Tape;
using ag::Value;

struct LossConfig {
    double alpha = 0.75;
    double gamma = 0.0;
    double lambda_entity = 1.0;
    double lambda_adjacency = 0.0;
    double lambda_relation = 1.0;
    double negative_sample_rate = 1.0;

    bool operator==(const LossConfig&) const = default;

    void validate() const {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw ConfigError("loss: alpha must lie in (0,1)");
        if (gamma < 0.0)
            throw ConfigError("loss: gamma must be nonnegative");
        if (lambda_entity < 0.0 || lambda_adjacency < 0.0 || lambda_relation < 0.0)
            throw ConfigError("loss: lambda weights must be nonnegative");
        if (lambda_entity == 0.0 && lambda_adjacency == 0.0 && lambda_relation == 0.0)
            throw ConfigError("loss: at least one lambda must be positive");
        if (!(negative_sample_rate > 0.0 && negative_sample_rate <= 1.0))
            throw ConfigError("loss: negative_sample_rate must lie in (0,1]");
    }
};

constexpr double kProbEps = 1e-7;

/// −α(1−p_t)^γ log(p_t) for one cell; α weights positives, 1−α negatives.
inline double focal_loss(double p, int label, double alpha, double gamma) {
    p = std::clamp(p, kProbEps, 1.0 - kProbEps);
    const double pt = label == 1 ? p : 1.0 - p;
    const double a = label == 1 ? alpha : 1.0 - alpha;
    return -a * std::pow(1.0 - pt, gamma) * std::log(pt);
}

/// Keeps every positive cell; keeps each negative independently with
/// probability `rate`. Returns a 0/1 matrix of the label shape.
inline Matrix negative_sample(const Matrix& labels, double rate, std::uint64_t seed) {
    if (!(rate > 0.0 && rate <= 1.0))
        throw ConfigError("negative_sample: rate must lie in (0,1]");
    Matrix mask = Matrix::Ones(labels.rows(), labels.cols());
    if (rate == 1.0)
        return mask;
    std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
    std::bernoulli_distribution keep(rate);
    for (Eigen::Index c = 0; c < labels.cols(); ++c)
        for (Eigen::Index r = 0; r < labels.rows(); ++r)
            if (labels(r, c) == 0.0 && !keep(rng))
                mask(r, c) = 0.0;
    return mask;
}

/// Mean focal loss over the kept cells of a probability grid; 0 when nothing
/// is kept. `gold` and `keep` are 0/1 matrices of the grid shape.
inline Value focal_grid_loss_probs(Tape& tape, Value probs, const Matrix& gold,
                                   const Matrix& keep, double alpha, double gamma) {
    if (probs.rows() != gold.rows() || probs.cols() != gold.cols() ||
        gold.rows() != keep.rows() || gold.cols() != keep.cols())
        throw ContractError("focal loss: grid shapes disagree");
    const double kept = keep.sum();
    if (probs.rows() == 0 || probs.cols() == 0 || kept == 0.0)
        return ag::constant_scalar(tape, 0.0);

    Value p = ag::clamp(probs, kProbEps, 1.0 - kProbEps);
    // p_t = y·p + (1−y)·(1−p) = (2y−1)·p + (1−y)
    Matrix sign = 2.0 * gold.array() - 1.0;
    Matrix offset = 1.0 - gold.array();
    Value pt = ag::add(ag::mul(p, ag::constant(tape, std::move(sign))),
                       ag::constant(tape, std::move(offset)));
    Matrix alpha_cell = (alpha * gold.array() + (1.0 - alpha) * (1.0 - gold.array()));
    Value weighted;
    if (gamma == 0.0) {
        weighted = ag::constant(tape, std::move(alpha_cell));
    } else {
        Value focus = ag::pow_scalar(ag::sub(ag::constant(tape,
                                                          Matrix::Ones(pt.rows(), pt.cols())),
                                             pt),
                                     gamma);
        weighted = ag::mul(ag::constant(tape, std::move(alpha_cell)), focus);
    }
    Value cells = ag::neg(ag::mul(weighted, ag::log_(pt)));
    Value kept_cells = ag::mul(cells, ag::constant(tape, keep));
    return ag::scale(ag::sum_all(kept_cells), 1.0 / kept);
}

/// Same reduction over a logit grid (probabilities taken through σ).
inline Value focal_grid_loss_logits(Tape& tape, Value logits, const Matrix& gold,
                                    const Matrix& keep, double alpha, double gamma) {
    if (logits.rows() == 0 || logits.cols() == 0)
        return ag::constant_scalar(tape, 0.0);
    return focal_grid_loss_probs(tape, ag::sigmoid(logits), gold, keep, alpha, gamma);
}

/// Span×type grid against gold entity targets.
inline Value entity_loss(Tape& tape, Value logits, const Matrix& gold, const Matrix& keep,
                         const LossConfig& cfg) {
    return focal_grid_loss_logits(tape, logits, gold, keep, cfg.alpha, cfg.gamma);
}

/// Entity×entity soft-adjacency grid; decoders emit probabilities directly.
inline Value adjacency_loss(Tape& tape, Value probabilities, const Matrix& gold,
                            const Matrix& keep, const LossConfig& cfg) {
    if (probabilities.rows() == 0 || probabilities.cols() == 0)
        return ag::constant_scalar(tape, 0.0);
    return focal_grid_loss_probs(tape, probabilities, gold, keep, cfg.alpha, cfg.gamma);
}

/// Pair×relation grid against gold relation targets.
inline Value relation_loss(Tape& tape, Value logits, const Matrix& gold, const Matrix& keep,
                           const LossConfig& cfg) {
    return focal_grid_loss_logits(tape, logits, gold, keep, cfg.alpha, cfg.gamma);
}

/// λ_E·l_ent + λ_A·l_adj + λ_R·l_rel.
inline Value total_loss(Tape& tape, Value l_ent, Value l_adj, Value l_rel,
                        const LossConfig& cfg) {
    (void)tape;
    return ag::add(ag::add(ag::scale(l_ent, cfg.lambda_entity),
                           ag::scale(l_adj, cfg.lambda_adjacency)),
                   ag::scale(l_rel, cfg.lambda_relation));
}

} // namespace relex
