#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "relex/autograd.hpp"
#include "relex/errors.hpp"
#include "relex/nn.hpp"
#include "relex/pair_head.hpp"
#include "relex/span_head.hpp"

namespace relex {

struct RelationTriplet {
    int head_index = 0; // into the decoded entity list
    int tail_index = 0;
    Entity head;
    Entity tail;
    int relation_index = 0;
    double score = 0.0;
};

enum class TripleScorerKind { PairMlp, Translational, Multiplicative, ComplexBilinear };

inline TripleScorerKind parse_scorer_kind(const std::string& s) {
    if (s == "pair_mlp") return TripleScorerKind::PairMlp;
    if (s == "translational") return TripleScorerKind::Translational;
    if (s == "multiplicative") return TripleScorerKind::Multiplicative;
    if (s == "complex_bilinear") return TripleScorerKind::ComplexBilinear;
    throw ConfigError("unknown relation scorer: " + s);
}

inline std::string to_string(TripleScorerKind k) {
    switch (k) {
    case TripleScorerKind::PairMlp: return "pair_mlp";
    case TripleScorerKind::Translational: return "translational";
    case TripleScorerKind::Multiplicative: return "multiplicative";
    case TripleScorerKind::ComplexBilinear: return "complex_bilinear";
    }
    throw ContractError("to_string: bad scorer kind");
}

// ─── Knowledge-graph triple scorers ─────────────────────────────────────────

/// Reference per-triple scorer over 1×D rows. The batched version must agree
/// with this one.
inline double triple_score(const Matrix& head, const Matrix& relation, const Matrix& tail,
                           TripleScorerKind kind) {
    if (head.rows() != 1 || relation.rows() != 1 || tail.rows() != 1 ||
        head.cols() != relation.cols() || head.cols() != tail.cols())
        throw ContractError("triple_score: expects matching 1×D rows");
    const Eigen::Index d = head.cols();
    switch (kind) {
    case TripleScorerKind::Translational:
        return -(head + relation - tail).norm();
    case TripleScorerKind::Multiplicative:
        return (head.array() * relation.array() * tail.array()).sum();
    case TripleScorerKind::ComplexBilinear: {
        if (d % 2 != 0)
            throw ConfigError("complex_bilinear: dimension must be even");
        const Eigen::Index h = d / 2;
        auto hre = head.leftCols(h).array(), him = head.rightCols(h).array();
        auto rre = relation.leftCols(h).array(), rim = relation.rightCols(h).array();
        auto tre = tail.leftCols(h).array(), tim = tail.rightCols(h).array();
        return (rre * (hre * tre + him * tim) + rim * (hre * tim - him * tre)).sum();
    }
    case TripleScorerKind::PairMlp:
        break;
    }
    throw ContractError("triple_score: pair_mlp is not a triple scorer");
}

/// Batched scores over all pairs × relations: heads/tails are P×D, relations
/// M×D; result P×M.
inline Value triple_scores(Tape& tape, Value heads, Value tails, Value relations,
                           TripleScorerKind kind) {
    if (heads.rows() != tails.rows() || heads.cols() != tails.cols() ||
        heads.cols() != relations.cols())
        throw ContractError("triple_scores: shape mismatch");
    const Eigen::Index d = heads.cols();
    const Eigen::Index m = relations.rows();
    switch (kind) {
    case TripleScorerKind::Translational: {
        // one column per relation keeps h + r − t exact (no cancellation of
        // expanded quadratic terms)
        Value base = ag::sub(heads, tails);
        Value out;
        for (Eigen::Index rel = 0; rel < m; ++rel) {
            Value diff = ag::bcast_add(base, ag::slice_rows(relations, rel, 1));
            Value col =
                ag::neg(ag::pow_scalar(ag::rowwise_sum(ag::mul(diff, diff)), 0.5));
            out = out ? ag::concat_cols(out, col) : col;
        }
        if (!out)
            out = ag::constant(*heads.tape(), Matrix::Zero(heads.rows(), 0));
        return out;
    }
    case TripleScorerKind::Multiplicative:
        return ag::matmul(ag::mul(heads, tails), ag::transpose(relations));
    case TripleScorerKind::ComplexBilinear: {
        if (d % 2 != 0)
            throw ConfigError("complex_bilinear: dimension must be even");
        const Eigen::Index h = d / 2;
        Value hre = ag::slice_cols(heads, 0, h), him = ag::slice_cols(heads, h, h);
        Value tre = ag::slice_cols(tails, 0, h), tim = ag::slice_cols(tails, h, h);
        Value rre = ag::slice_cols(relations, 0, h), rim = ag::slice_cols(relations, h, h);
        Value real_part = ag::add(ag::mul(hre, tre), ag::mul(him, tim));
        Value cross_part = ag::sub(ag::mul(hre, tim), ag::mul(him, tre));
        return ag::add(ag::matmul(real_part, ag::transpose(rre)),
                       ag::matmul(cross_part, ag::transpose(rim)));
    }
    case TripleScorerKind::PairMlp:
        break;
    }
    (void)tape;
    throw ContractError("triple_scores: pair_mlp is not a triple scorer");
}

// ─── Relation head ──────────────────────────────────────────────────────────

/// logits = pair_reps · relation_type_repsᵀ.
inline Value score_relations(Value pair_reps, Value relation_type_reps) {
    if (pair_reps.cols() != relation_type_reps.cols())
        throw ContractError("score_relations: dimension mismatch");
    return ag::matmul(pair_reps, ag::transpose(relation_type_reps));
}

class RelationHead {
public:
    struct Settings {
        int dim = 64;
        TripleScorerKind scorer = TripleScorerKind::PairMlp;
        double dropout = 0.1;
        nn::Activation activation = nn::Activation::None; // inside the pair layer
    };

    RelationHead(nn::ParameterStore& store, const Settings& s, std::mt19937& rng)
        : settings_(s) {
        if (s.dropout < 0.0 || s.dropout >= 1.0)
            throw ConfigError("relation head: dropout must lie in [0,1)");
        pair_layer_ = nn::Linear::create(store, "relation.pair", 2 * s.dim, s.dim, rng);
    }

    const Settings& settings() const { return settings_; }
    nn::Linear& pair_layer() { return pair_layer_; }

    /// p_{a,b} = MLP([s_a; s_b]) for every candidate pair, |pairs| × D.
    Value pair_representations(Tape& tape, Value entity_reps,
                               const std::vector<std::pair<int, int>>& pairs,
                               bool training, std::mt19937& rng) const {
        std::vector<int> head_idx, tail_idx;
        head_idx.reserve(pairs.size());
        tail_idx.reserve(pairs.size());
        for (const auto& [a, b] : pairs) {
            if (a == b)
                throw ContractError("relation head: self-pair");
            if (a < 0 || b < 0 || a >= entity_reps.rows() || b >= entity_reps.rows())
                throw ContractError("relation head: pair index out of range");
            head_idx.push_back(a);
            tail_idx.push_back(b);
        }
        Value features = ag::concat_cols(ag::gather_rows(entity_reps, head_idx),
                                         ag::gather_rows(entity_reps, tail_idx));
        Value projected = pair_layer_(tape, features);
        projected = nn::dropout(tape, projected, settings_.dropout, rng, training);
        return nn::activate(projected, settings_.activation);
    }

    /// Single-pair convenience wrapper around the batched path.
    Value pair_represent(Tape& tape, Value head_rep, Value tail_rep, bool training,
                         std::mt19937& rng) const {
        if (head_rep.rows() != 1 || tail_rep.rows() != 1)
            throw ContractError("pair_represent: expects 1×D rows");
        Value features = ag::concat_cols(head_rep, tail_rep);
        Value projected = pair_layer_(tape, features);
        projected = nn::dropout(tape, projected, settings_.dropout, rng, training);
        return nn::activate(projected, settings_.activation);
    }

    /// Logits over pairs × relation types for the configured scorer.
    Value score(Tape& tape, Value entity_reps, const std::vector<std::pair<int, int>>& pairs,
                Value relation_type_reps, bool training, std::mt19937& rng) const {
        if (settings_.scorer == TripleScorerKind::PairMlp) {
            Value reps = pair_representations(tape, entity_reps, pairs, training, rng);
            return score_relations(reps, relation_type_reps);
        }
        std::vector<int> head_idx, tail_idx;
        for (const auto& [a, b] : pairs) {
            if (a == b || a < 0 || b < 0 || a >= entity_reps.rows() ||
                b >= entity_reps.rows())
                throw ContractError("relation head: bad pair");
            head_idx.push_back(a);
            tail_idx.push_back(b);
        }
        return triple_scores(tape, ag::gather_rows(entity_reps, head_idx),
                             ag::gather_rows(entity_reps, tail_idx), relation_type_reps,
                             settings_.scorer);
    }

private:
    Settings settings_;
    nn::Linear pair_layer_;
};

/// Thresholded multi-label decoding. Output sorted by (head start, tail
/// start, relation_index), with span ends as the final tie-break.
inline std::vector<RelationTriplet> decode_relations(const Matrix& logits,
                                                     const PairCandidateSet& pairs,
                                                     const std::vector<Entity>& entities,
                                                     double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("decode_relations: threshold must be in (0,1)");
    if (logits.rows() != static_cast<Eigen::Index>(pairs.pairs.size()))
        throw ContractError("decode_relations: logit rows do not match pair count");

    std::vector<RelationTriplet> out;
    for (Eigen::Index p = 0; p < logits.rows(); ++p) {
        auto [a, b] = pairs.pairs[static_cast<std::size_t>(p)];
        if (a < 0 || b < 0 || a >= static_cast<int>(entities.size()) ||
            b >= static_cast<int>(entities.size()))
            throw ContractError("decode_relations: pair index outside entity list");
        for (Eigen::Index rel = 0; rel < logits.cols(); ++rel) {
            double prob = logistic(logits(p, rel));
            if (prob > threshold)
                out.push_back({a, b, entities[static_cast<std::size_t>(a)],
                               entities[static_cast<std::size_t>(b)],
                               static_cast<int>(rel), prob});
        }
    }
    std::sort(out.begin(), out.end(), [](const RelationTriplet& x, const RelationTriplet& y) {
        if (x.head.span.start != y.head.span.start)
            return x.head.span.start < y.head.span.start;
        if (x.tail.span.start != y.tail.span.start)
            return x.tail.span.start < y.tail.span.start;
        if (x.relation_index != y.relation_index)
            return x.relation_index < y.relation_index;
        if (x.head.span.end != y.head.span.end)
            return x.head.span.end < y.head.span.end;
        return x.tail.span.end < y.tail.span.end;
    });
    return out;
}

} // namespace relex
