#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "relex/autograd.hpp"
#include "relex/errors.hpp"
#include "relex/nn.hpp"

namespace relex {

using ag::Matrix;
using ag::Tape;
using ag::Value;

struct Span {
    int start = 0; // word index, inclusive
    int end = 0;   // word index, inclusive

    int width() const { return end - start + 1; }
    bool operator==(const Span& o) const { return start == o.start && end == o.end; }
};

struct Entity {
    Span span;
    int type_index = 0;
    double score = 0.0; // probability in (0,1)
};

/// True when the spans share at least one word.
inline bool spans_overlap(Span a, Span b) {
    return a.start <= b.end && b.start <= a.end;
}

/// Partial-overlap test used by nested decoding: spans cross each other's
/// boundary without one containing the other.
inline bool spans_partially_overlap(Span a, Span b) {
    return (a.start < b.start && b.start <= a.end && a.end < b.end) ||
           (b.start < a.start && a.start <= b.end && b.end < a.end);
}

/// All spans of width ≤ max_width, ordered by (start, end).
inline std::vector<Span> enumerate_spans(int word_count, int max_width) {
    if (word_count < 0)
        throw ContractError("enumerate_spans: negative word count");
    if (max_width < 1)
        throw ContractError("enumerate_spans: max_width must be at least 1");
    std::vector<Span> spans;
    for (int i = 0; i < word_count; ++i)
        for (int j = i; j < word_count && j - i + 1 <= max_width; ++j)
            spans.push_back({i, j});
    return spans;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Span representation and entity-type projection layers.
class SpanHead {
public:
    struct Settings {
        int dim = 64;
        int max_width = 12;
        int width_embedding_dim = 16;
        nn::Activation span_activation = nn::Activation::None;
        nn::Activation type_activation = nn::Activation::Relu;
    };

    SpanHead(nn::ParameterStore& store, const Settings& s, std::mt19937& rng)
        : settings_(s) {
        if (s.max_width < 1)
            throw ConfigError("span head: max_width must be at least 1");
        if (s.width_embedding_dim < 1)
            throw ConfigError("span head: width embedding dimension must be positive");
        width_embedding_ = &store.create("span.width_embedding", s.max_width,
                                         s.width_embedding_dim);
        nn::init_normal(*width_embedding_, rng, 0.02);
        span_proj_ = nn::Linear::create(store, "span.proj",
                                        2 * s.dim + s.width_embedding_dim, s.dim, rng);
        type_proj_ = nn::Linear::create(store, "span.type_proj", s.dim, s.dim, rng);
    }

    const Settings& settings() const { return settings_; }

    /// Row per span: projection of [word_reps[start]; word_reps[end];
    /// width_embedding(width)] back to D.
    Value represent(Tape& tape, Value word_reps, const std::vector<Span>& spans) const {
        std::vector<int> starts, ends, widths;
        starts.reserve(spans.size());
        ends.reserve(spans.size());
        widths.reserve(spans.size());
        for (const Span& s : spans) {
            if (s.start < 0 || s.end < s.start || s.end >= word_reps.rows())
                throw ContractError("span head: span out of range");
            if (s.width() > settings_.max_width)
                throw ContractError("span head: span wider than max_width");
            starts.push_back(s.start);
            ends.push_back(s.end);
            widths.push_back(s.width() - 1); // width w lives at table row w-1
        }
        Value table = nn::use(tape, *width_embedding_);
        Value features = ag::concat_cols(
            ag::concat_cols(ag::gather_rows(word_reps, starts),
                            ag::gather_rows(word_reps, ends)),
            ag::gather_rows(table, widths));
        return nn::activate(span_proj_(tape, features), settings_.span_activation);
    }

    /// Dedicated projection of the [ENT] delimiter representations.
    Value project_types(Tape& tape, Value entity_type_reps) const {
        return nn::activate(type_proj_(tape, entity_type_reps), settings_.type_activation);
    }

    nn::Tensor& width_table() { return *width_embedding_; }
    nn::Linear& span_projection() { return span_proj_; }
    nn::Linear& type_projection() { return type_proj_; }

private:
    Settings settings_;
    nn::Tensor* width_embedding_ = nullptr;
    nn::Linear span_proj_;
    nn::Linear type_proj_;
};

/// Raw logits: span_reps · projected_typesᵀ, shape |spans| × K.
inline Value score_entities(Value span_reps, Value projected_types) {
    if (span_reps.cols() != projected_types.cols())
        throw ContractError("score_entities: dimension mismatch");
    return ag::matmul(span_reps, ag::transpose(projected_types));
}

/// Greedy thresholded decoding. Each span keeps its argmax type; candidates
/// above the threshold are accepted best-first under the overlap policy
/// (flat: no overlap at all; nested: no partial overlap). Output is sorted by
/// (start, end, type).
inline std::vector<Entity> decode_entities(const Matrix& logits,
                                           const std::vector<Span>& spans,
                                           double threshold, bool flat) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("decode_entities: threshold must be in (0,1)");
    if (logits.rows() != static_cast<Eigen::Index>(spans.size()))
        throw ContractError("decode_entities: logit rows do not match span count");

    std::vector<Entity> candidates;
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        if (logits.cols() == 0)
            break;
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < logits.cols(); ++k)
            if (logits(r, k) > logits(r, best))
                best = k;
        double p = logistic(logits(r, best));
        if (p > threshold)
            candidates.push_back({spans[static_cast<std::size_t>(r)],
                                  static_cast<int>(best), p});
    }

    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Entity& a, const Entity& b) {
                         if (a.score != b.score) return a.score > b.score;
                         if (a.span.start != b.span.start) return a.span.start < b.span.start;
                         if (a.span.end != b.span.end) return a.span.end < b.span.end;
                         return a.type_index < b.type_index;
                     });

    std::vector<Entity> accepted;
    for (const Entity& c : candidates) {
        bool conflict = false;
        for (const Entity& a : accepted) {
            if (flat ? spans_overlap(c.span, a.span)
                     : spans_partially_overlap(c.span, a.span)) {
                conflict = true;
                break;
            }
        }
        if (!conflict)
            accepted.push_back(c);
    }

    std::sort(accepted.begin(), accepted.end(), [](const Entity& a, const Entity& b) {
        if (a.span.start != b.span.start) return a.span.start < b.span.start;
        if (a.span.end != b.span.end) return a.span.end < b.span.end;
        return a.type_index < b.type_index;
    });
    return accepted;
}

} // namespace relex
