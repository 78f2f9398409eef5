#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relex/autograd.hpp"
#include "relex/errors.hpp"
#include "relex/nn.hpp"
#include "relex/prompt.hpp"

namespace relex {

using ag::Matrix;
using ag::Tape;
using ag::Value;

enum class Aggregation { First, Mean };

inline Aggregation parse_aggregation(const std::string& s) {
    if (s == "first") return Aggregation::First;
    if (s == "mean") return Aggregation::Mean;
    throw ConfigError("unknown aggregation mode: " + s);
}

inline std::string to_string(Aggregation a) {
    return a == Aggregation::First ? "first" : "mean";
}

/// How a prompt layout maps onto the backend's subword stream. Marker tokens
/// are always exactly one subword; words may fan out to several.
struct Segmentation {
    std::vector<std::pair<int, int>> token_ranges; // per layout token: [begin, end)
    std::vector<int> subword_ids;

    int subword_count() const { return static_cast<int>(subword_ids.size()); }
};

/// Behavioral contract for the shared bidirectional encoder: segment a layout
/// into subwords and produce one hidden vector per subword. Implementations
/// must be deterministic for fixed parameters.
class EncoderBackend {
public:
    virtual ~EncoderBackend() = default;

    virtual int dim() const = 0;
    virtual Segmentation segment(const PromptLayout& layout) const = 0;
    /// Hidden states, shape subword_count × dim.
    virtual Value forward(Tape& tape, const Segmentation& seg) = 0;
};

// ─── Toy trainable encoder ──────────────────────────────────────────────────
//
// Learned token embeddings plus a small stack of bidirectional (full
// self-attention) transformer blocks. Words map 1:1 onto subwords except
// long tails: anything above `max_word_len` characters splits into
// `piece_len`-character pieces, so the subword aggregation path is exercised
// on realistic inputs. Piece ids come from a fixed FNV-1a hash, not from any
// platform hash, so corpora and checkpoints are portable.

struct ToyEncoderSettings {
    int dim = 64;
    int layers = 2;
    int heads = 4;
    int vocab_size = 4096;
    int max_word_len = 8;
    int piece_len = 4;
    // Window for the learned relative-position attention bias. Sinusoidal
    // embeddings alone make it hard for a small model to attend to a fixed
    // nearby offset (for example, a marker reading the label word after it),
    // so each block gets an explicit per-offset bias on its logits.
    int relative_window = 4;
};

namespace detail {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline Matrix sinusoidal_positions(int length, int dim) {
    Matrix pe = Matrix::Zero(length, dim);
    for (int pos = 0; pos < length; ++pos) {
        for (int i = 0; i < dim; i += 2) {
            double angle = pos / std::pow(10000.0, static_cast<double>(i) / dim);
            pe(pos, i) = std::sin(angle);
            if (i + 1 < dim)
                pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

} // namespace detail

class ToyEncoder : public EncoderBackend {
public:
    static constexpr int kEntId = 0;
    static constexpr int kRelId = 1;
    static constexpr int kSepId = 2;
    static constexpr int kReservedIds = 3;

    ToyEncoder(nn::ParameterStore& store, const ToyEncoderSettings& settings,
               std::mt19937& rng)
        : settings_(settings) {
        if (settings.vocab_size <= kReservedIds)
            throw ConfigError("toy encoder: vocab_size too small");
        if (settings.dim % settings.heads != 0)
            throw ConfigError("toy encoder: heads must divide dim");
        token_embedding_ = &store.create("encoder.tok_embedding", settings.vocab_size,
                                         settings.dim);
        nn::init_normal(*token_embedding_, rng, 0.02);
        blocks_.reserve(static_cast<std::size_t>(settings.layers));
        for (int l = 0; l < settings.layers; ++l) {
            std::string prefix = "encoder.block" + std::to_string(l);
            Block b;
            b.ln_attn = nn::LayerNorm::create(store, prefix + ".ln_attn", settings.dim);
            b.attn = nn::MultiHeadSelfAttention::create(store, prefix + ".attn",
                                                        settings.dim, settings.heads, rng,
                                                        settings.relative_window);
            b.ln_ffn = nn::LayerNorm::create(store, prefix + ".ln_ffn", settings.dim);
            b.ffn = nn::Mlp::create(store, prefix + ".ffn", settings.dim, 2 * settings.dim,
                                    settings.dim, rng, nn::Activation::Tanh);
            blocks_.push_back(b);
        }
        ln_final_ = nn::LayerNorm::create(store, "encoder.ln_final", settings.dim);
        // Start each block with a preference for its right neighbour, the way
        // the LSTM cells start with an open forget gate. Type delimiters then
        // carry the label word that follows them from the very first step
        // instead of having to discover that routing by gradient descent.
        if (settings.relative_window >= 1)
            for (Block& b : blocks_)
                b.attn.rel_bias->value(0, settings.relative_window + 1) = 3.0;
    }

    int dim() const override { return settings_.dim; }
    const ToyEncoderSettings& settings() const { return settings_; }

    /// Deterministic split rule: short words are a single subword; words past
    /// the length cutoff split into fixed-size character pieces.
    std::vector<std::string> word_pieces(const std::string& word) const {
        if (static_cast<int>(word.size()) <= settings_.max_word_len)
            return {word};
        std::vector<std::string> pieces;
        for (std::size_t i = 0; i < word.size();
             i += static_cast<std::size_t>(settings_.piece_len))
            pieces.push_back(word.substr(i, static_cast<std::size_t>(settings_.piece_len)));
        return pieces;
    }

    int piece_id(const std::string& piece) const {
        auto span = static_cast<std::uint64_t>(settings_.vocab_size - kReservedIds);
        return kReservedIds + static_cast<int>(detail::fnv1a(piece) % span);
    }

    Segmentation segment(const PromptLayout& layout) const override {
        Segmentation seg;
        seg.token_ranges.reserve(layout.tokens.size());
        for (const auto& tok : layout.tokens) {
            int begin = seg.subword_count();
            switch (tok.kind) {
            case TokenKind::EntMarker: seg.subword_ids.push_back(kEntId); break;
            case TokenKind::RelMarker: seg.subword_ids.push_back(kRelId); break;
            case TokenKind::SepMarker: seg.subword_ids.push_back(kSepId); break;
            case TokenKind::LabelWord:
            case TokenKind::TextWord:
                for (const auto& piece : word_pieces(tok.text))
                    seg.subword_ids.push_back(piece_id(piece));
                break;
            }
            seg.token_ranges.emplace_back(begin, seg.subword_count());
        }
        return seg;
    }

    Value forward(Tape& tape, const Segmentation& seg) override {
        const int n = seg.subword_count();
        Value x = ag::gather_rows(nn::use(tape, *token_embedding_), seg.subword_ids);
        x = ag::add(x, ag::constant(tape, detail::sinusoidal_positions(n, settings_.dim)));
        for (const auto& b : blocks_) {
            x = ag::add(x, b.attn.forward(tape, b.ln_attn(tape, x)).output);
            x = ag::add(x, b.ffn(tape, b.ln_ffn(tape, x)));
        }
        return ln_final_(tape, x);
    }

private:
    struct Block {
        nn::LayerNorm ln_attn;
        nn::MultiHeadSelfAttention attn;
        nn::LayerNorm ln_ffn;
        nn::Mlp ffn;
    };

    ToyEncoderSettings settings_;
    nn::Tensor* token_embedding_ = nullptr;
    std::vector<Block> blocks_;
    nn::LayerNorm ln_final_;
};

// ─── Views over the encoded sequence ────────────────────────────────────────

struct EncodedViews {
    Value word_reps;          // word_count × D (post-refinement)
    Value entity_type_reps;   // K × D, rows at [ENT] markers
    Value relation_type_reps; // M × D, rows at [REL] markers
};

/// Runs the backend over a layout. Checks the output against the
/// segmentation's subword count.
inline Value encode(Tape& tape, EncoderBackend& backend, const PromptLayout& layout,
                    const Segmentation& seg) {
    if (static_cast<int>(seg.token_ranges.size()) != static_cast<int>(layout.tokens.size()))
        throw ContractError("encode: segmentation does not match layout");
    Value hidden = backend.forward(tape, seg);
    if (hidden.rows() != seg.subword_count() || hidden.cols() != backend.dim())
        throw ContractError("encode: backend output shape mismatch");
    if (!hidden.val().allFinite())
        throw ContractError("encode: non-finite hidden states");
    return hidden;
}

/// Pulls the three representation sets out of the per-subword hidden matrix.
/// Words aggregate their subwords (first or mean); markers are single
/// subwords and are indexed directly.
inline EncodedViews aggregate_subwords(Tape& tape, Value hidden, const PromptLayout& layout,
                                       const Segmentation& seg, Aggregation mode) {
    if (hidden.rows() != seg.subword_count())
        throw ContractError("aggregate_subwords: hidden row count does not match segmentation");

    EncodedViews views;

    // word_reps = A * hidden with a constant aggregation matrix
    Matrix agg = Matrix::Zero(layout.word_count, seg.subword_count());
    for (int w = 0; w < layout.word_count; ++w) {
        auto [begin, end] = seg.token_ranges[static_cast<std::size_t>(layout.text_start + w)];
        if (begin >= end)
            throw ContractError("aggregate_subwords: empty word range");
        if (mode == Aggregation::First)
            agg(w, begin) = 1.0;
        else
            for (int s = begin; s < end; ++s)
                agg(w, s) = 1.0 / static_cast<double>(end - begin);
    }
    views.word_reps = ag::matmul(ag::constant(tape, std::move(agg)), hidden);

    auto marker_rows = [&](const std::vector<int>& positions) {
        std::vector<int> rows;
        rows.reserve(positions.size());
        for (int p : positions) {
            auto [begin, end] = seg.token_ranges[static_cast<std::size_t>(p)];
            if (end - begin != 1)
                throw ContractError("aggregate_subwords: marker is not a single subword");
            rows.push_back(begin);
        }
        return rows;
    };
    views.entity_type_reps = ag::gather_rows(hidden, marker_rows(layout.ent_delimiter_positions));
    views.relation_type_reps =
        ag::gather_rows(hidden, marker_rows(layout.rel_delimiter_positions));
    return views;
}

/// Optional BiLSTM pass over the word representations; disabled, it is a
/// bitwise pass-through.
inline Value bilstm_refine(Tape& tape, Value word_reps, const nn::BiLstm* lstm,
                           bool enabled) {
    if (!enabled)
        return word_reps;
    if (lstm == nullptr)
        throw ContractError("bilstm_refine: enabled but no LSTM parameters");
    return (*lstm)(tape, word_reps);
}

} // namespace relex
