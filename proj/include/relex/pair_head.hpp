#pragma once

#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "relex/autograd.hpp"
#include "relex/errors.hpp"
#include "relex/nn.hpp"
#include "relex/span_head.hpp"

namespace relex {

/// Candidate entity pairs for relation scoring. `adjacency` is only present
/// when the pairs came from an adjacency decoder.
struct PairCandidateSet {
    std::vector<std::pair<int, int>> pairs; // (head_index, tail_index), head ≠ tail
    std::optional<Matrix> adjacency;        // |ℰ| × |ℰ| in [0,1]
    std::vector<bool> mask;                 // per-entity padding indicator, true = real
};

enum class AdjacencyDecoderKind { Dot, Bilinear, Mlp, Attention, Gcn, Gat };

inline AdjacencyDecoderKind parse_adjacency_kind(const std::string& s) {
    if (s == "dot") return AdjacencyDecoderKind::Dot;
    if (s == "bilinear") return AdjacencyDecoderKind::Bilinear;
    if (s == "mlp") return AdjacencyDecoderKind::Mlp;
    if (s == "attention") return AdjacencyDecoderKind::Attention;
    if (s == "gcn") return AdjacencyDecoderKind::Gcn;
    if (s == "gat") return AdjacencyDecoderKind::Gat;
    throw ConfigError("unknown adjacency decoder: " + s);
}

inline std::string to_string(AdjacencyDecoderKind k) {
    switch (k) {
    case AdjacencyDecoderKind::Dot: return "dot";
    case AdjacencyDecoderKind::Bilinear: return "bilinear";
    case AdjacencyDecoderKind::Mlp: return "mlp";
    case AdjacencyDecoderKind::Attention: return "attention";
    case AdjacencyDecoderKind::Gcn: return "gcn";
    case AdjacencyDecoderKind::Gat: return "gat";
    }
    throw ContractError("to_string: bad adjacency kind");
}

/// All ordered non-self pairs in lexicographic order.
inline PairCandidateSet enumerate_all_pairs(const std::vector<Entity>& entities) {
    PairCandidateSet set;
    const int n = static_cast<int>(entities.size());
    set.mask.assign(static_cast<std::size_t>(n), true);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
            if (a != b)
                set.pairs.emplace_back(a, b);
    return set;
}

/// Â_{a,b} ← Â_{a,b} · m_a · m_b.
inline Matrix apply_pair_mask(const Matrix& adjacency, const std::vector<bool>& mask) {
    if (adjacency.rows() != adjacency.cols() ||
        adjacency.rows() != static_cast<Eigen::Index>(mask.size()))
        throw ContractError("apply_pair_mask: shape mismatch");
    Matrix out = adjacency;
    for (Eigen::Index a = 0; a < out.rows(); ++a)
        for (Eigen::Index b = 0; b < out.cols(); ++b)
            if (!mask[static_cast<std::size_t>(a)] || !mask[static_cast<std::size_t>(b)])
                out(a, b) = 0.0;
    return out;
}

/// Differentiable variant for training-time adjacency supervision.
inline Value apply_pair_mask(Tape& tape, Value adjacency, const std::vector<bool>& mask) {
    if (adjacency.rows() != adjacency.cols() ||
        adjacency.rows() != static_cast<Eigen::Index>(mask.size()))
        throw ContractError("apply_pair_mask: shape mismatch");
    Matrix m(adjacency.rows(), adjacency.cols());
    for (Eigen::Index a = 0; a < m.rows(); ++a)
        for (Eigen::Index b = 0; b < m.cols(); ++b)
            m(a, b) = (mask[static_cast<std::size_t>(a)] && mask[static_cast<std::size_t>(b)])
                          ? 1.0
                          : 0.0;
    return ag::mul(adjacency, ag::constant(tape, std::move(m)));
}

/// Pairs (a,b), a ≠ b, with Â_{a,b} > threshold, lexicographic order.
inline PairCandidateSet select_pairs(const Matrix& adjacency, double threshold) {
    if (adjacency.rows() != adjacency.cols())
        throw ContractError("select_pairs: adjacency must be square");
    if (adjacency.size() > 0 &&
        (adjacency.minCoeff() < 0.0 || adjacency.maxCoeff() > 1.0))
        throw ContractError("select_pairs: adjacency entries must lie in [0,1]");
    PairCandidateSet set;
    const Eigen::Index n = adjacency.rows();
    set.mask.assign(static_cast<std::size_t>(n), true);
    set.adjacency = adjacency;
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
            if (a != b && adjacency(a, b) > threshold)
                set.pairs.emplace_back(static_cast<int>(a), static_cast<int>(b));
    return set;
}

/// Symmetric normalization D̃^{-1/2} Ã D̃^{-1/2} of an augmented adjacency.
inline Value gcn_normalize(Tape& tape, Value a_tilde) {
    if (a_tilde.rows() != a_tilde.cols())
        throw ContractError("gcn_normalize: matrix must be square");
    (void)tape;
    Value inv_sqrt_degree = ag::pow_scalar(ag::rowwise_sum(a_tilde), -0.5); // n×1
    return ag::bcast_mul(ag::bcast_mul(a_tilde, inv_sqrt_degree),
                         ag::transpose(inv_sqrt_degree));
}

inline Value l2_normalize_rows(Tape& tape, Value x) {
    (void)tape;
    Value norm = ag::pow_scalar(ag::shift(ag::rowwise_sum(ag::mul(x, x)), 1e-12), 0.5);
    return ag::bcast_mul(x, ag::pow_scalar(norm, -1.0));
}

/// Soft adjacency prediction over entity span representations (the
/// RelationsRepLayer). All six decoder kinds map n×D representations to an
/// n×n matrix with entries in [0,1].
class AdjacencyDecoder {
public:
    struct Settings {
        AdjacencyDecoderKind kind = AdjacencyDecoderKind::Dot;
        int dim = 64;
        int projection_dim = 32; // d_L for bilinear/gat, hidden width for mlp
        int heads = 4;           // attention/gat
        bool normalize = false;  // dot kind: cosine variant
    };

    AdjacencyDecoder(nn::ParameterStore& store, const Settings& s, std::mt19937& rng)
        : settings_(s) {
        switch (s.kind) {
        case AdjacencyDecoderKind::Dot:
            break;
        case AdjacencyDecoderKind::Bilinear:
            require_projection_dim();
            projection_ = &store.create("adjacency.proj", s.dim, s.projection_dim);
            nn::init_normal(*projection_, rng, std::sqrt(1.0 / s.dim));
            break;
        case AdjacencyDecoderKind::Mlp:
            require_projection_dim();
            mlp_ = nn::Mlp::create(store, "adjacency.mlp", 2 * s.dim, s.projection_dim, 1,
                                   rng, nn::Activation::Relu);
            break;
        case AdjacencyDecoderKind::Attention:
            attention_ = nn::MultiHeadSelfAttention::create(store, "adjacency.attn", s.dim,
                                                            s.heads, rng);
            break;
        case AdjacencyDecoderKind::Gcn:
            gcn_linear_ = nn::Linear::create(store, "adjacency.gcn", s.dim, s.dim, rng);
            break;
        case AdjacencyDecoderKind::Gat:
            require_projection_dim();
            attention_ = nn::MultiHeadSelfAttention::create(store, "adjacency.gat_attn",
                                                            s.dim, s.heads, rng);
            projection_ = &store.create("adjacency.gat_proj", s.dim, s.projection_dim);
            nn::init_normal(*projection_, rng, std::sqrt(1.0 / s.dim));
            break;
        }
    }

    const Settings& settings() const { return settings_; }

    Value score(Tape& tape, Value entity_reps) const {
        if (entity_reps.rows() < 1)
            throw ContractError("adjacency decoder: need at least one entity");
        if (entity_reps.cols() != settings_.dim)
            throw ContractError("adjacency decoder: representation dimension mismatch");
        const Eigen::Index n = entity_reps.rows();
        switch (settings_.kind) {
        case AdjacencyDecoderKind::Dot: {
            Value x = settings_.normalize ? l2_normalize_rows(tape, entity_reps)
                                          : entity_reps;
            return ag::sigmoid(ag::matmul(x, ag::transpose(x)));
        }
        case AdjacencyDecoderKind::Bilinear: {
            Value z = ag::matmul(entity_reps, nn::use(tape, *projection_));
            return ag::sigmoid(ag::matmul(z, ag::transpose(z)));
        }
        case AdjacencyDecoderKind::Mlp: {
            // pair rows ordered so a column-major reshape lands MLP([s_a;s_b])
            // at grid position (a, b)
            std::vector<int> heads_idx, tails_idx;
            heads_idx.reserve(static_cast<std::size_t>(n * n));
            tails_idx.reserve(static_cast<std::size_t>(n * n));
            for (Eigen::Index b = 0; b < n; ++b)
                for (Eigen::Index a = 0; a < n; ++a) {
                    heads_idx.push_back(static_cast<int>(a));
                    tails_idx.push_back(static_cast<int>(b));
                }
            Value features = ag::concat_cols(ag::gather_rows(entity_reps, heads_idx),
                                             ag::gather_rows(entity_reps, tails_idx));
            return ag::sigmoid(ag::reshape(mlp_(tape, features), n, n));
        }
        case AdjacencyDecoderKind::Attention: {
            auto result = attention_.forward(tape, entity_reps, true);
            Matrix keep = Matrix::Ones(n, n) - Matrix::Identity(n, n);
            // self-pairs are never candidates; zero the diagonal after the
            // head average
            return ag::mul(result.attention_avg, ag::constant(tape, std::move(keep)));
        }
        case AdjacencyDecoderKind::Gcn: {
            Value initial = ag::sigmoid(ag::matmul(entity_reps, ag::transpose(entity_reps)));
            Value a_tilde =
                ag::add(initial, ag::constant(tape, Matrix::Identity(n, n)));
            Value refined = ag::tanh_(
                gcn_linear_(tape, ag::matmul(gcn_normalize(tape, a_tilde), entity_reps)));
            return ag::sigmoid(ag::matmul(refined, ag::transpose(refined)));
        }
        case AdjacencyDecoderKind::Gat: {
            Value updated = attention_.forward(tape, entity_reps, false).output;
            Value z = ag::matmul(updated, nn::use(tape, *projection_));
            return ag::sigmoid(ag::matmul(z, ag::transpose(z)));
        }
        }
        throw ContractError("adjacency decoder: bad kind");
    }

private:
    void require_projection_dim() const {
        if (settings_.projection_dim < 1)
            throw ConfigError("adjacency decoder: projection_dim must be positive");
    }

    Settings settings_;
    nn::Tensor* projection_ = nullptr;
    nn::Mlp mlp_;
    nn::MultiHeadSelfAttention attention_;
    nn::Linear gcn_linear_;
};

} // namespace relex
