#pragma once

#include <cmath>
#include <deque>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "relex/autograd.hpp"
#include "relex/errors.hpp"

namespace relex::nn {

using ag::Matrix;
using ag::Tape;
using ag::Value;

// ─── Parameters ─────────────────────────────────────────────────────────────

struct Tensor {
    std::string name;
    Matrix value;
    Matrix grad;
};

/// Owns every trainable tensor of a model, keyed by a dotted name whose first
/// segment identifies the parameter group ("encoder.", "span.", ...).
/// Insertion order is fixed and is the serialization order.
class ParameterStore {
public:
    Tensor& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
        if (index_.count(name))
            throw ContractError("ParameterStore: duplicate tensor " + name);
        tensors_.push_back(Tensor{name, Matrix::Zero(rows, cols), Matrix::Zero(rows, cols)});
        Tensor* t = &tensors_.back();
        index_.emplace(name, t);
        order_.push_back(t);
        return *t;
    }

    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end())
            throw ContractError("ParameterStore: unknown tensor " + name);
        return *it->second;
    }

    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end())
            throw ContractError("ParameterStore: unknown tensor " + name);
        return *it->second;
    }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const std::vector<Tensor*>& all() { return order_; }
    std::vector<const Tensor*> all() const {
        return {order_.begin(), order_.end()};
    }

    void zero_grad() {
        for (Tensor* t : order_)
            t->grad.setZero();
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Tensor* t : order_)
            n += static_cast<std::size_t>(t->value.size());
        return n;
    }

private:
    std::deque<Tensor> tensors_;
    std::unordered_map<std::string, Tensor*> index_;
    std::vector<Tensor*> order_;
};

/// Binds a parameter into the tape; its gradient accumulates into the tensor.
inline Value use(Tape& tape, Tensor& t) {
    ag::Node* n = tape.emplace(t.value, true);
    Tensor* tp = &t;
    n->backward = [n, tp] { tp->grad += n->grad; };
    return {&tape, n};
}

inline void init_normal(Tensor& t, std::mt19937& rng, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    for (Eigen::Index c = 0; c < t.value.cols(); ++c)
        for (Eigen::Index r = 0; r < t.value.rows(); ++r)
            t.value(r, c) = d(rng);
}

inline void init_constant(Tensor& t, double v) { t.value.setConstant(v); }

// ─── Basic layers ───────────────────────────────────────────────────────────

/// y = x W + b, with x row-major (rows are items).
struct Linear {
    Tensor* weight = nullptr;
    Tensor* bias = nullptr;

    static Linear create(ParameterStore& store, const std::string& prefix, Eigen::Index in,
                         Eigen::Index out, std::mt19937& rng) {
        Linear l;
        l.weight = &store.create(prefix + ".weight", in, out);
        l.bias = &store.create(prefix + ".bias", 1, out);
        init_normal(*l.weight, rng, std::sqrt(2.0 / static_cast<double>(in + out)));
        return l;
    }

    Value operator()(Tape& tape, Value x) const {
        return ag::bcast_add(ag::matmul(x, use(tape, *weight)), use(tape, *bias));
    }
};

struct LayerNorm {
    Tensor* gain = nullptr;
    Tensor* bias = nullptr;
    static constexpr double kEps = 1e-5;

    static LayerNorm create(ParameterStore& store, const std::string& prefix,
                            Eigen::Index dim) {
        LayerNorm ln;
        ln.gain = &store.create(prefix + ".gain", 1, dim);
        ln.bias = &store.create(prefix + ".bias", 1, dim);
        init_constant(*ln.gain, 1.0);
        return ln;
    }

    Value operator()(Tape& tape, Value x) const {
        const double inv_d = 1.0 / static_cast<double>(x.cols());
        Value mean = ag::scale(ag::rowwise_sum(x), inv_d);
        Value centered = ag::sub(x, ag::bcast_mul(ag::constant(tape, Matrix::Ones(x.rows(), x.cols())), mean));
        Value var = ag::scale(ag::rowwise_sum(ag::mul(centered, centered)), inv_d);
        Value inv_std = ag::pow_scalar(ag::shift(var, kEps), -0.5);
        Value normed = ag::bcast_mul(centered, inv_std);
        return ag::bcast_add(ag::bcast_mul(normed, use(tape, *gain)), use(tape, *bias));
    }
};

enum class Activation { None, Relu, Tanh };

inline Value activate(Value x, Activation a) {
    switch (a) {
    case Activation::None: return x;
    case Activation::Relu: return ag::relu(x);
    case Activation::Tanh: return ag::tanh_(x);
    }
    throw ContractError("activate: bad activation");
}

/// Two-layer perceptron: Linear -> activation -> Linear.
struct Mlp {
    Linear first, second;
    Activation activation = Activation::Relu;

    static Mlp create(ParameterStore& store, const std::string& prefix, Eigen::Index in,
                      Eigen::Index hidden, Eigen::Index out, std::mt19937& rng,
                      Activation act = Activation::Relu) {
        Mlp m;
        m.first = Linear::create(store, prefix + ".l1", in, hidden, rng);
        m.second = Linear::create(store, prefix + ".l2", hidden, out, rng);
        m.activation = act;
        return m;
    }

    Value operator()(Tape& tape, Value x) const {
        return second(tape, activate(first(tape, x), activation));
    }
};

/// Inverted dropout; off outside training. The mask comes from `rng`, so a
/// seeded caller is fully reproducible.
inline Value dropout(Tape& tape, Value x, double rate, std::mt19937& rng, bool training) {
    if (!training || rate <= 0.0)
        return x;
    if (rate >= 1.0)
        throw ConfigError("dropout: rate must be < 1");
    std::bernoulli_distribution keep(1.0 - rate);
    Matrix mask(x.rows(), x.cols());
    const double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r)
            mask(r, c) = keep(rng) ? scale : 0.0;
    return ag::mul(x, ag::constant(tape, std::move(mask)));
}

// ─── Multi-head self-attention ──────────────────────────────────────────────

struct MultiHeadSelfAttention {
    Linear query, key, value, out;
    int heads = 1;
    Eigen::Index model_dim = 0;
    // Optional learnable bias on the attention logits, bucketed by clipped
    // relative position j-i and shared across heads. Zero-initialised, so a
    // freshly created module behaves exactly like one without the bias.
    Tensor* rel_bias = nullptr;
    int rel_window = 0;

    static MultiHeadSelfAttention create(ParameterStore& store, const std::string& prefix,
                                         Eigen::Index dim, int heads, std::mt19937& rng,
                                         int relative_window = 0) {
        if (heads <= 0 || dim % heads != 0)
            throw ConfigError("attention: head count must divide the model dimension");
        MultiHeadSelfAttention a;
        a.query = Linear::create(store, prefix + ".q", dim, dim, rng);
        a.key = Linear::create(store, prefix + ".k", dim, dim, rng);
        a.value = Linear::create(store, prefix + ".v", dim, dim, rng);
        a.out = Linear::create(store, prefix + ".o", dim, dim, rng);
        a.heads = heads;
        a.model_dim = dim;
        if (relative_window > 0) {
            a.rel_window = relative_window;
            a.rel_bias = &store.create(prefix + ".rel_bias", 1, 2 * relative_window + 1);
        }
        return a;
    }

    struct Result {
        Value output;        // n×D
        Value attention_avg; // n×n, attention weights averaged across heads
    };

    Result forward(Tape& tape, Value x, bool want_attention = false) const {
        const Eigen::Index head_dim = model_dim / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
        Value q = query(tape, x), k = key(tape, x), v = value(tape, x);
        Value bias = relative_bias(tape, x.rows());

        Value merged, attn_sum;
        for (int h = 0; h < heads; ++h) {
            Value qh = ag::slice_cols(q, h * head_dim, head_dim);
            Value kh = ag::slice_cols(k, h * head_dim, head_dim);
            Value vh = ag::slice_cols(v, h * head_dim, head_dim);
            Value logits = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
            if (bias)
                logits = ag::add(logits, bias);
            Value weights = ag::softmax_rows(logits);
            Value oh = ag::matmul(weights, vh);
            merged = merged ? ag::concat_cols(merged, oh) : oh;
            if (want_attention)
                attn_sum = attn_sum ? ag::add(attn_sum, weights) : weights;
        }
        Result r;
        r.output = out(tape, merged);
        if (want_attention)
            r.attention_avg = ag::scale(attn_sum, 1.0 / static_cast<double>(heads));
        return r;
    }

    // n×n matrix whose (i, j) entry is the learned bias for offset j-i,
    // with offsets beyond the window sharing the outermost buckets.
    Value relative_bias(Tape& tape, Eigen::Index n) const {
        if (rel_bias == nullptr || n == 0)
            return Value();
        Value row = use(tape, *rel_bias);
        Value ones = ag::constant(tape, Matrix::Ones(1, n));
        Value total;
        for (int idx = 0; idx < 2 * rel_window + 1; ++idx) {
            Matrix mask = Matrix::Zero(n, n);
            bool hit = false;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < n; ++j) {
                    int off = static_cast<int>(j - i);
                    off = off < -rel_window ? -rel_window
                                            : (off > rel_window ? rel_window : off);
                    if (off + rel_window != idx)
                        continue;
                    mask(i, j) = 1.0;
                    hit = true;
                }
            }
            if (!hit)
                continue;
            Value tiled = ag::matmul(ag::slice_cols(row, idx, 1), ones);
            Value term = ag::bcast_mul(ag::constant(tape, std::move(mask)), tiled);
            total = total ? ag::add(total, term) : term;
        }
        return total;
    }
};

// ─── Bidirectional LSTM ─────────────────────────────────────────────────────

namespace detail {

struct LstmDirection {
    Tensor* wx = nullptr; // in × 4H,  gate order [i f g o]
    Tensor* wh = nullptr; // H × 4H
    Tensor* bias = nullptr;

    static LstmDirection create(ParameterStore& store, const std::string& prefix,
                                Eigen::Index in, Eigen::Index hidden, std::mt19937& rng) {
        LstmDirection d;
        d.wx = &store.create(prefix + ".wx", in, 4 * hidden);
        d.wh = &store.create(prefix + ".wh", hidden, 4 * hidden);
        d.bias = &store.create(prefix + ".bias", 1, 4 * hidden);
        init_normal(*d.wx, rng, std::sqrt(1.0 / static_cast<double>(in)));
        init_normal(*d.wh, rng, std::sqrt(1.0 / static_cast<double>(hidden)));
        // forget gate bias at 1 keeps early training stable
        d.bias->value.middleCols(hidden, hidden).setConstant(1.0);
        return d;
    }

    /// Runs over rows of `seq` in the order given by `steps`; returns n×H with
    /// the output row for step t placed back at row t.
    Value run(Tape& tape, Value seq, const std::vector<int>& steps,
              Eigen::Index hidden) const {
        Value wxv = use(tape, *wx), whv = use(tape, *wh), bv = use(tape, *bias);
        Value h = ag::constant(tape, Matrix::Zero(1, hidden));
        Value c = ag::constant(tape, Matrix::Zero(1, hidden));
        std::vector<Value> outputs(steps.size());
        for (int t : steps) {
            Value xt = ag::slice_rows(seq, t, 1);
            Value z = ag::bcast_add(
                ag::add(ag::matmul(xt, wxv), ag::matmul(h, whv)), bv);
            Value gi = ag::sigmoid(ag::slice_cols(z, 0, hidden));
            Value gf = ag::sigmoid(ag::slice_cols(z, hidden, hidden));
            Value gg = ag::tanh_(ag::slice_cols(z, 2 * hidden, hidden));
            Value go = ag::sigmoid(ag::slice_cols(z, 3 * hidden, hidden));
            c = ag::add(ag::mul(gf, c), ag::mul(gi, gg));
            h = ag::mul(go, ag::tanh_(c));
            outputs[static_cast<std::size_t>(t)] = h;
        }
        Value stacked;
        for (auto& o : outputs)
            stacked = stacked ? ag::concat_rows(stacked, o) : o;
        return stacked;
    }
};

} // namespace detail

/// Concatenates a forward and a backward LSTM pass; output is n × 2H.
struct BiLstm {
    detail::LstmDirection fwd, bwd;
    Eigen::Index hidden = 0;

    static BiLstm create(ParameterStore& store, const std::string& prefix, Eigen::Index in,
                         Eigen::Index hidden_per_dir, std::mt19937& rng) {
        BiLstm b;
        b.fwd = detail::LstmDirection::create(store, prefix + ".fwd", in, hidden_per_dir, rng);
        b.bwd = detail::LstmDirection::create(store, prefix + ".bwd", in, hidden_per_dir, rng);
        b.hidden = hidden_per_dir;
        return b;
    }

    Value operator()(Tape& tape, Value seq) const {
        const auto n = seq.rows();
        if (n == 0)
            return ag::constant(tape, Matrix::Zero(0, 2 * hidden));
        std::vector<int> forward_steps(static_cast<std::size_t>(n));
        std::vector<int> backward_steps(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            forward_steps[static_cast<std::size_t>(i)] = static_cast<int>(i);
            backward_steps[static_cast<std::size_t>(i)] = static_cast<int>(n - 1 - i);
        }
        Value f = fwd.run(tape, seq, forward_steps, hidden);
        Value b = bwd.run(tape, seq, backward_steps, hidden);
        return ag::concat_cols(f, b);
    }
};

} // namespace relex::nn
