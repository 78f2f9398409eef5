#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "relex/errors.hpp"

namespace relex::ag {

using Matrix = Eigen::MatrixXd;

// ─── Tape-based reverse-mode differentiation ────────────────────────────────
//
// A Tape owns every intermediate of one forward pass. Nodes are appended in
// evaluation order, which is already a topological order, so the backward
// sweep is a single reverse walk. All arithmetic is double precision; shapes
// are plain 2-D matrices (vectors are n×1 or 1×n).

struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> backward; // adds into parents' grads
    bool needs_grad = false;
    std::size_t index = 0;
};

class Tape {
public:
    Node* emplace(Matrix value, bool needs_grad) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        n.index = nodes_.size() - 1;
        if (needs_grad)
            n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
        return &n;
    }

    /// Reverse sweep from `root`, which must be a 1×1 scalar.
    void backward(Node* root) {
        if (root->value.rows() != 1 || root->value.cols() != 1)
            throw ContractError("backward: root must be scalar");
        if (!root->needs_grad)
            return;
        root->grad(0, 0) = 1.0;
        for (std::size_t i = root->index + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.needs_grad && n.backward)
                n.backward();
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    std::deque<Node> nodes_; // deque: node pointers stay valid as we append
};

class Value {
public:
    Value() = default;
    Value(Tape* tape, Node* node) : tape_(tape), node_(node) {}

    const Matrix& val() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    double scalar() const { return node_->value(0, 0); }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool needs_grad() const { return node_->needs_grad; }

    Node* node() const { return node_; }
    Tape* tape() const { return tape_; }
    explicit operator bool() const { return node_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    Node* node_ = nullptr;
};

inline Value constant(Tape& t, Matrix m) { return {&t, t.emplace(std::move(m), false)}; }

inline Value constant_scalar(Tape& t, double v) {
    Matrix m(1, 1);
    m(0, 0) = v;
    return constant(t, m);
}

/// Leaf whose gradient is tracked (model inputs in tests, parameters in nn).
inline Value input(Tape& t, Matrix m) { return {&t, t.emplace(std::move(m), true)}; }

inline void backward(Value root) { root.tape()->backward(root.node()); }

namespace detail {

inline void require_same_shape(const Value& a, const Value& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ContractError(std::string(op) + ": shape mismatch " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Result node wiring: the lambda receives the freshly created node.
template <typename Fn>
Value make(Tape& t, Matrix value, bool needs, Fn&& wire) {
    Node* n = t.emplace(std::move(value), needs);
    if (needs)
        n->backward = wire(n);
    return {&t, n};
}

} // namespace detail

// ─── Elementwise and scalar ops ─────────────────────────────────────────────

inline Value add(Value a, Value b) {
    detail::require_same_shape(a, b, "add");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    return detail::make(*a.tape(), an->value + bn->value, needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad;
            if (bn->needs_grad) bn->grad += n->grad;
        };
    });
}

inline Value sub(Value a, Value b) {
    detail::require_same_shape(a, b, "sub");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    return detail::make(*a.tape(), an->value - bn->value, needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad;
            if (bn->needs_grad) bn->grad -= n->grad;
        };
    });
}

inline Value mul(Value a, Value b) {
    detail::require_same_shape(a, b, "mul");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    return detail::make(*a.tape(), an->value.cwiseProduct(bn->value), needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad.cwiseProduct(bn->value);
            if (bn->needs_grad) bn->grad += n->grad.cwiseProduct(an->value);
        };
    });
}

inline Value cdiv(Value a, Value b) {
    detail::require_same_shape(a, b, "cdiv");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    return detail::make(*a.tape(), an->value.cwiseQuotient(bn->value), needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad.cwiseQuotient(bn->value);
            if (bn->needs_grad)
                bn->grad -= n->grad.cwiseProduct(an->value)
                                .cwiseQuotient(bn->value.cwiseProduct(bn->value));
        };
    });
}

inline Value scale(Value a, double s) {
    Node* an = a.node();
    return detail::make(*a.tape(), an->value * s, an->needs_grad, [=](Node* n) {
        return [=] { an->grad += n->grad * s; };
    });
}

inline Value shift(Value a, double s) {
    Node* an = a.node();
    return detail::make(*a.tape(), an->value.array() + s, an->needs_grad, [=](Node* n) {
        return [=] { an->grad += n->grad; };
    });
}

inline Value neg(Value a) { return scale(a, -1.0); }

// ─── Broadcasting: `b` is a column (n×1) or row (1×m) against `a` (n×m) ─────

namespace detail {

enum class Bcast { Col, Row };

inline Bcast bcast_kind(const Value& a, const Value& b, const char* op) {
    if (b.rows() == a.rows() && b.cols() == 1)
        return Bcast::Col;
    if (b.rows() == 1 && b.cols() == a.cols())
        return Bcast::Row;
    throw ContractError(std::string(op) + ": operand is not broadcastable");
}

} // namespace detail

inline Value bcast_add(Value a, Value b) {
    auto kind = detail::bcast_kind(a, b, "bcast_add");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    Matrix out = kind == detail::Bcast::Col
                     ? Matrix(an->value.colwise() + bn->value.col(0))
                     : Matrix(an->value.rowwise() + bn->value.row(0));
    return detail::make(*a.tape(), std::move(out), needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad;
            if (bn->needs_grad) {
                if (kind == detail::Bcast::Col)
                    bn->grad.col(0) += n->grad.rowwise().sum();
                else
                    bn->grad.row(0) += n->grad.colwise().sum();
            }
        };
    });
}

inline Value bcast_mul(Value a, Value b) {
    auto kind = detail::bcast_kind(a, b, "bcast_mul");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    Matrix out;
    if (kind == detail::Bcast::Col)
        out = an->value.array().colwise() * bn->value.col(0).array();
    else
        out = an->value.array().rowwise() * bn->value.row(0).array();
    return detail::make(*a.tape(), std::move(out), needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) {
                if (kind == detail::Bcast::Col)
                    an->grad.array() += n->grad.array().colwise() * bn->value.col(0).array();
                else
                    an->grad.array() += n->grad.array().rowwise() * bn->value.row(0).array();
            }
            if (bn->needs_grad) {
                if (kind == detail::Bcast::Col)
                    bn->grad.col(0) += n->grad.cwiseProduct(an->value).rowwise().sum();
                else
                    bn->grad.row(0) += n->grad.cwiseProduct(an->value).colwise().sum();
            }
        };
    });
}

// ─── Linear algebra ─────────────────────────────────────────────────────────

inline Value matmul(Value a, Value b) {
    if (a.cols() != b.rows())
        throw ContractError("matmul: inner dimensions disagree");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    return detail::make(*a.tape(), an->value * bn->value, needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad * bn->value.transpose();
            if (bn->needs_grad) bn->grad += an->value.transpose() * n->grad;
        };
    });
}

inline Value transpose(Value a) {
    Node* an = a.node();
    return detail::make(*a.tape(), an->value.transpose(), an->needs_grad, [=](Node* n) {
        return [=] { an->grad += n->grad.transpose(); };
    });
}

// ─── Nonlinearities ─────────────────────────────────────────────────────────

inline Value sigmoid(Value a) {
    Node* an = a.node();
    Matrix y = (1.0 / (1.0 + (-an->value.array()).exp())).matrix();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            an->grad.array() +=
                n->grad.array() * n->value.array() * (1.0 - n->value.array());
        };
    });
}

inline Value tanh_(Value a) {
    Node* an = a.node();
    Matrix y = an->value.array().tanh().matrix();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            an->grad.array() += n->grad.array() * (1.0 - n->value.array().square());
        };
    });
}

inline Value relu(Value a) {
    Node* an = a.node();
    Matrix y = an->value.cwiseMax(0.0);
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            an->grad.array() +=
                n->grad.array() * (an->value.array() > 0.0).cast<double>();
        };
    });
}

inline Value exp_(Value a) {
    Node* an = a.node();
    Matrix y = an->value.array().exp().matrix();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] { an->grad.array() += n->grad.array() * n->value.array(); };
    });
}

/// Natural log; inputs must be strictly positive.
inline Value log_(Value a) {
    Node* an = a.node();
    Matrix y = an->value.array().log().matrix();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] { an->grad.array() += n->grad.array() / an->value.array(); };
    });
}

inline Value sqrt_(Value a) {
    Node* an = a.node();
    Matrix y = an->value.array().sqrt().matrix();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] { an->grad.array() += n->grad.array() * 0.5 / n->value.array(); };
    });
}

/// x^p with constant exponent. p == 0 gives exactly ones with zero gradient.
inline Value pow_scalar(Value a, double p) {
    Node* an = a.node();
    if (p == 0.0)
        return constant(*a.tape(), Matrix::Ones(a.rows(), a.cols()));
    Matrix y = an->value.array().pow(p).matrix();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            an->grad.array() += n->grad.array() * p * an->value.array().pow(p - 1.0);
        };
    });
}

/// Clamp to [lo, hi]; gradient passes only through unclamped entries.
inline Value clamp(Value a, double lo, double hi) {
    Node* an = a.node();
    Matrix y = an->value.cwiseMax(lo).cwiseMin(hi);
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            an->grad.array() += n->grad.array() *
                                ((an->value.array() > lo) && (an->value.array() < hi))
                                    .cast<double>();
        };
    });
}

// ─── Reductions ─────────────────────────────────────────────────────────────

inline Value sum_all(Value a) {
    Node* an = a.node();
    Matrix y(1, 1);
    y(0, 0) = an->value.sum();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] { an->grad.array() += n->grad(0, 0); };
    });
}

inline Value mean_all(Value a) {
    if (a.rows() == 0 || a.cols() == 0)
        throw ContractError("mean_all: empty matrix");
    return scale(sum_all(a), 1.0 / static_cast<double>(a.rows() * a.cols()));
}

inline Value rowwise_sum(Value a) {
    Node* an = a.node();
    Matrix y = an->value.rowwise().sum();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] { an->grad.colwise() += n->grad.col(0); };
    });
}

inline Value colwise_sum(Value a) {
    Node* an = a.node();
    Matrix y = an->value.colwise().sum();
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] { an->grad.rowwise() += n->grad.row(0); };
    });
}

// ─── Structure ops ──────────────────────────────────────────────────────────

inline Value softmax_rows(Value a) {
    Node* an = a.node();
    Matrix y(an->value.rows(), an->value.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        auto row = an->value.row(r).array();
        Eigen::ArrayXd e = (row - row.maxCoeff()).exp();
        y.row(r) = (e / e.sum()).matrix();
    }
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            for (Eigen::Index r = 0; r < n->value.rows(); ++r) {
                auto yr = n->value.row(r).array();
                auto gr = n->grad.row(r).array();
                double dot = (gr * yr).sum();
                an->grad.row(r).array() += yr * (gr - dot);
            }
        };
    });
}

inline Value gather_rows(Value a, std::vector<int> idx) {
    Node* an = a.node();
    Matrix y(static_cast<Eigen::Index>(idx.size()), an->value.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= an->value.rows())
            throw ContractError("gather_rows: index out of range");
        y.row(static_cast<Eigen::Index>(i)) = an->value.row(idx[i]);
    }
    return detail::make(*a.tape(), std::move(y), an->needs_grad,
                        [an, idx = std::move(idx)](Node* n) {
                            return [an, idx, n] {
                                for (std::size_t i = 0; i < idx.size(); ++i)
                                    an->grad.row(idx[i]) +=
                                        n->grad.row(static_cast<Eigen::Index>(i));
                            };
                        });
}

inline Value concat_cols(Value a, Value b) {
    if (a.rows() != b.rows())
        throw ContractError("concat_cols: row counts disagree");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    Matrix y(a.rows(), a.cols() + b.cols());
    y << an->value, bn->value;
    return detail::make(*a.tape(), std::move(y), needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad.leftCols(an->value.cols());
            if (bn->needs_grad) bn->grad += n->grad.rightCols(bn->value.cols());
        };
    });
}

inline Value concat_rows(Value a, Value b) {
    if (a.cols() != b.cols())
        throw ContractError("concat_rows: column counts disagree");
    Node *an = a.node(), *bn = b.node();
    bool needs = an->needs_grad || bn->needs_grad;
    Matrix y(a.rows() + b.rows(), a.cols());
    y << an->value, bn->value;
    return detail::make(*a.tape(), std::move(y), needs, [=](Node* n) {
        return [=] {
            if (an->needs_grad) an->grad += n->grad.topRows(an->value.rows());
            if (bn->needs_grad) bn->grad += n->grad.bottomRows(bn->value.rows());
        };
    });
}

inline Value slice_cols(Value a, Eigen::Index first, Eigen::Index count) {
    if (first < 0 || count < 0 || first + count > a.cols())
        throw ContractError("slice_cols: range out of bounds");
    Node* an = a.node();
    return detail::make(*a.tape(), an->value.middleCols(first, count), an->needs_grad,
                        [=](Node* n) {
                            return [=] { an->grad.middleCols(first, count) += n->grad; };
                        });
}

inline Value slice_rows(Value a, Eigen::Index first, Eigen::Index count) {
    if (first < 0 || count < 0 || first + count > a.rows())
        throw ContractError("slice_rows: range out of bounds");
    Node* an = a.node();
    return detail::make(*a.tape(), an->value.middleRows(first, count), an->needs_grad,
                        [=](Node* n) {
                            return [=] { an->grad.middleRows(first, count) += n->grad; };
                        });
}

/// Column-major reinterpretation of the same coefficients.
inline Value reshape(Value a, Eigen::Index rows, Eigen::Index cols) {
    Node* an = a.node();
    if (rows * cols != an->value.size())
        throw ContractError("reshape: element count mismatch");
    Matrix y = Eigen::Map<const Matrix>(an->value.data(), rows, cols);
    return detail::make(*a.tape(), std::move(y), an->needs_grad, [=](Node* n) {
        return [=] {
            an->grad += Eigen::Map<const Matrix>(n->grad.data(), an->value.rows(),
                                                 an->value.cols());
        };
    });
}

} // namespace relex::ag
