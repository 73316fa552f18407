#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qxpand/error.hpp"
#include "qxpand/matrix.hpp"
#include "qxpand/rng.hpp"

namespace qx {

// A named trainable tensor with its gradient accumulator.
template <typename S>
struct Parameter {
    std::string name;
    Matrix<S> value;
    Matrix<S> grad;

    Parameter() = default;
    Parameter(std::string n, Matrix<S> v)
        : name(std::move(n)), value(std::move(v)), grad(Matrix<S>::zeros(value.rows, value.cols)) {}

    void zero_grad() { grad.fill(S(0)); }
};

template <typename S>
inline void zero_grads(std::span<Parameter<S>* const> params) {
    for (auto* p : params) p->zero_grad();
}

template <typename S>
inline double global_grad_norm(std::span<Parameter<S>* const> params) {
    double sq = 0.0;
    for (auto* p : params)
        for (S g : p->grad.data) sq += static_cast<double>(g) * static_cast<double>(g);
    return std::sqrt(sq);
}

// Scales all gradients so their global norm does not exceed clip_norm.
// Returns the scale that was applied (1 when no clipping happened).
template <typename S>
inline double clip_global_norm(std::span<Parameter<S>* const> params, double clip_norm) {
    double norm = global_grad_norm(params);
    if (!std::isfinite(norm)) throw numeric_error("clip_global_norm: non-finite gradient norm");
    if (clip_norm <= 0.0 || norm <= clip_norm) return 1.0;
    double scale = clip_norm / norm;
    for (auto* p : params)
        for (S& g : p->grad.data) g = static_cast<S>(g * scale);
    return scale;
}

// value <- value - lr * grad after global-norm clipping; grads are zeroed.
template <typename S>
inline void sgd_step(std::span<Parameter<S>* const> params, double lr, double clip_norm) {
    for (auto* p : params)
        if (!all_finite(p->grad)) throw numeric_error("sgd_step: non-finite gradient in " + p->name);
    clip_global_norm(params, clip_norm);
    for (auto* p : params) {
        for (std::size_t i = 0; i < p->value.data.size(); ++i)
            p->value.data[i] = static_cast<S>(p->value.data[i] - lr * p->grad.data[i]);
        p->zero_grad();
    }
}

// Inverted dropout mask: 0 with probability p, else 1/(1-p).
template <typename S>
inline Matrix<S> dropout_mask(int rows, int cols, double p, SeededRng& rng) {
    if (p < 0.0 || p >= 1.0) throw data_error("dropout_mask: p must be in [0,1)");
    Matrix<S> m(rows, cols);
    const S keep = static_cast<S>(1.0 / (1.0 - p));
    for (auto& v : m.data) v = rng.bernoulli(p) ? S(0) : keep;
    return m;
}

// Transcendentals and reductions run at this width: double for float and
// double scalars, the scalar itself when it is wider (the extended
// precision matters when a tape backs the finite-difference oracle).
template <typename S>
using compute_t = std::conditional_t<(sizeof(S) > sizeof(double)), S, double>;

// Mean masked softmax cross entropy over the rows of a TxV logits matrix.
// loss = -sum_masked log softmax(logits)_t[target_t] / sum(mask)
// dlogits = (softmax - onehot) / sum(mask) on masked rows, zero elsewhere.
template <typename S>
struct CrossEntropyResult {
    S loss;
    Matrix<S> dlogits;
};

template <typename S>
inline CrossEntropyResult<S> cross_entropy(const Matrix<S>& logits, std::span<const int> targets,
                                           std::span<const int> mask) {
    using W = compute_t<S>;
    if (static_cast<int>(targets.size()) != logits.rows || mask.size() != targets.size())
        throw shape_error("cross_entropy: logits " + logits.shape_str() + " vs " +
                          std::to_string(targets.size()) + " targets / " + std::to_string(mask.size()) + " mask");
    int denom = 0;
    for (int m : mask) denom += (m != 0);
    if (denom == 0) throw data_error("cross_entropy: all-zero mask (degenerate batch)");

    CrossEntropyResult<S> out{S(0), Matrix<S>::zeros(logits.rows, logits.cols)};
    W loss = W(0);
    const W inv = W(1) / denom;
    for (int t = 0; t < logits.rows; ++t) {
        if (mask[t] == 0) continue;
        int target = targets[t];
        if (target < 0 || target >= logits.cols)
            throw data_error("cross_entropy: target id " + std::to_string(target) + " out of range");
        W mx = -std::numeric_limits<W>::infinity();
        for (int v = 0; v < logits.cols; ++v) mx = std::max(mx, static_cast<W>(logits.at(t, v)));
        W z = W(0);
        for (int v = 0; v < logits.cols; ++v) z += std::exp(static_cast<W>(logits.at(t, v)) - mx);
        const W logz = std::log(z) + mx;
        loss += (logz - static_cast<W>(logits.at(t, target))) * inv;
        for (int v = 0; v < logits.cols; ++v) {
            W p = std::exp(static_cast<W>(logits.at(t, v)) - logz);
            out.dlogits.at(t, v) = static_cast<S>((p - (v == target ? W(1) : W(0))) * inv);
        }
    }
    out.loss = static_cast<S>(loss);
    return out;
}

// Reverse-mode accumulation over an explicitly recorded operation tape.
// Build one tape per forward pass; backward() walks the nodes in reverse.
// Handles are plain indices; a handle is only meaningful for the tape that
// produced it.
template <typename S>
class Tape {
public:
    struct Val {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    const Matrix<S>& value(Val v) const { return nodes_[v.id].value; }
    const Matrix<S>& grad(Val v) const { return nodes_[v.id].grad; }
    std::size_t size() const { return nodes_.size(); }

    Val constant(Matrix<S> m) { return push(std::move(m), {}); }

    // Gradient flowing into a param node is added to p.grad during backward().
    Val param(Parameter<S>& p) {
        Val v = push(p.value, {});
        Parameter<S>* target = &p;
        nodes_[v.id].back = [this, v, target] {
            require_same_shape(target->grad, nodes_[v.id].grad, "param backward");
            for (std::size_t i = 0; i < target->grad.data.size(); ++i)
                target->grad.data[i] += nodes_[v.id].grad.data[i];
        };
        return v;
    }

    Val matmul(Val a, Val b) {
        const Matrix<S>& A = value(a);
        const Matrix<S>& B = value(b);
        if (A.cols != B.rows)
            throw shape_error("matmul: " + A.shape_str() + " x " + B.shape_str());
        Matrix<S> C = mul(A, B);
        Val out = push(std::move(C), {a, b});
        nodes_[out.id].back = [this, a, b, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            accumulate(a, mul_nt(G, value(b)));   // dA += G * B^T
            accumulate(b, mul_tn(value(a), G));   // dB += A^T * G
        };
        return out;
    }

    // a * b^T
    Val matmul_nt(Val a, Val b) {
        const Matrix<S>& A = value(a);
        const Matrix<S>& B = value(b);
        if (A.cols != B.cols)
            throw shape_error("matmul_nt: " + A.shape_str() + " x " + B.shape_str() + "^T");
        Val out = push(mul_nt(A, B), {a, b});
        nodes_[out.id].back = [this, a, b, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            accumulate(a, mul(G, value(b)));      // dA += G * B
            accumulate(b, mul_tn(G, value(a)));   // dB += G^T * A
        };
        return out;
    }

    Val add(Val a, Val b) {
        const Matrix<S>& A = value(a);
        const Matrix<S>& B = value(b);
        require_same_shape(A, B, "add");
        Matrix<S> C = A;
        for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] += B.data[i];
        Val out = push(std::move(C), {a, b});
        nodes_[out.id].back = [this, a, b, out] {
            accumulate(a, nodes_[out.id].grad);
            accumulate(b, nodes_[out.id].grad);
        };
        return out;
    }

    // broadcast a 1xC row over every row of an RxC matrix
    Val add_rowvec(Val a, Val row) {
        const Matrix<S>& A = value(a);
        const Matrix<S>& R = value(row);
        if (R.rows != 1 || R.cols != A.cols)
            throw shape_error("add_rowvec: " + A.shape_str() + " + " + R.shape_str());
        Matrix<S> C = A;
        for (int r = 0; r < C.rows; ++r)
            for (int c = 0; c < C.cols; ++c) C.at(r, c) += R.at(0, c);
        Val out = push(std::move(C), {a, row});
        nodes_[out.id].back = [this, a, row, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            accumulate(a, G);
            Matrix<S> gr = Matrix<S>::zeros(1, G.cols);
            for (int r = 0; r < G.rows; ++r)
                for (int c = 0; c < G.cols; ++c) gr.at(0, c) += G.at(r, c);
            accumulate(row, gr);
        };
        return out;
    }

    Val hadamard(Val a, Val b) {
        const Matrix<S>& A = value(a);
        const Matrix<S>& B = value(b);
        require_same_shape(A, B, "hadamard");
        Matrix<S> C = A;
        for (std::size_t i = 0; i < C.data.size(); ++i) C.data[i] *= B.data[i];
        Val out = push(std::move(C), {a, b});
        nodes_[out.id].back = [this, a, b, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            Matrix<S> ga = G, gb = G;
            for (std::size_t i = 0; i < G.data.size(); ++i) {
                ga.data[i] *= value(b).data[i];
                gb.data[i] *= value(a).data[i];
            }
            accumulate(a, ga);
            accumulate(b, gb);
        };
        return out;
    }

    // x (RxK) * w (KxC) + b (1xC broadcast)
    Val affine(Val x, Val w, Val b) { return add_rowvec(matmul(x, w), b); }

    Val scale(Val x, double k) {
        Matrix<S> C = value(x);
        for (auto& v : C.data) v = static_cast<S>(v * k);
        Val out = push(std::move(C), {x});
        nodes_[out.id].back = [this, x, k, out] {
            Matrix<S> g = nodes_[out.id].grad;
            for (auto& v : g.data) v = static_cast<S>(v * k);
            accumulate(x, g);
        };
        return out;
    }

    Val sigmoid(Val x) {
        using W = compute_t<S>;
        Matrix<S> C = value(x);
        for (auto& v : C.data) v = static_cast<S>(W(1) / (W(1) + std::exp(-static_cast<W>(v))));
        Val out = push(std::move(C), {x});
        nodes_[out.id].back = [this, x, out] {
            const Matrix<S>& Y = nodes_[out.id].value;
            Matrix<S> g = nodes_[out.id].grad;
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= Y.data[i] * (S(1) - Y.data[i]);
            accumulate(x, g);
        };
        return out;
    }

    Val tanh_map(Val x) {
        using W = compute_t<S>;
        Matrix<S> C = value(x);
        for (auto& v : C.data) v = static_cast<S>(std::tanh(static_cast<W>(v)));
        Val out = push(std::move(C), {x});
        nodes_[out.id].back = [this, x, out] {
            const Matrix<S>& Y = nodes_[out.id].value;
            Matrix<S> g = nodes_[out.id].grad;
            for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= (S(1) - Y.data[i] * Y.data[i]);
            accumulate(x, g);
        };
        return out;
    }

    // Row-wise softmax with max subtraction. Columns >= valid_cols (when
    // valid_cols >= 0) get weight exactly 0 and receive no gradient.
    Val softmax_rows(Val x, int valid_cols = -1) {
        using W = compute_t<S>;
        const Matrix<S>& X = value(x);
        const int limit = valid_cols < 0 ? X.cols : valid_cols;
        if (limit < 1 || limit > X.cols) throw shape_error("softmax_rows: invalid valid_cols");
        Matrix<S> Y = Matrix<S>::zeros(X.rows, X.cols);
        for (int r = 0; r < X.rows; ++r) {
            W mx = -std::numeric_limits<W>::infinity();
            for (int c = 0; c < limit; ++c) mx = std::max(mx, static_cast<W>(X.at(r, c)));
            W z = W(0);
            for (int c = 0; c < limit; ++c) z += std::exp(static_cast<W>(X.at(r, c)) - mx);
            for (int c = 0; c < limit; ++c)
                Y.at(r, c) = static_cast<S>(std::exp(static_cast<W>(X.at(r, c)) - mx) / z);
        }
        Val out = push(std::move(Y), {x});
        nodes_[out.id].back = [this, x, out, limit] {
            using W2 = compute_t<S>;
            const Matrix<S>& Y2 = nodes_[out.id].value;
            const Matrix<S>& G = nodes_[out.id].grad;
            Matrix<S> gx = Matrix<S>::zeros(G.rows, G.cols);
            for (int r = 0; r < G.rows; ++r) {
                W2 dot = W2(0);
                for (int c = 0; c < limit; ++c) dot += static_cast<W2>(G.at(r, c)) * Y2.at(r, c);
                for (int c = 0; c < limit; ++c)
                    gx.at(r, c) = static_cast<S>(Y2.at(r, c) * (static_cast<W2>(G.at(r, c)) - dot));
            }
            accumulate(x, gx);
        };
        return out;
    }

    Val concat_cols(Val a, Val b) {
        const Matrix<S>& A = value(a);
        const Matrix<S>& B = value(b);
        if (A.rows != B.rows)
            throw shape_error("concat_cols: " + A.shape_str() + " | " + B.shape_str());
        Matrix<S> C(A.rows, A.cols + B.cols);
        for (int r = 0; r < A.rows; ++r) {
            for (int c = 0; c < A.cols; ++c) C.at(r, c) = A.at(r, c);
            for (int c = 0; c < B.cols; ++c) C.at(r, A.cols + c) = B.at(r, c);
        }
        Val out = push(std::move(C), {a, b});
        const int acols = A.cols, bcols = B.cols;
        nodes_[out.id].back = [this, a, b, out, acols, bcols] {
            const Matrix<S>& G = nodes_[out.id].grad;
            Matrix<S> ga = Matrix<S>::zeros(G.rows, acols);
            Matrix<S> gb = Matrix<S>::zeros(G.rows, bcols);
            for (int r = 0; r < G.rows; ++r) {
                for (int c = 0; c < acols; ++c) ga.at(r, c) = G.at(r, c);
                for (int c = 0; c < bcols; ++c) gb.at(r, c) = G.at(r, acols + c);
            }
            accumulate(a, ga);
            accumulate(b, gb);
        };
        return out;
    }

    Val slice_rows(Val x, int begin, int count) {
        const Matrix<S>& X = value(x);
        if (begin < 0 || count < 1 || begin + count > X.rows)
            throw shape_error("slice_rows: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                              ") of " + X.shape_str());
        Matrix<S> C(count, X.cols);
        for (int r = 0; r < count; ++r)
            for (int c = 0; c < X.cols; ++c) C.at(r, c) = X.at(begin + r, c);
        Val out = push(std::move(C), {x});
        nodes_[out.id].back = [this, x, begin, count, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            Matrix<S> gx = Matrix<S>::zeros(value(x).rows, value(x).cols);
            for (int r = 0; r < count; ++r)
                for (int c = 0; c < G.cols; ++c) gx.at(begin + r, c) = G.at(r, c);
            accumulate(x, gx);
        };
        return out;
    }

    Val vstack(std::span<const Val> rows) {
        if (rows.empty()) throw shape_error("vstack: empty input");
        int cols = value(rows[0]).cols;
        int total = 0;
        for (Val v : rows) {
            if (value(v).cols != cols) throw shape_error("vstack: column mismatch");
            total += value(v).rows;
        }
        Matrix<S> C(total, cols);
        int at = 0;
        std::vector<Val> deps(rows.begin(), rows.end());
        std::vector<int> offsets;
        for (Val v : rows) {
            offsets.push_back(at);
            const Matrix<S>& B = value(v);
            for (int r = 0; r < B.rows; ++r)
                for (int c = 0; c < cols; ++c) C.at(at + r, c) = B.at(r, c);
            at += B.rows;
        }
        Val out = push(std::move(C), deps);
        nodes_[out.id].back = [this, deps, offsets, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            for (std::size_t i = 0; i < deps.size(); ++i) {
                const Matrix<S>& B = value(deps[i]);
                Matrix<S> g(B.rows, B.cols);
                for (int r = 0; r < B.rows; ++r)
                    for (int c = 0; c < B.cols; ++c) g.at(r, c) = G.at(offsets[i] + r, c);
                accumulate(deps[i], g);
            }
        };
        return out;
    }

    // Gather rows of an embedding table; repeated ids accumulate gradient.
    Val embed_rows(Val table, std::vector<int> ids) {
        const Matrix<S>& T = value(table);
        for (int id : ids)
            if (id < 0 || id >= T.rows)
                throw data_error("embed_rows: id " + std::to_string(id) + " out of range 0.." +
                                 std::to_string(T.rows - 1));
        Matrix<S> C(static_cast<int>(ids.size()), T.cols);
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (int c = 0; c < T.cols; ++c) C.at(static_cast<int>(r), c) = T.at(ids[r], c);
        Val out = push(std::move(C), {table});
        nodes_[out.id].back = [this, table, ids, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            Matrix<S> gt = Matrix<S>::zeros(value(table).rows, value(table).cols);
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (int c = 0; c < G.cols; ++c) gt.at(ids[r], c) += G.at(static_cast<int>(r), c);
            accumulate(table, gt);
        };
        return out;
    }

    // Column-wise max over rows (TxC -> 1xC). Ties pick the earliest row.
    // Gradient routes to the selected rows only.
    Val max_over_rows(Val x, std::vector<int>* argmax_out = nullptr) {
        const Matrix<S>& X = value(x);
        if (X.rows < 1) throw data_error("max_over_rows: empty input");
        Matrix<S> C(1, X.cols);
        std::vector<int> arg(X.cols, 0);
        for (int c = 0; c < X.cols; ++c) {
            S best = X.at(0, c);
            int bi = 0;
            for (int r = 1; r < X.rows; ++r)
                if (X.at(r, c) > best) {
                    best = X.at(r, c);
                    bi = r;
                }
            C.at(0, c) = best;
            arg[c] = bi;
        }
        if (argmax_out) *argmax_out = arg;
        Val out = push(std::move(C), {x});
        nodes_[out.id].back = [this, x, arg, out] {
            const Matrix<S>& G = nodes_[out.id].grad;
            Matrix<S> gx = Matrix<S>::zeros(value(x).rows, value(x).cols);
            for (int c = 0; c < G.cols; ++c) gx.at(arg[c], c) = G.at(0, c);
            accumulate(x, gx);
        };
        return out;
    }

    // Mean masked cross entropy as a 1x1 tape node (see the free function).
    Val cross_entropy_masked(Val logits, std::vector<int> targets, std::vector<int> mask) {
        auto ce = cross_entropy<S>(value(logits), targets, mask);
        Matrix<S> l(1, 1);
        l.at(0, 0) = static_cast<S>(ce.loss);
        Val out = push(std::move(l), {logits});
        auto dlogits = std::make_shared<Matrix<S>>(std::move(ce.dlogits));
        nodes_[out.id].back = [this, logits, dlogits, out] {
            const S g = nodes_[out.id].grad.at(0, 0);
            Matrix<S> gl = *dlogits;
            for (auto& v : gl.data) v *= g;
            accumulate(logits, gl);
        };
        return out;
    }

    Val cross_entropy_mean(Val logits, std::vector<int> targets) {
        std::vector<int> mask(targets.size(), 1);
        return cross_entropy_masked(logits, std::move(targets), std::move(mask));
    }

    // Seeds d(out)/d(out)=1 and walks every node in reverse creation order.
    // Reverse id order is a valid reverse-topological order because every
    // consumer is created after its inputs.
    void backward(Val out) {
        const Matrix<S>& o = value(out);
        if (o.rows != 1 || o.cols != 1) throw shape_error("backward: output must be 1x1, got " + o.shape_str());
        nodes_[out.id].grad.at(0, 0) = S(1);
        for (int i = out.id; i >= 0; --i)
            if (nodes_[i].back) nodes_[i].back();
    }

private:
    struct Node {
        Matrix<S> value;
        Matrix<S> grad;
        std::function<void()> back;
    };

    std::vector<Node> nodes_;

    Val push(Matrix<S> v, std::initializer_list<Val> deps) {
        return push(std::move(v), std::vector<Val>(deps));
    }

    Val push(Matrix<S> v, const std::vector<Val>& deps) {
        for (Val d : deps)
            if (!d.valid() || d.id >= static_cast<int>(nodes_.size()))
                throw error("tape: dependency handle from another tape");
        Node n;
        n.grad = Matrix<S>::zeros(v.rows, v.cols);
        n.value = std::move(v);
        nodes_.push_back(std::move(n));
        return Val{static_cast<int>(nodes_.size()) - 1};
    }

    void accumulate(Val v, const Matrix<S>& g) {
        Matrix<S>& dst = nodes_[v.id].grad;
        require_same_shape(dst, g, "grad accumulate");
        for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += g.data[i];
    }

    static Matrix<S> mul(const Matrix<S>& A, const Matrix<S>& B) {
        Matrix<S> C = Matrix<S>::zeros(A.rows, B.cols);
        for (int i = 0; i < A.rows; ++i)
            for (int k = 0; k < A.cols; ++k) {
                const S a = A.at(i, k);
                for (int j = 0; j < B.cols; ++j) C.at(i, j) += a * B.at(k, j);
            }
        return C;
    }

    // A * B^T
    static Matrix<S> mul_nt(const Matrix<S>& A, const Matrix<S>& B) {
        Matrix<S> C = Matrix<S>::zeros(A.rows, B.rows);
        for (int i = 0; i < A.rows; ++i)
            for (int j = 0; j < B.rows; ++j) {
                S s = S(0);
                for (int k = 0; k < A.cols; ++k) s += A.at(i, k) * B.at(j, k);
                C.at(i, j) = s;
            }
        return C;
    }

    // A^T * B
    static Matrix<S> mul_tn(const Matrix<S>& A, const Matrix<S>& B) {
        Matrix<S> C = Matrix<S>::zeros(A.cols, B.cols);
        for (int k = 0; k < A.rows; ++k)
            for (int i = 0; i < A.cols; ++i) {
                const S a = A.at(k, i);
                for (int j = 0; j < B.cols; ++j) C.at(i, j) += a * B.at(k, j);
            }
        return C;
    }
};

}  // namespace qx
