#pragma once

#include "afs/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace afs::nn {

// Row-major 2-D matrix. The scalar type is float in production and double in
// the gradient-check builds.
template <typename T>
struct Mat {
    int rows = 0, cols = 0;
    std::vector<T> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), T(0)) {}

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    T* row(int r) { return v.data() + size_t(r) * cols; }
    const T* row(int r) const { return v.data() + size_t(r) * cols; }
    T& at(int r, int c) { return v[size_t(r) * cols + c]; }
    const T& at(int r, int c) const { return v[size_t(r) * cols + c]; }
    size_t size() const { return v.size(); }
};

namespace detail {

// c (m x n) += a (m x k) * b (k x n)
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + size_t(i) * n;
        const T* arow = a + size_t(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + size_t(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c (m x n) += a (m x k) * b^T (b is n x k)
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + size_t(i) * k;
        T* crow = c + size_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + size_t(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// c (m x n) += a^T (a is k x m) * b (k x n)
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const T* arow = a + size_t(p) * m;
        const T* brow = b + size_t(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + size_t(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
T gelu_fwd(T x) {
    return T(0.5) * x * (T(1) + T(std::erf(double(x) / std::numbers::sqrt2)));
}

template <typename T>
T gelu_bwd(T x) {
    const double xd = double(x);
    const double phi = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * (1.0 + std::erf(xd / std::numbers::sqrt2));
    return T(cdf + xd * phi);
}

} // namespace detail

// Tape-based reverse-mode autodiff over 2-D nodes. A graph is built once per
// training step; backward() replays the tape in reverse and accumulates into
// registered parameter gradient sinks.
template <typename T>
class Graph {
  public:
    using Ref = int;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // --- leaves ---------------------------------------------------------

    Ref input(Mat<T> m) {
        nodes_.push_back(Node{std::move(m), {}});
        return Ref(nodes_.size() - 1);
    }

    Ref input(int rows, int cols, std::span<const T> data) {
        if (data.size() != size_t(rows) * cols)
            raise(ErrorCode::ShapeMismatch, "graph input: data length != rows*cols");
        Mat<T> m(rows, cols);
        std::copy(data.begin(), data.end(), m.v.begin());
        return input(std::move(m));
    }

    Ref zeros(int rows, int cols) { return input(Mat<T>(rows, cols)); }

    // Leaf whose gradient is added into *sink after backward().
    Ref param(const Mat<T>& value, Mat<T>* sink) {
        const Ref r = input(value);
        tape_.push_back([this, r, sink] {
            const Mat<T>& g = nodes_[r].grad;
            if (sink->rows != g.rows || sink->cols != g.cols)
                raise(ErrorCode::ShapeMismatch, "graph param: gradient sink shape mismatch");
            for (size_t i = 0; i < g.size(); ++i) sink->v[i] += g.v[i];
        });
        return r;
    }

    // --- elementwise ----------------------------------------------------

    // b may match a, be a 1 x cols row vector, or be 1 x 1.
    Ref add(Ref a, Ref b) { return binary(a, b, /*subtract=*/false); }
    Ref sub(Ref a, Ref b) { return binary(a, b, /*subtract=*/true); }

    Ref mul(Ref a, Ref b) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        const int mode = broadcast_mode(av, bv, "mul");
        Mat<T> out(av.rows, av.cols);
        for (int r = 0; r < av.rows; ++r)
            for (int c = 0; c < av.cols; ++c)
                out.at(r, c) = av.at(r, c) * bval(bv, mode, r, c);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, b, o, mode] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& av = nodes_[a].val;
            const Mat<T>& bv = nodes_[b].val;
            Mat<T>& ga = nodes_[a].grad;
            Mat<T>& gb = nodes_[b].grad;
            for (int r = 0; r < av.rows; ++r)
                for (int c = 0; c < av.cols; ++c) {
                    const T g = go.at(r, c);
                    ga.at(r, c) += g * bval(bv, mode, r, c);
                    bgrad(gb, mode, r, c) += g * av.at(r, c);
                }
        });
        return o;
    }

    Ref scale(Ref a, T s) {
        return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
    }
    Ref add_const(Ref a, T c) {
        return unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
    }
    Ref neg(Ref a) { return scale(a, T(-1)); }

    Ref exp(Ref a) {
        return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
    }
    Ref log(Ref a) {
        return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
    }
    Ref expm1(Ref a) {
        return unary(a, [](T x) { return std::expm1(x); },
                     [](T x, T) { return std::exp(x); });
    }
    Ref log1p(Ref a) {
        return unary(a, [](T x) { return std::log1p(x); },
                     [](T x, T) { return T(1) / (T(1) + x); });
    }
    Ref sqrt(Ref a) {
        return unary(a, [](T x) { return std::sqrt(x); },
                     [](T, T y) { return T(0.5) / y; });
    }
    Ref sin(Ref a) {
        return unary(a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
    }
    Ref cos(Ref a) {
        return unary(a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
    }
    Ref gelu(Ref a) {
        return unary(a, [](T x) { return detail::gelu_fwd(x); },
                     [](T x, T) { return detail::gelu_bwd(x); });
    }
    Ref abs(Ref a) {
        return unary(a, [](T x) { return std::abs(x); },
                     [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
    }
    Ref max_const(Ref a, T floor) {
        return unary(a, [floor](T x) { return std::max(x, floor); },
                     [floor](T x, T) { return x > floor ? T(1) : T(0); });
    }

    // --- linear algebra ---------------------------------------------------

    Ref matmul(Ref a, Ref b) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        if (av.cols != bv.rows) raise(ErrorCode::ShapeMismatch, "matmul: inner dims differ");
        Mat<T> out(av.rows, bv.cols);
        detail::gemm_nn(av.data(), bv.data(), out.data(), av.rows, av.cols, bv.cols);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, b, o] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& av = nodes_[a].val;
            const Mat<T>& bv = nodes_[b].val;
            detail::gemm_nt(go.data(), bv.data(), nodes_[a].grad.data(), av.rows, bv.cols,
                            av.cols);
            detail::gemm_tn(av.data(), go.data(), nodes_[b].grad.data(), av.cols, av.rows,
                            bv.cols);
        });
        return o;
    }

    // a * b^T, where b is n x k.
    Ref matmul_nt(Ref a, Ref b) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        if (av.cols != bv.cols) raise(ErrorCode::ShapeMismatch, "matmul_nt: inner dims differ");
        Mat<T> out(av.rows, bv.rows);
        detail::gemm_nt(av.data(), bv.data(), out.data(), av.rows, av.cols, bv.rows);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, b, o] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& av = nodes_[a].val;
            const Mat<T>& bv = nodes_[b].val;
            // d a += go * b ; d b += go^T * a
            detail::gemm_nn(go.data(), bv.data(), nodes_[a].grad.data(), av.rows, bv.rows,
                            av.cols);
            detail::gemm_tn(go.data(), av.data(), nodes_[b].grad.data(), bv.rows, av.rows,
                            av.cols);
        });
        return o;
    }

    // x (N x in) * w^T (w: out x in) + b (1 x out)
    Ref affine(Ref x, Ref w, Ref b) { return add(matmul_nt(x, w), b); }

    Ref transpose(Ref a) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.cols, av.rows);
        for (int r = 0; r < av.rows; ++r)
            for (int c = 0; c < av.cols; ++c) out.at(c, r) = av.at(r, c);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < ga.rows; ++r)
                for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.at(c, r);
        });
        return o;
    }

    // --- shape ------------------------------------------------------------

    Ref reshape(Ref a, int rows, int cols) {
        const Mat<T>& av = val(a);
        if (size_t(rows) * cols != av.size())
            raise(ErrorCode::ShapeMismatch, "reshape: element count changes");
        Mat<T> out(rows, cols);
        out.v = av.v;
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += go.v[i];
        });
        return o;
    }

    Ref slice_cols(Ref a, int c0, int c1) {
        const Mat<T>& av = val(a);
        if (c0 < 0 || c1 > av.cols || c0 >= c1)
            raise(ErrorCode::ShapeMismatch, "slice_cols: bad range");
        Mat<T> out(av.rows, c1 - c0);
        for (int r = 0; r < av.rows; ++r)
            std::copy_n(av.row(r) + c0, c1 - c0, out.row(r));
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, c0] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) ga.at(r, c0 + c) += go.at(r, c);
        });
        return o;
    }

    Ref slice_rows(Ref a, int r0, int r1) {
        const Mat<T>& av = val(a);
        if (r0 < 0 || r1 > av.rows || r0 >= r1)
            raise(ErrorCode::ShapeMismatch, "slice_rows: bad range");
        Mat<T> out(r1 - r0, av.cols);
        std::copy_n(av.row(r0), out.size(), out.data());
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, r0] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) ga.at(r0 + r, c) += go.at(r, c);
        });
        return o;
    }

    Ref concat_cols(std::span<const Ref> parts) {
        if (parts.empty()) raise(ErrorCode::ShapeMismatch, "concat_cols: no inputs");
        const int rows = val(parts[0]).rows;
        int cols = 0;
        for (Ref p : parts) {
            if (val(p).rows != rows) raise(ErrorCode::ShapeMismatch, "concat_cols: row mismatch");
            cols += val(p).cols;
        }
        Mat<T> out(rows, cols);
        int off = 0;
        for (Ref p : parts) {
            const Mat<T>& pv = val(p);
            for (int r = 0; r < rows; ++r) std::copy_n(pv.row(r), pv.cols, out.row(r) + off);
            off += pv.cols;
        }
        const Ref o = push(std::move(out));
        std::vector<Ref> ps(parts.begin(), parts.end());
        tape_.push_back([this, ps, o] {
            const Mat<T>& go = nodes_[o].grad;
            int off = 0;
            for (Ref p : ps) {
                Mat<T>& gp = nodes_[p].grad;
                for (int r = 0; r < gp.rows; ++r)
                    for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += go.at(r, off + c);
                off += gp.cols;
            }
        });
        return o;
    }

    Ref concat_cols(Ref a, Ref b) {
        const Ref parts[2] = {a, b};
        return concat_cols(std::span<const Ref>(parts, 2));
    }

    Ref concat_rows(std::span<const Ref> parts) {
        if (parts.empty()) raise(ErrorCode::ShapeMismatch, "concat_rows: no inputs");
        const int cols = val(parts[0]).cols;
        int rows = 0;
        for (Ref p : parts) {
            if (val(p).cols != cols) raise(ErrorCode::ShapeMismatch, "concat_rows: col mismatch");
            rows += val(p).rows;
        }
        Mat<T> out(rows, cols);
        int off = 0;
        for (Ref p : parts) {
            const Mat<T>& pv = val(p);
            std::copy_n(pv.data(), pv.size(), out.row(off));
            off += pv.rows;
        }
        const Ref o = push(std::move(out));
        std::vector<Ref> ps(parts.begin(), parts.end());
        tape_.push_back([this, ps, o] {
            const Mat<T>& go = nodes_[o].grad;
            int off = 0;
            for (Ref p : ps) {
                Mat<T>& gp = nodes_[p].grad;
                for (size_t i = 0; i < gp.size(); ++i) gp.v[i] += go.v[size_t(off) * gp.cols + i];
                off += gp.rows;
            }
        });
        return o;
    }

    Ref concat_rows(Ref a, Ref b) {
        const Ref parts[2] = {a, b};
        return concat_rows(std::span<const Ref>(parts, 2));
    }

    // out[i] = a.row(idx[i]); duplicate and arbitrary-order indices allowed.
    Ref gather_rows(Ref a, std::vector<int> idx) {
        const Mat<T>& av = val(a);
        Mat<T> out(int(idx.size()), av.cols);
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= av.rows)
                raise(ErrorCode::ShapeMismatch, "gather_rows: index out of range");
            std::copy_n(av.row(idx[i]), av.cols, out.row(int(i)));
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, idx = std::move(idx)] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (size_t i = 0; i < idx.size(); ++i) {
                const T* src = go.row(int(i));
                T* dst = ga.row(idx[i]);
                for (int c = 0; c < go.cols; ++c) dst[c] += src[c];
            }
        });
        return o;
    }

    // Flat gather: out.v[i] = map[i] >= 0 ? a.v[map[i]] : 0. Used for signal
    // framing with arbitrary padding conventions.
    Ref gather_flat(Ref a, std::vector<int64_t> map, int rows, int cols) {
        const Mat<T>& av = val(a);
        if (map.size() != size_t(rows) * cols)
            raise(ErrorCode::ShapeMismatch, "gather_flat: map length != rows*cols");
        Mat<T> out(rows, cols);
        for (size_t i = 0; i < map.size(); ++i) {
            if (map[i] >= int64_t(av.size()))
                raise(ErrorCode::ShapeMismatch, "gather_flat: index out of range");
            out.v[i] = map[i] >= 0 ? av.v[size_t(map[i])] : T(0);
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, map = std::move(map)] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (size_t i = 0; i < map.size(); ++i)
                if (map[i] >= 0) ga.v[size_t(map[i])] += go.v[i];
        });
        return o;
    }

    // Each input row repeated `times` consecutive output rows.
    Ref repeat_rows(Ref a, int times) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.rows * times, av.cols);
        for (int r = 0; r < av.rows; ++r)
            for (int t = 0; t < times; ++t)
                std::copy_n(av.row(r), av.cols, out.row(r * times + t));
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, times] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < ga.rows; ++r)
                for (int t = 0; t < times; ++t) {
                    const T* src = go.row(r * times + t);
                    T* dst = ga.row(r);
                    for (int c = 0; c < ga.cols; ++c) dst[c] += src[c];
                }
        });
        return o;
    }

    // --- reductions & softmax ----------------------------------------------

    Ref rowsum(Ref a) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.rows, 1);
        for (int r = 0; r < av.rows; ++r) {
            T acc = T(0);
            for (int c = 0; c < av.cols; ++c) acc += av.at(r, c);
            out.at(r, 0) = acc;
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < ga.rows; ++r)
                for (int c = 0; c < ga.cols; ++c) ga.at(r, c) += go.at(r, 0);
        });
        return o;
    }

    Ref sum(Ref a) {
        const Mat<T>& av = val(a);
        Mat<T> out(1, 1);
        T acc = T(0);
        for (const T& x : av.v) acc += x;
        out.at(0, 0) = acc;
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] {
            const T g = nodes_[o].grad.at(0, 0);
            for (T& x : nodes_[a].grad.v) x += g;
        });
        return o;
    }

    Ref mean(Ref a) {
        const T inv = T(1) / T(val(a).size());
        return scale(sum(a), inv);
    }

    Ref softmax_rows(Ref a) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.rows, av.cols);
        for (int r = 0; r < av.rows; ++r) softmax_row(av.row(r), out.row(r), av.cols);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] { softmax_backward(a, o); });
        return o;
    }

    Ref log_softmax_rows(Ref a) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.rows, av.cols);
        for (int r = 0; r < av.rows; ++r) {
            const T* x = av.row(r);
            T* y = out.row(r);
            T mx = x[0];
            for (int c = 1; c < av.cols; ++c) mx = std::max(mx, x[c]);
            T acc = T(0);
            for (int c = 0; c < av.cols; ++c) acc += std::exp(x[c] - mx);
            const T lse = mx + std::log(acc);
            for (int c = 0; c < av.cols; ++c) y[c] = x[c] - lse;
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& yv = nodes_[o].val;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < ga.rows; ++r) {
                T gsum = T(0);
                for (int c = 0; c < ga.cols; ++c) gsum += go.at(r, c);
                for (int c = 0; c < ga.cols; ++c)
                    ga.at(r, c) += go.at(r, c) - std::exp(yv.at(r, c)) * gsum;
            }
        });
        return o;
    }

    Ref logsumexp_rows(Ref a) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.rows, 1);
        for (int r = 0; r < av.rows; ++r) {
            const T* x = av.row(r);
            T mx = x[0];
            for (int c = 1; c < av.cols; ++c) mx = std::max(mx, x[c]);
            T acc = T(0);
            for (int c = 0; c < av.cols; ++c) acc += std::exp(x[c] - mx);
            out.at(r, 0) = mx + std::log(acc);
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& av = nodes_[a].val;
            const Mat<T>& ov = nodes_[o].val;
            Mat<T>& ga = nodes_[a].grad;
            for (int r = 0; r < ga.rows; ++r) {
                const T g = go.at(r, 0);
                const T lse = ov.at(r, 0);
                for (int c = 0; c < ga.cols; ++c)
                    ga.at(r, c) += g * std::exp(av.at(r, c) - lse);
            }
        });
        return o;
    }

    // Causal attention softmax: query row i attends key columns j with
    // j <= i + key_offset. Fully masked rows yield all-zero probabilities.
    Ref causal_softmax(Ref scores, int key_offset) {
        const Mat<T>& sv = val(scores);
        Mat<T> out(sv.rows, sv.cols);
        for (int r = 0; r < sv.rows; ++r) {
            const int limit = std::min(sv.cols, r + key_offset + 1);
            if (limit <= 0) continue;
            softmax_row(sv.row(r), out.row(r), limit);
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, scores, o] { softmax_backward(scores, o); });
        return o;
    }

    // --- structured ops ------------------------------------------------------

    // Rotary position embedding on a T x d head slice; row r is position
    // pos0 + r. Pairs (2i, 2i+1) are rotated by angle pos * base^(-2i/d).
    Ref rope(Ref a, int pos0, T base = T(10000)) {
        const Mat<T>& av = val(a);
        if (av.cols % 2 != 0) raise(ErrorCode::ShapeMismatch, "rope: odd width");
        Mat<T> out(av.rows, av.cols);
        rope_apply(av, out, pos0, base, /*inverse=*/false);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, pos0, base] {
            Mat<T> gin(nodes_[a].grad.rows, nodes_[a].grad.cols);
            rope_apply(nodes_[o].grad, gin, pos0, base, /*inverse=*/true);
            Mat<T>& ga = nodes_[a].grad;
            for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += gin.v[i];
        });
        return o;
    }

    // Causal depthwise conv over time. x: T x C, w: K x C, b: 1 x C;
    // y[t][c] = b[c] + sum_k w[k][c] * x[t-K+1+k][c], zero left padding.
    Ref causal_dwconv(Ref x, Ref w, Ref b) {
        const Mat<T>& xv = val(x);
        const Mat<T>& wv = val(w);
        const Mat<T>& bv = val(b);
        if (wv.cols != xv.cols || bv.cols != xv.cols || bv.rows != 1)
            raise(ErrorCode::ShapeMismatch, "causal_dwconv: channel mismatch");
        const int K = wv.rows;
        Mat<T> out(xv.rows, xv.cols);
        for (int t = 0; t < xv.rows; ++t) {
            T* y = out.row(t);
            std::copy_n(bv.row(0), xv.cols, y);
            for (int k = 0; k < K; ++k) {
                const int src = t - K + 1 + k;
                if (src < 0) continue;
                const T* xr = xv.row(src);
                const T* wr = wv.row(k);
                for (int c = 0; c < xv.cols; ++c) y[c] += wr[c] * xr[c];
            }
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, x, w, b, o, K] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& xv = nodes_[x].val;
            const Mat<T>& wv = nodes_[w].val;
            Mat<T>& gx = nodes_[x].grad;
            Mat<T>& gw = nodes_[w].grad;
            Mat<T>& gb = nodes_[b].grad;
            for (int t = 0; t < xv.rows; ++t) {
                const T* g = go.row(t);
                for (int c = 0; c < xv.cols; ++c) gb.at(0, c) += g[c];
                for (int k = 0; k < K; ++k) {
                    const int src = t - K + 1 + k;
                    if (src < 0) continue;
                    const T* xr = xv.row(src);
                    const T* wr = wv.row(k);
                    T* gxr = gx.row(src);
                    T* gwr = gw.row(k);
                    for (int c = 0; c < xv.cols; ++c) {
                        gxr[c] += wr[c] * g[c];
                        gwr[c] += xr[c] * g[c];
                    }
                }
            }
        });
        return o;
    }

    // Per-row layer normalization with learned gain/bias (1 x C each).
    Ref layernorm(Ref x, Ref gain, Ref bias, T eps) {
        const Mat<T>& xv = val(x);
        const Mat<T>& gv = val(gain);
        const Mat<T>& bv = val(bias);
        if (gv.cols != xv.cols || bv.cols != xv.cols)
            raise(ErrorCode::ShapeMismatch, "layernorm: width mismatch");
        Mat<T> out(xv.rows, xv.cols);
        Mat<T> stats(xv.rows, 2); // mean, rstd per row
        const int C = xv.cols;
        for (int r = 0; r < xv.rows; ++r) {
            const T* xr = xv.row(r);
            T mu = T(0);
            for (int c = 0; c < C; ++c) mu += xr[c];
            mu /= T(C);
            T var = T(0);
            for (int c = 0; c < C; ++c) {
                const T d = xr[c] - mu;
                var += d * d;
            }
            var /= T(C);
            const T rstd = T(1) / std::sqrt(var + eps);
            stats.at(r, 0) = mu;
            stats.at(r, 1) = rstd;
            T* y = out.row(r);
            for (int c = 0; c < C; ++c) y[c] = gv.at(0, c) * (xr[c] - mu) * rstd + bv.at(0, c);
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, x, gain, bias, o, stats = std::move(stats)] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& xv = nodes_[x].val;
            const Mat<T>& gv = nodes_[gain].val;
            Mat<T>& gx = nodes_[x].grad;
            Mat<T>& gg = nodes_[gain].grad;
            Mat<T>& gb = nodes_[bias].grad;
            const int C = xv.cols;
            for (int r = 0; r < xv.rows; ++r) {
                const T mu = stats.at(r, 0);
                const T rstd = stats.at(r, 1);
                const T* xr = xv.row(r);
                const T* g = go.row(r);
                T sum_gxh = T(0), sum_g = T(0);
                for (int c = 0; c < C; ++c) {
                    const T xhat = (xr[c] - mu) * rstd;
                    const T gi = g[c] * gv.at(0, c);
                    sum_gxh += gi * xhat;
                    sum_g += gi;
                    gg.at(0, c) += g[c] * xhat;
                    gb.at(0, c) += g[c];
                }
                for (int c = 0; c < C; ++c) {
                    const T xhat = (xr[c] - mu) * rstd;
                    const T gi = g[c] * gv.at(0, c);
                    gx.at(r, c) += rstd * (gi - (sum_g + xhat * sum_gxh) / T(C));
                }
            }
        });
        return o;
    }

    // Overlap-add of frames (T x win) with the given hop into a 1 x out_len row.
    Ref overlap_add(Ref frames, int hop, int out_len) {
        const Mat<T>& fv = val(frames);
        Mat<T> out(1, out_len);
        for (int t = 0; t < fv.rows; ++t) {
            const T* fr = fv.row(t);
            const int base = t * hop;
            for (int j = 0; j < fv.cols; ++j) {
                const int s = base + j;
                if (s >= 0 && s < out_len) out.at(0, s) += fr[j];
            }
        }
        const Ref o = push(std::move(out));
        tape_.push_back([this, frames, o, hop] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& gf = nodes_[frames].grad;
            for (int t = 0; t < gf.rows; ++t) {
                T* fr = gf.row(t);
                const int base = t * hop;
                for (int j = 0; j < gf.cols; ++j) {
                    const int s = base + j;
                    if (s >= 0 && s < go.cols) fr[j] += go.at(0, s);
                }
            }
        });
        return o;
    }

    // Forward takes the constant `value`; gradient passes through to x.
    Ref straight_through(Mat<T> value, Ref x) {
        const Mat<T>& xv = val(x);
        if (value.rows != xv.rows || value.cols != xv.cols)
            raise(ErrorCode::ShapeMismatch, "straight_through: shape mismatch");
        const Ref o = push(std::move(value));
        tape_.push_back([this, x, o] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& gx = nodes_[x].grad;
            for (size_t i = 0; i < gx.size(); ++i) gx.v[i] += go.v[i];
        });
        return o;
    }

    // --- driver ------------------------------------------------------------

    void backward(Ref loss) {
        if (loss < 0 || loss >= Ref(nodes_.size()))
            raise(ErrorCode::GraphError, "backward: node not part of this graph");
        if (val(loss).rows != 1 || val(loss).cols != 1)
            raise(ErrorCode::GraphError, "backward: loss must be a scalar node");
        for (Node& n : nodes_) {
            n.grad = Mat<T>(n.val.rows, n.val.cols);
        }
        nodes_[loss].grad.at(0, 0) = T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

    const Mat<T>& val(Ref r) const { return nodes_[at(r)].val; }
    const Mat<T>& grad(Ref r) const { return nodes_[at(r)].grad; }
    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Mat<T> val, grad;
    };

    size_t at(Ref r) const {
        if (r < 0 || size_t(r) >= nodes_.size())
            raise(ErrorCode::GraphError, "graph: invalid node reference");
        return size_t(r);
    }

    Ref push(Mat<T> m) {
        nodes_.push_back(Node{std::move(m), {}});
        return Ref(nodes_.size() - 1);
    }

    template <typename F, typename G>
    Ref unary(Ref a, F fwd, G dfdx) {
        const Mat<T>& av = val(a);
        Mat<T> out(av.rows, av.cols);
        for (size_t i = 0; i < av.size(); ++i) out.v[i] = fwd(av.v[i]);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, o, dfdx] {
            const Mat<T>& go = nodes_[o].grad;
            const Mat<T>& av = nodes_[a].val;
            const Mat<T>& ov = nodes_[o].val;
            Mat<T>& ga = nodes_[a].grad;
            for (size_t i = 0; i < ga.size(); ++i) ga.v[i] += go.v[i] * dfdx(av.v[i], ov.v[i]);
        });
        return o;
    }

    // broadcast modes: 0 same shape, 1 row vector (1 x C), 2 scalar (1 x 1)
    static int broadcast_mode(const Mat<T>& a, const Mat<T>& b, const char* op) {
        if (b.rows == a.rows && b.cols == a.cols) return 0;
        if (b.rows == 1 && b.cols == 1) return 2;
        if (b.rows == 1 && b.cols == a.cols) return 1;
        raise(ErrorCode::ShapeMismatch, std::string(op) + ": incompatible shapes");
    }
    static T bval(const Mat<T>& b, int mode, int r, int c) {
        return mode == 0 ? b.at(r, c) : (mode == 1 ? b.at(0, c) : b.at(0, 0));
    }
    static T& bgrad(Mat<T>& gb, int mode, int r, int c) {
        return mode == 0 ? gb.at(r, c) : (mode == 1 ? gb.at(0, c) : gb.at(0, 0));
    }

    Ref binary(Ref a, Ref b, bool subtract) {
        const Mat<T>& av = val(a);
        const Mat<T>& bv = val(b);
        const int mode = broadcast_mode(av, bv, subtract ? "sub" : "add");
        Mat<T> out(av.rows, av.cols);
        const T sgn = subtract ? T(-1) : T(1);
        for (int r = 0; r < av.rows; ++r)
            for (int c = 0; c < av.cols; ++c)
                out.at(r, c) = av.at(r, c) + sgn * bval(bv, mode, r, c);
        const Ref o = push(std::move(out));
        tape_.push_back([this, a, b, o, mode, sgn] {
            const Mat<T>& go = nodes_[o].grad;
            Mat<T>& ga = nodes_[a].grad;
            Mat<T>& gb = nodes_[b].grad;
            for (int r = 0; r < go.rows; ++r)
                for (int c = 0; c < go.cols; ++c) {
                    ga.at(r, c) += go.at(r, c);
                    bgrad(gb, mode, r, c) += sgn * go.at(r, c);
                }
        });
        return o;
    }

    static void softmax_row(const T* x, T* y, int n) {
        T mx = x[0];
        for (int c = 1; c < n; ++c) mx = std::max(mx, x[c]);
        T acc = T(0);
        for (int c = 0; c < n; ++c) {
            y[c] = std::exp(x[c] - mx);
            acc += y[c];
        }
        for (int c = 0; c < n; ++c) y[c] /= acc;
    }

    // Shared softmax backward; masked entries have y == 0 and contribute 0.
    void softmax_backward(Ref a, Ref o) {
        const Mat<T>& go = nodes_[o].grad;
        const Mat<T>& yv = nodes_[o].val;
        Mat<T>& ga = nodes_[a].grad;
        for (int r = 0; r < ga.rows; ++r) {
            T dot = T(0);
            for (int c = 0; c < ga.cols; ++c) dot += go.at(r, c) * yv.at(r, c);
            for (int c = 0; c < ga.cols; ++c)
                ga.at(r, c) += yv.at(r, c) * (go.at(r, c) - dot);
        }
    }

    static void rope_apply(const Mat<T>& in, Mat<T>& out, int pos0, T base, bool inverse) {
        const int pairs = in.cols / 2;
        for (int r = 0; r < in.rows; ++r) {
            const double pos = double(pos0 + r);
            const T* x = in.row(r);
            T* y = out.row(r);
            for (int i = 0; i < pairs; ++i) {
                const double theta =
                    pos * std::pow(double(base), -2.0 * double(i) / double(in.cols));
                const T c = T(std::cos(theta));
                const T s = T(inverse ? -std::sin(theta) : std::sin(theta));
                const T x0 = x[2 * i], x1 = x[2 * i + 1];
                y[2 * i] = x0 * c - x1 * s;
                y[2 * i + 1] = x0 * s + x1 * c;
            }
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::function<void()>> tape_;
};

} // namespace afs::nn
