#pragma once

// Layers with explicit forward/backward. A forward call fills a per-call
// cache struct; backward reads that cache, accumulates parameter gradients
// into Param::grad and returns the input gradient. Layers themselves are
// immutable during forward, so inference on a shared network is reentrant.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>

#include "solvuln/nn/tensor.hpp"

namespace solvuln::nn {

template <class T>
class Embedding {
public:
    Embedding() = default;
    Embedding(ParamStore<T>& store, const std::string& name, Eigen::Index vocab, Eigen::Index dim,
              double init_std, Rng& rng)
        : table_(store.add(name, vocab, dim)) {
        init_normal(table_->value, init_std, rng);
    }

    Matrix<T> forward(std::span<const std::int32_t> ids) const {
        Matrix<T> out(static_cast<Eigen::Index>(ids.size()), table_->value.cols());
        for (std::size_t t = 0; t < ids.size(); ++t) out.row(static_cast<Eigen::Index>(t)) = table_->value.row(ids[t]);
        return out;
    }

    void backward(std::span<const std::int32_t> ids, const Matrix<T>& d_out) const {
        for (std::size_t t = 0; t < ids.size(); ++t)
            table_->grad.row(ids[t]) += d_out.row(static_cast<Eigen::Index>(t));
    }

    Eigen::Index rows() const { return table_->value.rows(); }
    Eigen::Index dim() const { return table_->value.cols(); }

private:
    Param<T>* table_ = nullptr;
};

template <class T>
class Dense {
public:
    Dense() = default;
    Dense(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
        : w_(store.add(name + ".weight", in, out)), b_(store.add(name + ".bias", 1, out)) {
        init_xavier(w_->value, rng);
    }

    Matrix<T> forward(const Matrix<T>& x) const {
        Matrix<T> y = x * w_->value;
        y.rowwise() += b_->value.row(0);
        return y;
    }

    Matrix<T> backward(const Matrix<T>& x, const Matrix<T>& dy) const {
        w_->grad.noalias() += x.transpose() * dy;
        b_->grad.row(0) += dy.colwise().sum();
        return dy * w_->value.transpose();
    }

    Param<T>& weight() { return *w_; }
    Param<T>& bias() { return *b_; }

private:
    Param<T>* w_ = nullptr;
    Param<T>* b_ = nullptr;
};

/// Inverted dropout. The mask is empty when the layer was inactive.
template <class T>
struct DropoutMask {
    Matrix<T> scale;
};

template <class T>
Matrix<T> dropout_forward(const Matrix<T>& x, double rate, Rng* rng, DropoutMask<T>& mask) {
    if (rng == nullptr || rate <= 0.0) {
        mask.scale.resize(0, 0);
        return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    mask.scale.resize(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i)
        mask.scale.data()[i] = rng->uniform() < rate ? T(0) : keep_scale;
    return x.cwiseProduct(mask.scale);
}

template <class T>
Matrix<T> dropout_backward(const Matrix<T>& dy, const DropoutMask<T>& mask) {
    if (mask.scale.size() == 0) return dy;
    return dy.cwiseProduct(mask.scale);
}

/// 1-D convolution over time with "same" zero padding, followed by ReLU.
/// Weight layout: (kernel * in_channels) x filters, applied to an im2col view.
template <class T>
class Conv1dRelu {
public:
    struct Cache {
        Matrix<T> cols;
        Matrix<T> out;  // post-ReLU
    };

    Conv1dRelu() = default;
    Conv1dRelu(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index filters,
               Eigen::Index kernel, Rng& rng)
        : kernel_(kernel), in_(in),
          w_(store.add(name + ".weight", kernel * in, filters)),
          b_(store.add(name + ".bias", 1, filters)) {
        init_xavier(w_->value, rng);
    }

    Matrix<T> forward(const Matrix<T>& x, Cache& cache) const {
        const Eigen::Index n = x.rows();
        const Eigen::Index half = kernel_ / 2;
        cache.cols = Matrix<T>::Zero(n, kernel_ * in_);
        for (Eigen::Index t = 0; t < n; ++t) {
            for (Eigen::Index j = 0; j < kernel_; ++j) {
                const Eigen::Index src = t - half + j;
                if (src >= 0 && src < n) cache.cols.block(t, j * in_, 1, in_) = x.row(src);
            }
        }
        cache.out = cache.cols * w_->value;
        cache.out.rowwise() += b_->value.row(0);
        cache.out = cache.out.cwiseMax(T(0));
        return cache.out;
    }

    Matrix<T> backward(const Cache& cache, const Matrix<T>& dy) const {
        const Matrix<T> dz = (cache.out.array() > T(0)).select(dy, T(0));
        w_->grad.noalias() += cache.cols.transpose() * dz;
        b_->grad.row(0) += dz.colwise().sum();
        const Matrix<T> dcols = dz * w_->value.transpose();
        const Eigen::Index n = dy.rows();
        const Eigen::Index half = kernel_ / 2;
        Matrix<T> dx = Matrix<T>::Zero(n, in_);
        for (Eigen::Index t = 0; t < n; ++t) {
            for (Eigen::Index j = 0; j < kernel_; ++j) {
                const Eigen::Index src = t - half + j;
                if (src >= 0 && src < n) dx.row(src) += dcols.block(t, j * in_, 1, in_);
            }
        }
        return dx;
    }

private:
    Eigen::Index kernel_ = 1;
    Eigen::Index in_ = 1;
    Param<T>* w_ = nullptr;
    Param<T>* b_ = nullptr;
};

/// One direction of an LSTM. Gate column blocks are [input, forget, cell, output].
template <class T>
class Lstm {
public:
    struct Cache {
        Matrix<T> x;      // inputs in processing order
        Matrix<T> gates;  // activated gates, n x 4H
        Matrix<T> c;      // cell states, n x H
        Matrix<T> h;      // hidden states, n x H
    };

    Lstm() = default;
    Lstm(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index units, Rng& rng)
        : units_(units),
          wx_(store.add(name + ".weight_ih", in, 4 * units)),
          wh_(store.add(name + ".weight_hh", units, 4 * units)),
          b_(store.add(name + ".bias", 1, 4 * units)) {
        init_xavier(wx_->value, rng);
        init_xavier(wh_->value, rng);
        b_->value.block(0, units, 1, units).setOnes();  // forget-gate bias
    }

    /// `x` rows are already in processing order; outputs follow the same order.
    Matrix<T> forward(const Matrix<T>& x, Cache& cache) const {
        const Eigen::Index n = x.rows();
        const Eigen::Index H = units_;
        cache.x = x;
        Matrix<T> pre = x * wx_->value;
        pre.rowwise() += b_->value.row(0);
        cache.gates.resize(n, 4 * H);
        cache.c.resize(n, H);
        cache.h.resize(n, H);
        RowVector<T> h_prev = RowVector<T>::Zero(H);
        RowVector<T> c_prev = RowVector<T>::Zero(H);
        RowVector<T> z(4 * H);
        for (Eigen::Index t = 0; t < n; ++t) {
            z.noalias() = pre.row(t) + h_prev * wh_->value;
            auto g = cache.gates.row(t);
            for (Eigen::Index k = 0; k < H; ++k) {
                g(k) = sigmoid(z(k));
                g(H + k) = sigmoid(z(H + k));
                g(2 * H + k) = std::tanh(z(2 * H + k));
                g(3 * H + k) = sigmoid(z(3 * H + k));
            }
            for (Eigen::Index k = 0; k < H; ++k) {
                const T c = g(H + k) * c_prev(k) + g(k) * g(2 * H + k);
                cache.c(t, k) = c;
                cache.h(t, k) = g(3 * H + k) * std::tanh(c);
            }
            h_prev = cache.h.row(t);
            c_prev = cache.c.row(t);
        }
        return cache.h;
    }

    Matrix<T> backward(const Cache& cache, const Matrix<T>& dh_out) const {
        const Eigen::Index n = dh_out.rows();
        const Eigen::Index H = units_;
        Matrix<T> dz(n, 4 * H);
        RowVector<T> dh_next = RowVector<T>::Zero(H);
        RowVector<T> dc_next = RowVector<T>::Zero(H);
        for (Eigen::Index t = n - 1; t >= 0; --t) {
            const auto g = cache.gates.row(t);
            for (Eigen::Index k = 0; k < H; ++k) {
                const T i = g(k), f = g(H + k), gg = g(2 * H + k), o = g(3 * H + k);
                const T c = cache.c(t, k);
                const T c_prev = t > 0 ? cache.c(t - 1, k) : T(0);
                const T tc = std::tanh(c);
                const T dh = dh_out(t, k) + dh_next(k);
                const T dc = dh * o * (T(1) - tc * tc) + dc_next(k);
                dz(t, k) = dc * gg * i * (T(1) - i);
                dz(t, H + k) = dc * c_prev * f * (T(1) - f);
                dz(t, 2 * H + k) = dc * i * (T(1) - gg * gg);
                dz(t, 3 * H + k) = dh * tc * o * (T(1) - o);
                dc_next(k) = dc * f;
            }
            dh_next.noalias() = dz.row(t) * wh_->value.transpose();
        }
        if (n > 1) {
            wh_->grad.noalias() += cache.h.topRows(n - 1).transpose() * dz.bottomRows(n - 1);
        }
        wx_->grad.noalias() += cache.x.transpose() * dz;
        b_->grad.row(0) += dz.colwise().sum();
        return dz * wx_->value.transpose();
    }

private:
    Eigen::Index units_ = 1;
    Param<T>* wx_ = nullptr;
    Param<T>* wh_ = nullptr;
    Param<T>* b_ = nullptr;
};

template <class T>
Matrix<T> reverse_rows(const Matrix<T>& m) {
    return m.colwise().reverse();
}

/// Forward and backward LSTMs over the same input, outputs concatenated per
/// position as [forward | backward].
template <class T>
class BiLstm {
public:
    struct Cache {
        typename Lstm<T>::Cache fwd;
        typename Lstm<T>::Cache bwd;
    };

    BiLstm() = default;
    BiLstm(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index units, Rng& rng)
        : units_(units), fwd_(store, name + ".fwd", in, units, rng), bwd_(store, name + ".bwd", in, units, rng) {}

    Matrix<T> forward(const Matrix<T>& x, Cache& cache) const {
        Matrix<T> out(x.rows(), 2 * units_);
        out.leftCols(units_) = fwd_.forward(x, cache.fwd);
        out.rightCols(units_) = reverse_rows<T>(bwd_.forward(reverse_rows<T>(x), cache.bwd));
        return out;
    }

    Matrix<T> backward(const Cache& cache, const Matrix<T>& dy) const {
        Matrix<T> dx = fwd_.backward(cache.fwd, dy.leftCols(units_));
        dx += reverse_rows<T>(bwd_.backward(cache.bwd, reverse_rows<T>(Matrix<T>(dy.rightCols(units_)))));
        return dx;
    }

private:
    Eigen::Index units_ = 1;
    Lstm<T> fwd_;
    Lstm<T> bwd_;
};

/// Single-query additive attention pooling: score_t = v . tanh(W h_t + b),
/// weights = softmax over the given (unpadded) positions.
template <class T>
class AdditiveAttention {
public:
    struct Cache {
        Matrix<T> h;
        Matrix<T> u;        // tanh(hW + b)
        RowVector<T> alpha;
    };

    AdditiveAttention() = default;
    AdditiveAttention(ParamStore<T>& store, const std::string& name, Eigen::Index in, Eigen::Index dim, Rng& rng)
        : w_(store.add(name + ".weight", in, dim)),
          b_(store.add(name + ".bias", 1, dim)),
          v_(store.add(name + ".query", dim, 1)) {
        init_xavier(w_->value, rng);
        init_xavier(v_->value, rng);
    }

    RowVector<T> forward(const Matrix<T>& h, Cache& cache) const {
        cache.h = h;
        Matrix<T> pre = h * w_->value;
        pre.rowwise() += b_->value.row(0);
        cache.u = pre.array().tanh().matrix();
        Matrix<T> scores = (cache.u * v_->value).transpose();
        softmax_rows(scores);
        cache.alpha = scores.row(0);
        return cache.alpha * h;
    }

    Matrix<T> backward(const Cache& cache, const RowVector<T>& d_ctx) const {
        Matrix<T> dh = cache.alpha.transpose() * d_ctx;
        const Eigen::Matrix<T, Eigen::Dynamic, 1> d_alpha = cache.h * d_ctx.transpose();
        const T dot = cache.alpha.dot(d_alpha.transpose());
        const Eigen::Matrix<T, Eigen::Dynamic, 1> d_score =
            (cache.alpha.transpose().array() * (d_alpha.array() - dot)).matrix();
        v_->grad.noalias() += cache.u.transpose() * d_score;
        const Matrix<T> d_pre =
            ((d_score * v_->value.transpose()).array() * (T(1) - cache.u.array().square())).matrix();
        w_->grad.noalias() += cache.h.transpose() * d_pre;
        b_->grad.row(0) += d_pre.colwise().sum();
        dh.noalias() += d_pre * w_->value.transpose();
        return dh;
    }

private:
    Param<T>* w_ = nullptr;
    Param<T>* b_ = nullptr;
    Param<T>* v_ = nullptr;
};

template <class T>
class LayerNorm {
public:
    struct Cache {
        Matrix<T> xhat;
        Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std;
    };

    LayerNorm() = default;
    LayerNorm(ParamStore<T>& store, const std::string& name, Eigen::Index dim)
        : gamma_(store.add(name + ".gamma", 1, dim)), beta_(store.add(name + ".beta", 1, dim)) {
        gamma_->value.setOnes();
    }

    Matrix<T> forward(const Matrix<T>& x, Cache& cache) const {
        const Eigen::Index n = x.rows(), d = x.cols();
        cache.xhat.resize(n, d);
        cache.inv_std.resize(n);
        for (Eigen::Index r = 0; r < n; ++r) {
            const T mean = x.row(r).mean();
            const T var = (x.row(r).array() - mean).square().mean();
            const T inv = T(1) / std::sqrt(var + T(kEps));
            cache.inv_std(r) = inv;
            cache.xhat.row(r) = (x.row(r).array() - mean) * inv;
        }
        Matrix<T> y = cache.xhat.array().rowwise() * gamma_->value.row(0).array();
        y.rowwise() += beta_->value.row(0);
        return y;
    }

    Matrix<T> backward(const Cache& cache, const Matrix<T>& dy) const {
        gamma_->grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
        beta_->grad.row(0) += dy.colwise().sum();
        const Matrix<T> dxhat = dy.array().rowwise() * gamma_->value.row(0).array();
        const T d = static_cast<T>(dy.cols());
        Matrix<T> dx(dy.rows(), dy.cols());
        for (Eigen::Index r = 0; r < dy.rows(); ++r) {
            const T sum = dxhat.row(r).sum();
            const T sum_x = dxhat.row(r).dot(cache.xhat.row(r));
            dx.row(r) = (cache.inv_std(r) / d) *
                        (d * dxhat.row(r).array() - sum - cache.xhat.row(r).array() * sum_x).matrix();
        }
        return dx;
    }

private:
    static constexpr double kEps = 1e-5;
    Param<T>* gamma_ = nullptr;
    Param<T>* beta_ = nullptr;
};

/// Unmasked multi-head self-attention over the unpadded positions.
template <class T>
class SelfAttention {
public:
    struct Cache {
        Matrix<T> x, q, k, v, o;
        std::vector<Matrix<T>> probs;  // per head, n x n
    };

    SelfAttention() = default;
    SelfAttention(ParamStore<T>& store, const std::string& name, Eigen::Index dim, Eigen::Index heads, Rng& rng)
        : heads_(heads), head_dim_(dim / heads),
          q_(store, name + ".query", dim, dim, rng),
          k_(store, name + ".key", dim, dim, rng),
          v_(store, name + ".value", dim, dim, rng),
          o_(store, name + ".output", dim, dim, rng) {}

    Matrix<T> forward(const Matrix<T>& x, Cache& cache) const {
        cache.x = x;
        cache.q = q_.forward(x);
        cache.k = k_.forward(x);
        cache.v = v_.forward(x);
        cache.o.resize(x.rows(), x.cols());
        cache.probs.resize(static_cast<std::size_t>(heads_));
        const T scale = T(1) / std::sqrt(static_cast<T>(head_dim_));
        for (Eigen::Index h = 0; h < heads_; ++h) {
            const auto cols = Eigen::seqN(h * head_dim_, head_dim_);
            Matrix<T>& p = cache.probs[static_cast<std::size_t>(h)];
            p.noalias() = cache.q(Eigen::all, cols) * cache.k(Eigen::all, cols).transpose();
            p *= scale;
            softmax_rows(p);
            cache.o(Eigen::all, cols).noalias() = p * cache.v(Eigen::all, cols);
        }
        return o_.forward(cache.o);
    }

    Matrix<T> backward(const Cache& cache, const Matrix<T>& dy) const {
        const Matrix<T> d_o = o_.backward(cache.o, dy);
        Matrix<T> dq(d_o.rows(), d_o.cols()), dk(d_o.rows(), d_o.cols()), dv(d_o.rows(), d_o.cols());
        const T scale = T(1) / std::sqrt(static_cast<T>(head_dim_));
        for (Eigen::Index h = 0; h < heads_; ++h) {
            const auto cols = Eigen::seqN(h * head_dim_, head_dim_);
            const Matrix<T>& p = cache.probs[static_cast<std::size_t>(h)];
            const Matrix<T> doh = d_o(Eigen::all, cols);
            const Matrix<T> dp = doh * cache.v(Eigen::all, cols).transpose();
            dv(Eigen::all, cols).noalias() = p.transpose() * doh;
            Matrix<T> ds = p.cwiseProduct(dp);
            const Eigen::Matrix<T, Eigen::Dynamic, 1> row_dot = ds.rowwise().sum();
            ds -= p.cwiseProduct(row_dot.replicate(1, p.cols()));
            ds *= scale;
            dq(Eigen::all, cols).noalias() = ds * cache.k(Eigen::all, cols);
            dk(Eigen::all, cols).noalias() = ds.transpose() * cache.q(Eigen::all, cols);
        }
        Matrix<T> dx = q_.backward(cache.x, dq);
        dx += k_.backward(cache.x, dk);
        dx += v_.backward(cache.x, dv);
        return dx;
    }

private:
    Eigen::Index heads_ = 1;
    Eigen::Index head_dim_ = 1;
    Dense<T> q_, k_, v_, o_;
};

/// tanh approximation of GELU.
template <class T>
struct Gelu {
    static T value(T x) {
        const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
        return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
    }
    static T derivative(T x) {
        const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
        const T inner = c * (x + T(0.044715) * x * x * x);
        const T th = std::tanh(inner);
        return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * c * (T(1) + T(3 * 0.044715) * x * x);
    }
};

template <class T>
class FeedForward {
public:
    struct Cache {
        Matrix<T> x, pre, act;
    };

    FeedForward() = default;
    FeedForward(ParamStore<T>& store, const std::string& name, Eigen::Index dim, Eigen::Index hidden, Rng& rng)
        : up_(store, name + ".up", dim, hidden, rng), down_(store, name + ".down", hidden, dim, rng) {}

    Matrix<T> forward(const Matrix<T>& x, Cache& cache) const {
        cache.x = x;
        cache.pre = up_.forward(x);
        cache.act = cache.pre.unaryExpr([](T v) { return Gelu<T>::value(v); });
        return down_.forward(cache.act);
    }

    Matrix<T> backward(const Cache& cache, const Matrix<T>& dy) const {
        Matrix<T> d_act = down_.backward(cache.act, dy);
        d_act.array() *= cache.pre.unaryExpr([](T v) { return Gelu<T>::derivative(v); }).array();
        return up_.backward(cache.x, d_act);
    }

private:
    Dense<T> up_, down_;
};

}  // namespace solvuln::nn
