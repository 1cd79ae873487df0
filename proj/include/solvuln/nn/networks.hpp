#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "solvuln/nn/layers.hpp"

namespace solvuln::nn {

struct RecurrentDims {
    Eigen::Index vocab_size = 0;
    Eigen::Index embed_dim = 128;
    Eigen::Index conv_filters = 64;
    Eigen::Index conv_kernel = 5;
    Eigen::Index recurrent_units = 64;
    Eigen::Index attention_dim = 64;
    double dropout = 0.3;
    Eigen::Index num_classes = 4;
};

// Only the real (unpadded) prefix of a sequence is fed through the network; an
// empty sequence is processed as a single PAD position.
inline std::span<const std::int32_t> active_ids(std::span<const std::int32_t> ids, std::size_t true_length) {
    return ids.first(true_length == 0 ? std::min<std::size_t>(1, ids.size()) : std::min(true_length, ids.size()));
}

/// Embedding -> Conv1d+ReLU -> BiLSTM -> additive attention pooling -> dense.
/// Produces logits; softmax is applied by the caller.
template <class T>
class RecurrentNet {
public:
    struct Trace {
        std::vector<std::int32_t> ids;
        typename Conv1dRelu<T>::Cache conv;
        DropoutMask<T> conv_drop;
        typename BiLstm<T>::Cache rnn;
        typename AdditiveAttention<T>::Cache attn;
        Matrix<T> pooled;
        DropoutMask<T> head_drop;
    };

    RecurrentNet(const RecurrentDims& dims, std::uint64_t seed) : dims_(dims) {
        Rng rng(seed);
        embed_ = Embedding<T>(store_, "embedding", dims.vocab_size, dims.embed_dim, 0.05, rng);
        conv_ = Conv1dRelu<T>(store_, "conv", dims.embed_dim, dims.conv_filters, dims.conv_kernel, rng);
        rnn_ = BiLstm<T>(store_, "bilstm", dims.conv_filters, dims.recurrent_units, rng);
        attn_ = AdditiveAttention<T>(store_, "attention", 2 * dims.recurrent_units, dims.attention_dim, rng);
        head_ = Dense<T>(store_, "classifier", 2 * dims.recurrent_units, dims.num_classes, rng);
    }

    RecurrentNet(RecurrentNet&&) noexcept = default;
    RecurrentNet& operator=(RecurrentNet&&) noexcept = default;

    /// `dropout_rng == nullptr` means inference mode.
    RowVector<T> forward(std::span<const std::int32_t> ids, std::size_t true_length, Rng* dropout_rng,
                         Trace& tr) const {
        const auto active = active_ids(ids, true_length);
        tr.ids.assign(active.begin(), active.end());
        const Matrix<T> emb = embed_.forward(tr.ids);
        Matrix<T> feats = conv_.forward(emb, tr.conv);
        feats = dropout_forward(feats, dims_.dropout, dropout_rng, tr.conv_drop);
        const Matrix<T> states = rnn_.forward(feats, tr.rnn);
        const RowVector<T> context = attn_.forward(states, tr.attn);
        tr.pooled = dropout_forward(Matrix<T>(context), dims_.dropout, dropout_rng, tr.head_drop);
        return head_.forward(tr.pooled).row(0);
    }

    void backward(const Trace& tr, const RowVector<T>& d_logits) {
        const Matrix<T> d_pooled = head_.backward(tr.pooled, Matrix<T>(d_logits));
        const Matrix<T> d_context = dropout_backward(d_pooled, tr.head_drop);
        const Matrix<T> d_states = attn_.backward(tr.attn, d_context.row(0));
        Matrix<T> d_feats = rnn_.backward(tr.rnn, d_states);
        d_feats = dropout_backward(d_feats, tr.conv_drop);
        const Matrix<T> d_emb = conv_.backward(tr.conv, d_feats);
        embed_.backward(tr.ids, d_emb);
    }

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    const RecurrentDims& dims() const { return dims_; }

private:
    RecurrentDims dims_;
    ParamStore<T> store_;
    Embedding<T> embed_;
    Conv1dRelu<T> conv_;
    BiLstm<T> rnn_;
    AdditiveAttention<T> attn_;
    Dense<T> head_;
};

struct TransformerDims {
    Eigen::Index vocab_size = 0;
    Eigen::Index max_positions = 256;
    Eigen::Index d_model = 64;
    Eigen::Index heads = 4;
    Eigen::Index ff_dim = 256;
    Eigen::Index layers = 2;
    double dropout = 0.1;
    double head_dropout = 0.1;
    Eigen::Index num_classes = 4;
};

/// Post-LayerNorm transformer encoder with learned positions; the output at
/// position 0 (the [CLS] slot) feeds the classification head.
template <class T>
class TransformerNet {
public:
    struct BlockTrace {
        typename SelfAttention<T>::Cache attn;
        DropoutMask<T> attn_drop;
        typename LayerNorm<T>::Cache ln1;
        typename FeedForward<T>::Cache ffn;
        DropoutMask<T> ffn_drop;
        typename LayerNorm<T>::Cache ln2;
    };
    struct Trace {
        std::vector<std::int32_t> ids;
        typename LayerNorm<T>::Cache embed_ln;
        DropoutMask<T> embed_drop;
        std::vector<BlockTrace> blocks;
        Eigen::Index length = 0;
        Matrix<T> pooled;
        DropoutMask<T> head_drop;
    };

    TransformerNet(const TransformerDims& dims, std::uint64_t seed) : dims_(dims) {
        Rng rng(seed);
        tokens_ = Embedding<T>(store_, "embeddings.token", dims.vocab_size, dims.d_model, 0.02, rng);
        positions_ = Embedding<T>(store_, "embeddings.position", dims.max_positions, dims.d_model, 0.02, rng);
        embed_ln_ = LayerNorm<T>(store_, "embeddings.norm", dims.d_model);
        for (Eigen::Index l = 0; l < dims.layers; ++l) {
            const std::string p = "encoder." + std::to_string(l);
            Block b;
            b.attn = SelfAttention<T>(store_, p + ".attention", dims.d_model, dims.heads, rng);
            b.ln1 = LayerNorm<T>(store_, p + ".attention_norm", dims.d_model);
            b.ffn = FeedForward<T>(store_, p + ".ffn", dims.d_model, dims.ff_dim, rng);
            b.ln2 = LayerNorm<T>(store_, p + ".output_norm", dims.d_model);
            blocks_.push_back(std::move(b));
        }
        head_ = Dense<T>(store_, "classifier", dims.d_model, dims.num_classes, rng);
    }

    TransformerNet(TransformerNet&&) noexcept = default;
    TransformerNet& operator=(TransformerNet&&) noexcept = default;

    RowVector<T> forward(std::span<const std::int32_t> ids, std::size_t true_length, Rng* dropout_rng,
                         Trace& tr) const {
        auto active = active_ids(ids, true_length);
        if (active.size() > static_cast<std::size_t>(dims_.max_positions))
            active = active.first(static_cast<std::size_t>(dims_.max_positions));
        tr.ids.assign(active.begin(), active.end());
        tr.length = static_cast<Eigen::Index>(tr.ids.size());

        std::vector<std::int32_t> pos(tr.ids.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int32_t>(i);
        Matrix<T> x = tokens_.forward(tr.ids) + positions_.forward(pos);
        x = embed_ln_.forward(x, tr.embed_ln);
        x = dropout_forward(x, dims_.dropout, dropout_rng, tr.embed_drop);

        tr.blocks.resize(blocks_.size());
        for (std::size_t l = 0; l < blocks_.size(); ++l) {
            const Block& b = blocks_[l];
            BlockTrace& bt = tr.blocks[l];
            Matrix<T> a = b.attn.forward(x, bt.attn);
            a = dropout_forward(a, dims_.dropout, dropout_rng, bt.attn_drop);
            const Matrix<T> x1 = b.ln1.forward(x + a, bt.ln1);
            Matrix<T> f = b.ffn.forward(x1, bt.ffn);
            f = dropout_forward(f, dims_.dropout, dropout_rng, bt.ffn_drop);
            x = b.ln2.forward(x1 + f, bt.ln2);
        }
        tr.pooled = dropout_forward(Matrix<T>(x.topRows(1)), dims_.head_dropout, dropout_rng, tr.head_drop);
        return head_.forward(tr.pooled).row(0);
    }

    void backward(const Trace& tr, const RowVector<T>& d_logits) {
        const Matrix<T> d_pooled = dropout_backward(head_.backward(tr.pooled, Matrix<T>(d_logits)), tr.head_drop);
        Matrix<T> dx = Matrix<T>::Zero(tr.length, dims_.d_model);
        dx.row(0) = d_pooled.row(0);
        for (std::size_t l = blocks_.size(); l-- > 0;) {
            const Block& b = blocks_[l];
            const BlockTrace& bt = tr.blocks[l];
            const Matrix<T> d_sum2 = b.ln2.backward(bt.ln2, dx);
            const Matrix<T> d_f = dropout_backward(d_sum2, bt.ffn_drop);
            const Matrix<T> d_x1 = d_sum2 + b.ffn.backward(bt.ffn, d_f);
            const Matrix<T> d_sum1 = b.ln1.backward(bt.ln1, d_x1);
            const Matrix<T> d_a = dropout_backward(d_sum1, bt.attn_drop);
            dx = d_sum1 + b.attn.backward(bt.attn, d_a);
        }
        dx = dropout_backward(dx, tr.embed_drop);
        dx = embed_ln_.backward(tr.embed_ln, dx);
        tokens_.backward(tr.ids, dx);
        std::vector<std::int32_t> pos(tr.ids.size());
        for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<std::int32_t>(i);
        positions_.backward(pos, dx);
    }

    ParamStore<T>& params() { return store_; }
    const ParamStore<T>& params() const { return store_; }
    const TransformerDims& dims() const { return dims_; }

private:
    struct Block {
        SelfAttention<T> attn;
        LayerNorm<T> ln1;
        FeedForward<T> ffn;
        LayerNorm<T> ln2;
    };

    TransformerDims dims_;
    ParamStore<T> store_;
    Embedding<T> tokens_;
    Embedding<T> positions_;
    LayerNorm<T> embed_ln_;
    std::vector<Block> blocks_;
    Dense<T> head_;
};

}  // namespace solvuln::nn
