#include "stn/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "stn/ops.hpp"

namespace stn {

namespace {
constexpr double kInitStd = 0.02;
}

void EncoderConfig::validate() const {
    if (vocab_size == 0 || max_len == 0 || d_model == 0 || n_heads == 0 || n_layers == 0 || ffn_dim == 0) {
        throw std::invalid_argument("encoder: all sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("encoder: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                                    std::to_string(n_heads));
    }
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder: dropout must lie in [0, 1)");
}

EncoderState EncoderState::init(const EncoderConfig& config, Rng& rng) {
    config.validate();
    const std::size_t d = config.d_model;
    EncoderState s;
    s.config = config;
    s.token_embedding = normal_param({config.vocab_size, d}, kInitStd, rng);
    auto pad_row = s.token_embedding.mutable_values().subspan(0, d);
    std::fill(pad_row.begin(), pad_row.end(), 0.0);
    s.position_embedding = normal_param({config.max_len, d}, kInitStd, rng);
    s.emb_ln_gamma = ones_param({d});
    s.emb_ln_beta = zeros_param({d});
    for (std::size_t i = 0; i < config.n_layers; ++i) {
        EncoderLayer l;
        l.wq = normal_param({d, d}, kInitStd, rng);
        l.bq = zeros_param({d});
        l.wk = normal_param({d, d}, kInitStd, rng);
        l.bk = zeros_param({d});
        l.wv = normal_param({d, d}, kInitStd, rng);
        l.bv = zeros_param({d});
        l.wo = normal_param({d, d}, kInitStd, rng);
        l.bo = zeros_param({d});
        l.ln1_gamma = ones_param({d});
        l.ln1_beta = zeros_param({d});
        l.w1 = normal_param({d, config.ffn_dim}, kInitStd, rng);
        l.b1 = zeros_param({config.ffn_dim});
        l.w2 = normal_param({config.ffn_dim, d}, kInitStd, rng);
        l.b2 = zeros_param({d});
        l.ln2_gamma = ones_param({d});
        l.ln2_beta = zeros_param({d});
        s.layers.push_back(std::move(l));
    }
    return s;
}

void EncoderState::collect(std::vector<Parameter>& out, const std::string& prefix) const {
    out.push_back({prefix + "token_embedding", token_embedding});
    out.push_back({prefix + "position_embedding", position_embedding});
    out.push_back({prefix + "emb_ln.gamma", emb_ln_gamma});
    out.push_back({prefix + "emb_ln.beta", emb_ln_beta});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::string p = prefix + "layer" + std::to_string(i) + ".";
        out.push_back({p + "attn.wq", l.wq});
        out.push_back({p + "attn.bq", l.bq});
        out.push_back({p + "attn.wk", l.wk});
        out.push_back({p + "attn.bk", l.bk});
        out.push_back({p + "attn.wv", l.wv});
        out.push_back({p + "attn.bv", l.bv});
        out.push_back({p + "attn.wo", l.wo});
        out.push_back({p + "attn.bo", l.bo});
        out.push_back({p + "ln1.gamma", l.ln1_gamma});
        out.push_back({p + "ln1.beta", l.ln1_beta});
        out.push_back({p + "ffn.w1", l.w1});
        out.push_back({p + "ffn.b1", l.b1});
        out.push_back({p + "ffn.w2", l.w2});
        out.push_back({p + "ffn.b2", l.b2});
        out.push_back({p + "ln2.gamma", l.ln2_gamma});
        out.push_back({p + "ln2.beta", l.ln2_beta});
    }
}

namespace {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return ops::add(ops::matmul(x, w), b); }

// Multi-head self-attention over x [B, L, D]; key_mask is [B*H, L, L].
Tensor self_attention(const Tensor& x, const EncoderLayer& l, const Tensor& key_mask, std::size_t heads) {
    const std::size_t d = x.dim(2);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d / heads));
    Tensor q = ops::split_heads(linear(x, l.wq, l.bq), heads);
    Tensor k = ops::split_heads(linear(x, l.wk, l.bk), heads);
    Tensor v = ops::split_heads(linear(x, l.wv, l.bv), heads);
    Tensor scores = ops::scale(ops::bmm(q, k, /*transpose_b=*/true), scale);
    Tensor probs = ops::masked_softmax(scores, key_mask);
    return linear(ops::merge_heads(ops::bmm(probs, v), heads), l.wo, l.bo);
}

}  // namespace

Tensor encoder_forward(const TokenBatch& batch, const EncoderState& state, bool training, Rng& rng) {
    const auto& cfg = state.config;
    const std::size_t b = batch.batch, len = batch.length, heads = cfg.n_heads;
    if (len > cfg.max_len) {
        throw std::invalid_argument("encoder: sequence length " + std::to_string(len) + " exceeds max_len " +
                                    std::to_string(cfg.max_len));
    }
    for (std::size_t r = 0; r < b; ++r) {
        if (batch.valid_len(r) == 0) throw std::invalid_argument("encoder: row " + std::to_string(r) + " is fully masked");
    }

    std::vector<std::int32_t> positions(len);
    for (std::size_t t = 0; t < len; ++t) positions[t] = static_cast<std::int32_t>(t);
    Tensor tok = ops::embedding(state.token_embedding, batch.ids, {b, len});
    Tensor pos = ops::embedding(state.position_embedding, positions, {len});
    Tensor x = ops::layer_norm(ops::add(tok, pos), state.emb_ln_gamma, state.emb_ln_beta);
    x = ops::dropout(x, cfg.dropout, training, rng);

    // key_mask[b*H + h, i, j] = mask[b, j]
    std::vector<double> km(b * heads * len * len);
    for (std::size_t r = 0; r < b; ++r) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < len; ++i) {
                double* row = km.data() + ((r * heads + h) * len + i) * len;
                for (std::size_t j = 0; j < len; ++j) row[j] = batch.mask[r * len + j];
            }
        }
    }
    const Tensor key_mask({b * heads, len, len}, std::move(km));

    for (const auto& l : state.layers) {
        Tensor attn = ops::dropout(self_attention(x, l, key_mask, heads), cfg.dropout, training, rng);
        x = ops::layer_norm(ops::add(x, attn), l.ln1_gamma, l.ln1_beta);
        Tensor ffn = linear(ops::gelu(linear(x, l.w1, l.b1)), l.w2, l.b2);
        ffn = ops::dropout(ffn, cfg.dropout, training, rng);
        x = ops::layer_norm(ops::add(x, ffn), l.ln2_gamma, l.ln2_beta);
    }
    return x;
}

}  // namespace stn
