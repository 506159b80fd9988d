#pragma once

#include <string>
#include <vector>

#include "stn/batch.hpp"
#include "stn/tensor.hpp"

namespace stn {

struct EncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t max_len = 128;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t ffn_dim = 256;
    double dropout = 0.3;

    void validate() const;
};

struct EncoderLayer {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln1_gamma, ln1_beta;
    Tensor w1, b1, w2, b2;
    Tensor ln2_gamma, ln2_beta;
};

/// Token and learned position embeddings plus post-LN transformer blocks.
struct EncoderState {
    EncoderConfig config;
    Tensor token_embedding;     // [vocab_size, D], pad row zero at init
    Tensor position_embedding;  // [max_len, D]
    Tensor emb_ln_gamma, emb_ln_beta;
    std::vector<EncoderLayer> layers;

    static EncoderState init(const EncoderConfig& config, Rng& rng);
    void collect(std::vector<Parameter>& out, const std::string& prefix = "encoder.") const;
};

/// Contextual embeddings H [B, L, D]. Valid positions never attend to masked
/// ones; dropout only when training.
Tensor encoder_forward(const TokenBatch& batch, const EncoderState& state, bool training, Rng& rng);

}  // namespace stn
