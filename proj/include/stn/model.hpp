#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stn/batch.hpp"
#include "stn/cue_extractor.hpp"
#include "stn/encoder.hpp"
#include "stn/head.hpp"
#include "stn/phrase_encoder.hpp"

namespace stn {

/// learned: attention from the cue extractor. uniform: A spread evenly over
/// valid tokens and W_context fixed to 1.
enum class CueMode { learned, uniform };
/// bigru: G_final from the Bi-GRU. mean_pool: mean of H over valid tokens,
/// mapped to 2Hg by a learned linear layer.
enum class PhraseMode { bigru, mean_pool };

CueMode parse_cue_mode(std::string_view name);
std::string to_string(CueMode mode);
PhraseMode parse_phrase_mode(std::string_view name);
std::string to_string(PhraseMode mode);

struct ModelConfig {
    EncoderConfig encoder;
    std::size_t gru_hidden = 32;
    std::size_t head_hidden = 32;
    double head_dropout = 0.3;
    bool fuse_cue_embedding = false;
    ContextMode context_mode = ContextMode::sigmoid_mean;
    CueMode cue_mode = CueMode::learned;
    PhraseMode phrase_mode = PhraseMode::bigru;

    void validate() const;
};

struct ModelState {
    ModelConfig config;
    EncoderState encoder;
    CueExtractorState cue;
    GruState gru;
    Tensor pool_w, pool_b;  // mean_pool only: [D, 2Hg], [2Hg]
    HeadState head;

    /// Draws in a fixed order: encoder, cue, gru (or pool), head.
    static ModelState init(const ModelConfig& config, Rng& rng);
    /// Every trainable tensor with a stable dotted name, in a fixed order.
    std::vector<Parameter> parameters() const;
};

struct ForwardOutput {
    Tensor mask;       // [B, L]
    Tensor H;          // [B, L, D]
    Tensor scores;     // [B, L], undefined in uniform cue mode
    Tensor A;          // [B, L]
    Tensor E;          // [B, D]
    Tensor G;          // [B, L, 2Hg], undefined in mean_pool mode
    Tensor g_final;    // [B, 2Hg]
    Tensor w_context;  // [B], detached
    Tensor logits;     // [B, 3]
    Tensor probs;      // [B, 3]
};

ForwardOutput model_forward(const ModelState& model, const TokenBatch& batch, bool training, Rng& rng);

}  // namespace stn
