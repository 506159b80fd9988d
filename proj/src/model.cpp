#include "stn/model.hpp"

#include <stdexcept>

#include "stn/ops.hpp"

namespace stn {

CueMode parse_cue_mode(std::string_view name) {
    if (name == "learned") return CueMode::learned;
    if (name == "uniform") return CueMode::uniform;
    throw std::invalid_argument("unknown cue mode '" + std::string(name) + "' (expected learned or uniform)");
}

std::string to_string(CueMode mode) { return mode == CueMode::learned ? "learned" : "uniform"; }

PhraseMode parse_phrase_mode(std::string_view name) {
    if (name == "bigru") return PhraseMode::bigru;
    if (name == "mean_pool") return PhraseMode::mean_pool;
    throw std::invalid_argument("unknown phrase mode '" + std::string(name) + "' (expected bigru or mean_pool)");
}

std::string to_string(PhraseMode mode) { return mode == PhraseMode::bigru ? "bigru" : "mean_pool"; }

void ModelConfig::validate() const {
    encoder.validate();
    if (gru_hidden == 0) throw std::invalid_argument("phrase.hidden must be positive");
    if (head_hidden == 0) throw std::invalid_argument("head.hidden must be positive");
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) throw std::invalid_argument("head.dropout must lie in [0, 1)");
}

ModelState ModelState::init(const ModelConfig& config, Rng& rng) {
    config.validate();
    ModelState m;
    m.config = config;
    const std::size_t d = config.encoder.d_model, hg = config.gru_hidden;
    m.encoder = EncoderState::init(config.encoder, rng);
    m.cue = CueExtractorState::init(d, rng);
    if (config.phrase_mode == PhraseMode::bigru) {
        m.gru = GruState::init(d, hg, rng);
    } else {
        m.pool_w = normal_param({d, 2 * hg}, 0.02, rng);
        m.pool_b = zeros_param({2 * hg});
    }
    m.head = HeadState::init(2 * hg + (config.fuse_cue_embedding ? d : 0), config.head_hidden, rng);
    return m;
}

std::vector<Parameter> ModelState::parameters() const {
    std::vector<Parameter> out;
    encoder.collect(out);
    cue.collect(out);
    if (config.phrase_mode == PhraseMode::bigru) {
        gru.collect(out);
    } else {
        out.push_back({"pool.w", pool_w});
        out.push_back({"pool.b", pool_b});
    }
    head.collect(out);
    return out;
}

namespace {

Tensor uniform_attention(const TokenBatch& batch) {
    std::vector<double> a(batch.mask);
    for (std::size_t r = 0; r < batch.batch; ++r) {
        const double n = static_cast<double>(batch.valid_len(r));
        for (std::size_t t = 0; t < batch.length; ++t) a[r * batch.length + t] /= n;
    }
    return Tensor({batch.batch, batch.length}, std::move(a));
}

}  // namespace

ForwardOutput model_forward(const ModelState& model, const TokenBatch& batch, bool training, Rng& rng) {
    const auto& cfg = model.config;
    ForwardOutput out;
    out.mask = batch.mask_tensor();
    out.H = encoder_forward(batch, model.encoder, training, rng);
    if (cfg.cue_mode == CueMode::learned) {
        out.scores = cue_scores(out.H, model.cue);
        out.A = cue_attend(out.scores, out.mask);
        out.w_context = contextual_weight(out.scores, out.A, out.mask, cfg.context_mode);
    } else {
        out.A = uniform_attention(batch);
        out.w_context = Tensor({batch.batch}, 1.0);
    }
    out.E = weighted_embedding(out.A, out.H);
    if (cfg.phrase_mode == PhraseMode::bigru) {
        out.G = bigru(out.H, out.mask, model.gru);
        out.g_final = final_repr(out.G, out.mask);
    } else {
        const Tensor pooled = weighted_embedding(uniform_attention(batch), out.H);
        out.g_final = ops::add(ops::matmul(pooled, model.pool_w), model.pool_b);
    }
    out.logits = head_logits(out.g_final, cfg.fuse_cue_embedding ? out.E : Tensor{}, model.head,
                             cfg.fuse_cue_embedding, cfg.head_dropout, training, rng);
    out.probs = class_probs(out.logits);
    return out;
}

}  // namespace stn
