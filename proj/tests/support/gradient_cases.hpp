#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "stn/batch.hpp"
#include "stn/cue_extractor.hpp"
#include "stn/encoder.hpp"
#include "stn/head.hpp"
#include "stn/losses.hpp"
#include "stn/phrase_encoder.hpp"

namespace stn::testing {

inline Tensor two_row_mask(std::size_t len, std::size_t second_valid) {
    std::vector<double> m(2 * len, 0.0);
    for (std::size_t t = 0; t < len; ++t) m[t] = 1.0;
    for (std::size_t t = 0; t < second_valid; ++t) m[len + t] = 1.0;
    return Tensor({2, len}, std::move(m));
}

inline std::vector<std::pair<std::string, Tensor>> named(const std::vector<Parameter>& params) {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& p : params) out.emplace_back(p.name, p.tensor);
    return out;
}

/// One transformer block on a padded batch of two posts; dropout active with
/// a reseeded generator so every evaluation draws the same mask.
inline GradCheckResult encoder_block_case(std::uint64_t seed, bool with_dropout = true) {
    Rng rng(seed);
    EncoderConfig cfg;
    cfg.vocab_size = 11;
    cfg.max_len = 8;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.ffn_dim = 12;
    cfg.dropout = with_dropout ? 0.3 : 0.0;
    auto state = EncoderState::init(cfg, rng);
    // Larger weights than the 0.02 init so every path carries a visible gradient.
    std::vector<Parameter> params;
    state.collect(params);
    for (auto& p : params) {
        auto v = p.tensor.mutable_values();
        std::normal_distribution<double> n(0.0, 0.5);
        for (auto& x : v) x += n(rng);
    }
    TokenBatch batch;
    batch.batch = 2;
    batch.length = 5;
    batch.ids = {4, 7, 9, 5, 10, 6, 8, 4, 0, 0};
    batch.mask = {1, 1, 1, 1, 1, 1, 1, 1, 0, 0};
    Tensor H0 = encoder_forward(batch, state, false, rng);
    const Tensor w = projection_like(H0, rng);
    auto f = [&] {
        Rng drop(seed * 7919 + 1);
        return project(encoder_forward(batch, state, with_dropout, drop), w);
    };
    // The key bias shifts each softmax row by a constant, so its true gradient
    // is exactly zero and a relative error on it would only measure rounding.
    std::vector<Parameter> checked;
    for (const auto& p : params) {
        if (!p.name.ends_with(".bk")) checked.push_back(p);
    }
    return grad_check(f, named(checked));
}

inline GradCheckResult cue_extractor_case(std::uint64_t seed) {
    Rng rng(seed);
    Tensor H = random_tensor({2, 5, 6}, rng);
    auto state = CueExtractorState::init(6, rng);
    {
        auto v = state.w_att.mutable_values();
        std::normal_distribution<double> n(0.0, 0.7);
        for (auto& x : v) x = n(rng);
    }
    const Tensor mask = two_row_mask(5, 3);
    const Tensor wa = random_tensor({2, 5}, rng, 1.0, false);
    const Tensor we = random_tensor({2, 6}, rng, 1.0, false);
    auto f = [&] {
        Tensor A = cue_attend(cue_scores(H, state), mask);
        return ops::add(project(A, wa), project(weighted_embedding(A, H), we));
    };
    return grad_check(f, {{"H", H}, {"w_att", state.w_att}});
}

/// Bi-GRU over four steps, second row padded after two; checks G and the
/// final representation together.
inline GradCheckResult bigru_case(std::uint64_t seed) {
    Rng rng(seed);
    Tensor H = random_tensor({2, 4, 5}, rng);
    auto state = GruState::init(5, 3, rng);
    std::vector<Parameter> params;
    state.collect(params);
    for (auto& p : params) {
        auto v = p.tensor.mutable_values();
        std::normal_distribution<double> n(0.0, 0.6);
        for (auto& x : v) x = n(rng);
    }
    const Tensor mask = two_row_mask(4, 2);
    const Tensor wg = random_tensor({2, 4, 6}, rng, 1.0, false);
    const Tensor wf = random_tensor({2, 6}, rng, 1.0, false);
    auto f = [&] {
        Tensor G = bigru(H, mask, state);
        return ops::add(project(G, wg), project(final_repr(G, mask), wf));
    };
    auto inputs = named(params);
    inputs.emplace_back("H", H);
    return grad_check(f, inputs);
}

inline GradCheckResult head_case(std::uint64_t seed) {
    Rng rng(seed);
    Tensor g = random_tensor({3, 6}, rng);
    Tensor e = random_tensor({3, 4}, rng);
    auto state = HeadState::init(10, 5, rng);
    std::vector<Parameter> params;
    state.collect(params);
    for (auto& p : params) {
        auto v = p.tensor.mutable_values();
        std::normal_distribution<double> n(0.0, 0.6);
        for (auto& x : v) x = n(rng);
    }
    const Tensor w = random_tensor({3, 3}, rng, 1.0, false);
    auto f = [&] {
        Rng drop(seed + 99);
        return project(class_probs(head_logits(g, e, state, true, 0.3, true, drop)), w);
    };
    auto inputs = named(params);
    inputs.emplace_back("g_final", g);
    inputs.emplace_back("e", e);
    return grad_check(f, inputs);
}

inline const std::vector<Label>& case_labels() {
    static const std::vector<Label> y = {1, 2, 3, 2, 1};
    return y;
}

inline GradCheckResult focal_case(std::uint64_t seed, bool all_class_sum = false) {
    Rng rng(seed);
    Tensor logits = random_tensor({5, 3}, rng, 1.5);
    const ClassWeights alpha{2.0, 0.5, 1.5};
    auto f = [&] { return focal_loss(ops::softmax(logits), case_labels(), alpha, 2.0, all_class_sum); };
    return grad_check(f, {{"logits", logits}});
}

/// W_context is computed once from fixed scores and held constant, matching
/// the stop-gradient contract; the check is with respect to the logits.
inline GradCheckResult cafl_case(std::uint64_t seed) {
    Rng rng(seed);
    Tensor logits = random_tensor({5, 3}, rng, 1.5);
    const Tensor scores = random_tensor({5, 4}, rng, 1.0, false);
    std::vector<double> m(20, 1.0);
    m[3] = m[7] = m[6] = 0.0;
    const Tensor mask({5, 4}, m);
    const Tensor A = cue_attend(scores, mask);
    const ClassWeights alpha{2.0, 0.5, 1.5};
    auto f = [&] {
        return cafl_loss(ops::softmax(logits), case_labels(), scores, A, mask, alpha, 2.0, ContextMode::sigmoid_mean);
    };
    return grad_check(f, {{"logits", logits}});
}

}  // namespace stn::testing
