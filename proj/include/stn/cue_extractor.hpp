#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stn/tensor.hpp"

namespace stn {

/// How the per-sample loss weight is derived from the cue attention.
///   paper_literal: sum of attention weights over valid tokens (always 1).
///   sigmoid_mean:  mean of sigmoid(raw score) over valid tokens, in (0, 1).
enum class ContextMode { paper_literal, sigmoid_mean };

ContextMode parse_context_mode(std::string_view name);
std::string to_string(ContextMode mode);

struct CueExtractorState {
    Tensor w_att;  // [D]

    static CueExtractorState init(std::size_t d_model, Rng& rng);
    void collect(std::vector<Parameter>& out, const std::string& prefix = "cue.") const;
};

/// s[b, i] = <w_att, H[b, i, :]> for every position, masked or not.
Tensor cue_scores(const Tensor& H, const CueExtractorState& state);

/// Row-wise masked softmax of the scores.
Tensor cue_attend(const Tensor& scores, const Tensor& mask);

/// E[b] = sum_i A[b, i] H[b, i, :]
Tensor weighted_embedding(const Tensor& A, const Tensor& H);

/// Per-sample weight [B], detached from the graph.
Tensor contextual_weight(const Tensor& scores, const Tensor& A, const Tensor& mask, ContextMode mode);

}  // namespace stn
