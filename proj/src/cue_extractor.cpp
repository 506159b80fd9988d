#include "stn/cue_extractor.hpp"

#include <cmath>
#include <stdexcept>

#include "stn/ops.hpp"

namespace stn {

ContextMode parse_context_mode(std::string_view name) {
    if (name == "paper_literal") return ContextMode::paper_literal;
    if (name == "sigmoid_mean") return ContextMode::sigmoid_mean;
    throw std::invalid_argument("unknown context mode '" + std::string(name) +
                                "' (expected paper_literal or sigmoid_mean)");
}

std::string to_string(ContextMode mode) {
    switch (mode) {
        case ContextMode::paper_literal: return "paper_literal";
        case ContextMode::sigmoid_mean: return "sigmoid_mean";
    }
    throw std::invalid_argument("unknown context mode");
}

CueExtractorState CueExtractorState::init(std::size_t d_model, Rng& rng) {
    return {normal_param({d_model}, 0.02, rng)};
}

void CueExtractorState::collect(std::vector<Parameter>& out, const std::string& prefix) const {
    out.push_back({prefix + "w_att", w_att});
}

Tensor cue_scores(const Tensor& H, const CueExtractorState& state) {
    const std::size_t d = state.w_att.numel();
    if (H.rank() != 3 || H.dim(2) != d) {
        throw std::invalid_argument("cue_scores: H " + shape_str(H.shape()) + " does not match w_att " +
                                    shape_str(state.w_att.shape()));
    }
    Tensor s = ops::matmul(H, ops::reshape(state.w_att, {d, 1}));
    return ops::reshape(s, {H.dim(0), H.dim(1)});
}

Tensor cue_attend(const Tensor& scores, const Tensor& mask) {
    if (scores.rank() != 2) throw std::invalid_argument("cue_attend: scores must be [B, L], got " + shape_str(scores.shape()));
    return ops::masked_softmax(scores, mask);
}

Tensor weighted_embedding(const Tensor& A, const Tensor& H) {
    if (A.rank() != 2 || H.rank() != 3 || A.dim(0) != H.dim(0) || A.dim(1) != H.dim(1)) {
        throw std::invalid_argument("weighted_embedding: incompatible shapes " + shape_str(A.shape()) + " and " +
                                    shape_str(H.shape()));
    }
    const std::size_t b = A.dim(0), len = A.dim(1), d = H.dim(2);
    Tensor e = ops::bmm(ops::reshape(A, {b, 1, len}), H);
    return ops::reshape(e, {b, d});
}

Tensor contextual_weight(const Tensor& scores, const Tensor& A, const Tensor& mask, ContextMode mode) {
    if (scores.shape() != mask.shape() || A.shape() != mask.shape() || mask.rank() != 2) {
        throw std::invalid_argument("contextual_weight: shapes " + shape_str(scores.shape()) + ", " +
                                    shape_str(A.shape()) + " and " + shape_str(mask.shape()) + " must agree");
    }
    const std::size_t b = mask.dim(0), len = mask.dim(1);
    const auto s = scores.values();
    const auto a = A.values();
    const auto m = mask.values();
    std::vector<double> w(b, 0.0);
    for (std::size_t r = 0; r < b; ++r) {
        double total = 0.0;
        std::size_t valid = 0;
        for (std::size_t i = 0; i < len; ++i) {
            if (m[r * len + i] == 0.0) continue;
            ++valid;
            switch (mode) {
                case ContextMode::paper_literal: total += a[r * len + i]; break;
                case ContextMode::sigmoid_mean: total += 1.0 / (1.0 + std::exp(-s[r * len + i])); break;
                default: throw std::invalid_argument("contextual_weight: unknown mode");
            }
        }
        if (valid == 0) throw std::invalid_argument("contextual_weight: row " + std::to_string(r) + " is fully masked");
        w[r] = mode == ContextMode::sigmoid_mean ? total / static_cast<double>(valid) : total;
    }
    return Tensor({b}, std::move(w));
}

}  // namespace stn
