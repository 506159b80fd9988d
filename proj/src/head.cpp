#include "stn/head.hpp"

#include <stdexcept>

#include "stn/ops.hpp"

namespace stn {

HeadState HeadState::init(std::size_t in_dim, std::size_t hidden, Rng& rng) {
    if (in_dim == 0 || hidden == 0) throw std::invalid_argument("head: sizes must be positive");
    HeadState s;
    s.in_dim = in_dim;
    s.hidden = hidden;
    s.w1 = normal_param({in_dim, hidden}, 0.02, rng);
    s.b1 = zeros_param({hidden});
    s.w2 = normal_param({hidden, kNumClasses}, 0.02, rng);
    s.b2 = zeros_param({kNumClasses});
    return s;
}

void HeadState::collect(std::vector<Parameter>& out, const std::string& prefix) const {
    out.push_back({prefix + "w1", w1});
    out.push_back({prefix + "b1", b1});
    out.push_back({prefix + "w2", w2});
    out.push_back({prefix + "b2", b2});
}

Tensor head_logits(const Tensor& g_final, const Tensor& e, const HeadState& state, bool fuse, double dropout,
                   bool training, Rng& rng) {
    if (fuse != e.defined()) {
        throw std::invalid_argument(fuse ? "head: fusion enabled but no cue embedding given"
                                         : "head: cue embedding given but fusion disabled");
    }
    const Tensor input = fuse ? ops::concat({g_final, e}, 1) : g_final;
    if (input.rank() != 2 || input.dim(1) != state.in_dim) {
        throw std::invalid_argument("head: input " + shape_str(input.shape()) + " does not match in_dim " +
                                    std::to_string(state.in_dim));
    }
    Tensor hidden = ops::relu(ops::add(ops::matmul(input, state.w1), state.b1));
    hidden = ops::dropout(hidden, dropout, training, rng);
    return ops::add(ops::matmul(hidden, state.w2), state.b2);
}

Tensor class_probs(const Tensor& logits) {
    if (logits.rank() != 2 || logits.dim(1) != kNumClasses) {
        throw std::invalid_argument("class_probs: logits must be [B, 3], got " + shape_str(logits.shape()));
    }
    return ops::softmax(logits);
}

}  // namespace stn
