#pragma once

#include <string>
#include <vector>

#include "stn/tensor.hpp"

namespace stn {

inline constexpr std::size_t kNumClasses = 3;

struct HeadState {
    std::size_t in_dim = 0;
    std::size_t hidden = 0;
    Tensor w1, b1;  // [in_dim, Hc], [Hc]
    Tensor w2, b2;  // [Hc, 3], [3]

    static HeadState init(std::size_t in_dim, std::size_t hidden, Rng& rng);
    void collect(std::vector<Parameter>& out, const std::string& prefix = "head.") const;
};

/// z = relu(x W1 + b1) W2 + b2 where x is g_final, or [g_final, e] when fuse
/// is set. `e` must be defined exactly when fuse is set. Dropout applies to
/// the hidden activation while training.
Tensor head_logits(const Tensor& g_final, const Tensor& e, const HeadState& state, bool fuse, double dropout,
                   bool training, Rng& rng);

/// Row-wise softmax of the logits.
Tensor class_probs(const Tensor& logits);

}  // namespace stn
