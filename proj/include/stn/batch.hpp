#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stn/tensor.hpp"
#include "stn/tokenizer.hpp"

namespace stn {

/// B posts laid out row-major as [B, L] ids and a 0/1 mask.
struct TokenBatch {
    std::size_t batch = 0;
    std::size_t length = 0;
    std::vector<std::int32_t> ids;
    std::vector<double> mask;

    Tensor mask_tensor() const { return Tensor({batch, length}, mask); }
    std::size_t valid_len(std::size_t row) const;
};

/// Stacks the selected posts. With trim, the length is cut to the longest
/// valid prefix in the selection; masking makes this exact.
TokenBatch make_batch(std::span<const TokenizedPost> posts, std::span<const std::size_t> rows, bool trim = true);
TokenBatch make_batch(std::span<const TokenizedPost> posts, bool trim = true);

}  // namespace stn
