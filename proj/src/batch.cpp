#include "stn/batch.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace stn {

std::size_t TokenBatch::valid_len(std::size_t row) const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < length; ++t) n += mask[row * length + t] != 0.0 ? 1 : 0;
    return n;
}

TokenBatch make_batch(std::span<const TokenizedPost> posts, std::span<const std::size_t> rows, bool trim) {
    if (rows.empty()) throw std::invalid_argument("make_batch: empty selection");
    std::size_t full = posts[rows[0]].ids.size();
    std::size_t longest = 0;
    for (auto r : rows) {
        const auto& p = posts[r];
        if (p.ids.size() != full || p.mask.size() != full) throw std::invalid_argument("make_batch: ragged posts");
        longest = std::max(longest, p.valid_len);
    }
    TokenBatch b;
    b.batch = rows.size();
    b.length = trim ? std::max<std::size_t>(longest, 1) : full;
    b.ids.resize(b.batch * b.length);
    b.mask.resize(b.batch * b.length);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& p = posts[rows[i]];
        for (std::size_t t = 0; t < b.length; ++t) {
            b.ids[i * b.length + t] = p.ids[t];
            b.mask[i * b.length + t] = p.mask[t];
        }
    }
    return b;
}

TokenBatch make_batch(std::span<const TokenizedPost> posts, bool trim) {
    std::vector<std::size_t> rows(posts.size());
    std::iota(rows.begin(), rows.end(), 0);
    return make_batch(posts, rows, trim);
}

}  // namespace stn
