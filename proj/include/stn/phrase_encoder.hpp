#pragma once

#include <string>
#include <vector>

#include "stn/tensor.hpp"

namespace stn {

/// One GRU direction, row-vector convention (x W + h U + b).
struct GruDirection {
    Tensor w_z, w_r, w_h;  // [D, Hg]
    Tensor u_z, u_r, u_h;  // [Hg, Hg]
    Tensor b_z, b_r, b_h;  // [Hg]
};

struct GruState {
    std::size_t input_dim = 0;
    std::size_t hidden = 0;
    GruDirection forward;
    GruDirection backward;

    static GruState init(std::size_t input_dim, std::size_t hidden, Rng& rng);
    void collect(std::vector<Parameter>& out, const std::string& prefix = "gru.") const;
};

/// z = sigma(x W_z + h U_z + b_z), r = sigma(x W_r + h U_r + b_r),
/// c = tanh(x W_h + (r * h) U_h + b_h), h' = (1 - z) * h + z * c.
/// x is [B, D] or [D]; h_prev matches with Hg in place of D.
Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruDirection& dir);

/// G [B, L, 2Hg]: forward states over valid positions left to right, backward
/// states right to left, both starting from zero. Masked positions are zero
/// and carry the state through unchanged.
Tensor bigru(const Tensor& H, const Tensor& mask, const GruState& state);

/// [forward state at the last valid position, backward state at the first
/// valid position] per row -> [B, 2Hg].
Tensor final_repr(const Tensor& G, const Tensor& mask);

}  // namespace stn
