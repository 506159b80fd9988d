#include "stn/phrase_encoder.hpp"

#include <stdexcept>

#include "stn/ops.hpp"

namespace stn {

namespace {

constexpr double kInitStd = 0.02;

GruDirection init_direction(std::size_t d, std::size_t hg, Rng& rng) {
    GruDirection g;
    g.w_z = normal_param({d, hg}, kInitStd, rng);
    g.w_r = normal_param({d, hg}, kInitStd, rng);
    g.w_h = normal_param({d, hg}, kInitStd, rng);
    g.u_z = normal_param({hg, hg}, kInitStd, rng);
    g.u_r = normal_param({hg, hg}, kInitStd, rng);
    g.u_h = normal_param({hg, hg}, kInitStd, rng);
    g.b_z = zeros_param({hg});
    g.b_r = zeros_param({hg});
    g.b_h = zeros_param({hg});
    return g;
}

void collect_direction(const GruDirection& g, std::vector<Parameter>& out, const std::string& p) {
    out.push_back({p + "w_z", g.w_z});
    out.push_back({p + "w_r", g.w_r});
    out.push_back({p + "w_h", g.w_h});
    out.push_back({p + "u_z", g.u_z});
    out.push_back({p + "u_r", g.u_r});
    out.push_back({p + "u_h", g.u_h});
    out.push_back({p + "b_z", g.b_z});
    out.push_back({p + "b_r", g.b_r});
    out.push_back({p + "b_h", g.b_h});
}

// Recurrent half of the cell; xz/xr/xh already hold x W + b.
Tensor gru_step(const Tensor& xz, const Tensor& xr, const Tensor& xh, const Tensor& h, const GruDirection& dir) {
    Tensor z = ops::sigmoid(ops::add(xz, ops::matmul(h, dir.u_z)));
    Tensor r = ops::sigmoid(ops::add(xr, ops::matmul(h, dir.u_r)));
    Tensor c = ops::tanh(ops::add(xh, ops::matmul(ops::mul(r, h), dir.u_h)));
    Tensor keep = ops::add_scalar(ops::scale(z, -1.0), 1.0);
    return ops::add(ops::mul(keep, h), ops::mul(z, c));
}

// mask[:, t] (or 1 - mask[:, t]) repeated across width -> [B, width].
Tensor column_mask(std::span<const double> mask, std::size_t len, std::size_t t, std::size_t width, bool invert) {
    const std::size_t b = mask.size() / len;
    std::vector<double> v(b * width);
    for (std::size_t r = 0; r < b; ++r) {
        const double m = mask[r * len + t];
        std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(r * width), width, invert ? 1.0 - m : m);
    }
    return Tensor({b, width}, std::move(v));
}

void check_mask(const Tensor& mask, std::size_t b, std::size_t len, const char* op) {
    if (mask.shape() != Shape{b, len}) {
        throw std::invalid_argument(std::string(op) + ": mask " + shape_str(mask.shape()) + " does not match [" +
                                    std::to_string(b) + ", " + std::to_string(len) + "]");
    }
    const auto m = mask.values();
    for (std::size_t r = 0; r < b; ++r) {
        bool any = false;
        for (std::size_t t = 0; t < len; ++t) {
            const double v = m[r * len + t];
            if (v != 0.0 && v != 1.0) throw std::invalid_argument(std::string(op) + ": mask values must be 0 or 1");
            any = any || v == 1.0;
        }
        if (!any) throw std::invalid_argument(std::string(op) + ": row " + std::to_string(r) + " is fully masked");
    }
}

}  // namespace

GruState GruState::init(std::size_t input_dim, std::size_t hidden, Rng& rng) {
    if (input_dim == 0 || hidden == 0) throw std::invalid_argument("gru: sizes must be positive");
    GruState s;
    s.input_dim = input_dim;
    s.hidden = hidden;
    s.forward = init_direction(input_dim, hidden, rng);
    s.backward = init_direction(input_dim, hidden, rng);
    return s;
}

void GruState::collect(std::vector<Parameter>& out, const std::string& prefix) const {
    collect_direction(forward, out, prefix + "fwd.");
    collect_direction(backward, out, prefix + "bwd.");
}

Tensor gru_cell(const Tensor& x, const Tensor& h_prev, const GruDirection& dir) {
    const std::size_t d = dir.w_z.dim(0), hg = dir.w_z.dim(1);
    const bool vector_input = x.rank() == 1;
    const Tensor xb = vector_input ? ops::reshape(x, {1, x.dim(0)}) : x;
    const Tensor hb = h_prev.rank() == 1 ? ops::reshape(h_prev, {1, h_prev.dim(0)}) : h_prev;
    if (xb.rank() != 2 || xb.dim(1) != d || hb.rank() != 2 || hb.dim(1) != hg || hb.dim(0) != xb.dim(0)) {
        throw std::invalid_argument("gru_cell: x " + shape_str(x.shape()) + " and h " + shape_str(h_prev.shape()) +
                                    " do not match input " + std::to_string(d) + " / hidden " + std::to_string(hg));
    }
    Tensor xz = ops::add(ops::matmul(xb, dir.w_z), dir.b_z);
    Tensor xr = ops::add(ops::matmul(xb, dir.w_r), dir.b_r);
    Tensor xh = ops::add(ops::matmul(xb, dir.w_h), dir.b_h);
    Tensor h = gru_step(xz, xr, xh, hb, dir);
    return vector_input ? ops::reshape(h, {hg}) : h;
}

Tensor bigru(const Tensor& H, const Tensor& mask, const GruState& state) {
    if (H.rank() != 3 || H.dim(2) != state.input_dim) {
        throw std::invalid_argument("bigru: H " + shape_str(H.shape()) + " does not match input size " +
                                    std::to_string(state.input_dim));
    }
    const std::size_t b = H.dim(0), len = H.dim(1), hg = state.hidden;
    check_mask(mask, b, len, "bigru");
    const auto m = mask.values();

    auto run = [&](const GruDirection& dir, bool reverse) {
        Tensor xz = ops::add(ops::matmul(H, dir.w_z), dir.b_z);
        Tensor xr = ops::add(ops::matmul(H, dir.w_r), dir.b_r);
        Tensor xh = ops::add(ops::matmul(H, dir.w_h), dir.b_h);
        Tensor h({b, hg}, 0.0);
        std::vector<Tensor> outputs(len);
        for (std::size_t step = 0; step < len; ++step) {
            const std::size_t t = reverse ? len - 1 - step : step;
            bool all_valid = true;
            for (std::size_t r = 0; r < b; ++r) all_valid = all_valid && m[r * len + t] == 1.0;
            Tensor next = gru_step(ops::select(xz, 1, t), ops::select(xr, 1, t), ops::select(xh, 1, t), h, dir);
            Tensor out;
            if (all_valid) {
                h = next;
                out = h;
            } else {
                const Tensor on = column_mask(m, len, t, hg, false);
                const Tensor off = column_mask(m, len, t, hg, true);
                h = ops::add(ops::mul(next, on), ops::mul(h, off));
                out = ops::mul(h, on);
            }
            outputs[t] = ops::reshape(out, {b, 1, hg});
        }
        return ops::concat(outputs, 1);
    };

    Tensor fwd = run(state.forward, false);
    Tensor bwd = run(state.backward, true);
    return ops::concat({fwd, bwd}, 2);
}

Tensor final_repr(const Tensor& G, const Tensor& mask) {
    if (G.rank() != 3 || G.dim(2) % 2 != 0) {
        throw std::invalid_argument("final_repr: G " + shape_str(G.shape()) + " is not [B, L, 2Hg]");
    }
    const std::size_t b = G.dim(0), len = G.dim(1), width = G.dim(2), hg = width / 2;
    check_mask(mask, b, len, "final_repr");
    const auto m = mask.values();
    std::vector<std::size_t> first(b), last(b);
    // Only the mask decides which positions are read; masked content is never looked at.
    for (std::size_t r = 0; r < b; ++r) {
        bool seen = false;
        for (std::size_t t = 0; t < len; ++t) {
            if (m[r * len + t] == 1.0) {
                if (!seen) first[r] = t;
                seen = true;
                last[r] = t;
            }
        }
    }
    Tensor fwd = ops::slice_last(ops::gather_positions(G, last), 0, hg);
    Tensor bwd = ops::slice_last(ops::gather_positions(G, first), hg, width);
    return ops::concat({fwd, bwd}, 1);
}

}  // namespace stn
