#include "stn/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "stn/head.hpp"
#include "stn/ops.hpp"

namespace stn {

LossKind parse_loss_kind(std::string_view name) {
    if (name == "cafl") return LossKind::cafl;
    if (name == "focal") return LossKind::focal;
    if (name == "cross_entropy") return LossKind::cross_entropy;
    if (name == "weighted_ce") return LossKind::weighted_ce;
    throw std::invalid_argument("unknown loss kind '" + std::string(name) +
                                "' (expected cafl, focal, cross_entropy or weighted_ce)");
}

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::cafl: return "cafl";
        case LossKind::focal: return "focal";
        case LossKind::cross_entropy: return "cross_entropy";
        case LossKind::weighted_ce: return "weighted_ce";
    }
    throw std::invalid_argument("unknown loss kind");
}

void LossConfig::validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("loss: gamma must be non-negative");
    if (alpha) {
        for (double a : *alpha) {
            if (!(a > 0.0)) throw std::invalid_argument("loss: alpha entries must be strictly positive");
        }
    }
}

ClassWeights inverse_frequency_alpha(std::span<const Label> labels) {
    std::array<double, 3> counts{0, 0, 0};
    for (Label y : labels) {
        if (y < 1 || y > 3) throw std::invalid_argument("label " + std::to_string(y) + " outside {1, 2, 3}");
        counts[static_cast<std::size_t>(y - 1)] += 1.0;
    }
    ClassWeights w{};
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
        w[c] = 1.0 / std::max(counts[c], 1.0);
        total += w[c];
    }
    for (auto& x : w) x *= 3.0 / total;
    return w;
}

namespace {

std::vector<std::size_t> class_index(const Tensor& P, std::span<const Label> labels) {
    if (P.rank() != 2 || P.dim(1) != kNumClasses || P.dim(0) != labels.size()) {
        throw std::invalid_argument("loss: probabilities " + shape_str(P.shape()) + " do not match " +
                                    std::to_string(labels.size()) + " labels");
    }
    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 1 || labels[i] > 3) {
            throw std::invalid_argument("loss: label " + std::to_string(labels[i]) + " outside {1, 2, 3}");
        }
        idx[i] = static_cast<std::size_t>(labels[i] - 1);
    }
    return idx;
}

}  // namespace

Tensor focal_per_sample(const Tensor& P, std::span<const Label> labels, const ClassWeights& alpha, double gamma,
                        bool all_class_sum) {
    const auto idx = class_index(P, labels);
    if (all_class_sum) {
        Tensor logp = ops::log(ops::clamp_min(P, kProbFloor));
        Tensor mod = ops::pow(ops::clamp_min(ops::add_scalar(ops::scale(P, -1.0), 1.0), 0.0), gamma);
        Tensor weights({kNumClasses}, std::vector<double>(alpha.begin(), alpha.end()));
        Tensor terms = ops::mul(ops::mul(mod, logp), weights);
        return ops::scale(ops::sum(terms, 1), -1.0);
    }
    Tensor py = ops::gather_columns(P, idx);
    std::vector<double> a(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) a[i] = alpha[idx[i]];
    Tensor logp = ops::log(ops::clamp_min(py, kProbFloor));
    Tensor mod = ops::pow(ops::clamp_min(ops::add_scalar(ops::scale(py, -1.0), 1.0), 0.0), gamma);
    Tensor terms = ops::mul(ops::mul(mod, logp), Tensor({idx.size()}, std::move(a)));
    return ops::scale(terms, -1.0);
}

Tensor focal_loss(const Tensor& P, std::span<const Label> labels, const ClassWeights& alpha, double gamma,
                  bool all_class_sum) {
    return ops::mean_all(focal_per_sample(P, labels, alpha, gamma, all_class_sum));
}

Tensor cross_entropy_loss(const Tensor& P, std::span<const Label> labels) {
    return weighted_ce_loss(P, labels, {1.0, 1.0, 1.0});
}

Tensor weighted_ce_loss(const Tensor& P, std::span<const Label> labels, const ClassWeights& alpha) {
    const auto idx = class_index(P, labels);
    std::vector<double> a(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) a[i] = alpha[idx[i]];
    Tensor logp = ops::log(ops::clamp_min(ops::gather_columns(P, idx), kProbFloor));
    return ops::scale(ops::mean_all(ops::mul(logp, Tensor({idx.size()}, std::move(a)))), -1.0);
}

Tensor cafl_loss(const Tensor& P, std::span<const Label> labels, const Tensor& scores, const Tensor& A,
                 const Tensor& mask, const ClassWeights& alpha, double gamma, ContextMode mode, bool all_class_sum) {
    if (scores.rank() != 2 || scores.dim(0) != labels.size()) {
        throw std::invalid_argument("cafl: scores " + shape_str(scores.shape()) + " are not row-aligned with " +
                                    std::to_string(labels.size()) + " labels");
    }
    return cafl_loss_weighted(P, labels, contextual_weight(scores, A, mask, mode), alpha, gamma, all_class_sum);
}

Tensor cafl_loss_weighted(const Tensor& P, std::span<const Label> labels, const Tensor& w_context,
                          const ClassWeights& alpha, double gamma, bool all_class_sum) {
    if (w_context.shape() != Shape{labels.size()}) {
        throw std::invalid_argument("cafl: context weights " + shape_str(w_context.shape()) + " do not match " +
                                    std::to_string(labels.size()) + " labels");
    }
    return ops::mean_all(ops::mul(focal_per_sample(P, labels, alpha, gamma, all_class_sum), w_context.detach()));
}

ClassWeights resolve_alpha(const LossConfig& cfg, std::span<const Label> train_labels) {
    return cfg.alpha ? *cfg.alpha : inverse_frequency_alpha(train_labels);
}

Tensor training_loss(const LossConfig& cfg, const ClassWeights& alpha, const Tensor& P, std::span<const Label> labels,
                     const Tensor& w_context) {
    switch (cfg.kind) {
        case LossKind::cafl: return cafl_loss_weighted(P, labels, w_context, alpha, cfg.gamma, cfg.all_class_sum);
        case LossKind::focal: return focal_loss(P, labels, alpha, cfg.gamma, cfg.all_class_sum);
        case LossKind::cross_entropy: return cross_entropy_loss(P, labels);
        case LossKind::weighted_ce: return weighted_ce_loss(P, labels, alpha);
    }
    throw std::invalid_argument("unknown loss kind");
}

}  // namespace stn
