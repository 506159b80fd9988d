#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "stn/cue_extractor.hpp"
#include "stn/tensor.hpp"

namespace stn {

/// Class labels are 1, 2, 3.
using Label = int;
using ClassWeights = std::array<double, 3>;

enum class LossKind { cafl, focal, cross_entropy, weighted_ce };

LossKind parse_loss_kind(std::string_view name);
std::string to_string(LossKind kind);

inline constexpr double kProbFloor = 1e-12;

struct LossConfig {
    LossKind kind = LossKind::cafl;
    double gamma = 2.0;
    // Unset means inverse class frequency of the training split, mean-normalized.
    std::optional<ClassWeights> alpha;
    ContextMode context_mode = ContextMode::sigmoid_mean;
    // Literal class-summed variant: sum_c -alpha_c (1 - P_c)^gamma log P_c.
    bool all_class_sum = false;

    void validate() const;
};

/// alpha_c proportional to 1 / count_c, scaled so the three weights average 1.
ClassWeights inverse_frequency_alpha(std::span<const Label> labels);

/// Per-sample focal terms [B]: -alpha_y (1 - P_y)^gamma log max(P_y, 1e-12).
Tensor focal_per_sample(const Tensor& P, std::span<const Label> labels, const ClassWeights& alpha, double gamma,
                        bool all_class_sum = false);

/// Batch means.
Tensor focal_loss(const Tensor& P, std::span<const Label> labels, const ClassWeights& alpha, double gamma,
                  bool all_class_sum = false);
Tensor cross_entropy_loss(const Tensor& P, std::span<const Label> labels);
Tensor weighted_ce_loss(const Tensor& P, std::span<const Label> labels, const ClassWeights& alpha);

/// Mean over the batch of W_context(sample) * focal(sample), with the weight
/// taken from the cue extractor outputs and held constant under differentiation.
Tensor cafl_loss(const Tensor& P, std::span<const Label> labels, const Tensor& scores, const Tensor& A,
                 const Tensor& mask, const ClassWeights& alpha, double gamma, ContextMode mode,
                 bool all_class_sum = false);

/// Same as cafl_loss with the per-sample weights [B] given directly (detached here).
Tensor cafl_loss_weighted(const Tensor& P, std::span<const Label> labels, const Tensor& w_context,
                          const ClassWeights& alpha, double gamma, bool all_class_sum = false);

/// Dispatches on cfg.kind; w_context is only read for cafl.
Tensor training_loss(const LossConfig& cfg, const ClassWeights& alpha, const Tensor& P, std::span<const Label> labels,
                     const Tensor& w_context);

ClassWeights resolve_alpha(const LossConfig& cfg, std::span<const Label> train_labels);

}  // namespace stn
