#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "stn/losses.hpp"

namespace stn {

struct ConfusionMatrix {
    // counts[true - 1][pred - 1]
    std::array<std::array<long, 3>, 3> counts{};

    long total() const;
    long trace() const;
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> golds);

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MacroScores {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::array<ClassScores, 3> per_class{};
};

/// Zero denominators give 0 for the affected precision, recall or F1.
MacroScores macro_scores(const ConfusionMatrix& cm);

struct AucScores {
    double macro = 0.0;
    std::array<double, 3> per_class{};
    // false when the class has no positives or no negatives; such classes are
    // left out of the macro and their per-class value is reported as 0.
    std::array<bool, 3> defined{};
};

/// One-vs-rest AUC by the rank statistic, ties counted 1/2.
/// scores is row-major [n, 3].
AucScores roc_auc_ovr(std::span<const double> scores, std::span<const Label> golds);

/// Single-column rank AUC; throws if positives or negatives are missing.
double binary_auc(std::span<const double> scores, std::span<const bool> positive);

double cohen_kappa(std::span<const Label> a, std::span<const Label> b);

/// ratings[i] holds the labels that each rater gave item i (all rows the same width).
double fleiss_kappa(const std::vector<std::vector<Label>>& ratings);

struct EvalReport {
    double accuracy = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double roc_auc_macro = 0.0;
    std::array<ClassScores, 3> per_class{};
    std::array<double, 3> per_class_auc{};
    std::array<bool, 3> auc_defined{};
    ConfusionMatrix confusion;

    std::string to_json() const;
};

/// probs row-major [n, 3]; predictions are the row argmax (first maximum wins).
EvalReport evaluate(std::span<const double> probs, std::span<const Label> golds);

std::vector<Label> argmax_labels(std::span<const double> probs);

}  // namespace stn
