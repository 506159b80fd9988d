#include "stn/metrics.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace stn {

namespace {

std::size_t label_index(Label y, const char* op) {
    if (y < 1 || y > 3) throw std::invalid_argument(std::string(op) + ": label " + std::to_string(y) + " outside {1, 2, 3}");
    return static_cast<std::size_t>(y - 1);
}

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), 0L);
    return t;
}

long ConfusionMatrix::trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

ConfusionMatrix confusion(std::span<const Label> preds, std::span<const Label> golds) {
    if (preds.size() != golds.size()) {
        throw std::invalid_argument("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                                    std::to_string(golds.size()) + " gold labels");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        ++cm.counts[label_index(golds[i], "confusion")][label_index(preds[i], "confusion")];
    }
    return cm;
}

MacroScores macro_scores(const ConfusionMatrix& cm) {
    const long total = cm.total();
    if (total <= 0) throw std::invalid_argument("macro_scores: empty confusion matrix");
    MacroScores s;
    s.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    for (std::size_t c = 0; c < 3; ++c) {
        double predicted = 0.0, gold = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
            predicted += static_cast<double>(cm.counts[k][c]);
            gold += static_cast<double>(cm.counts[c][k]);
        }
        const double tp = static_cast<double>(cm.counts[c][c]);
        auto& pc = s.per_class[c];
        pc.precision = ratio(tp, predicted);
        pc.recall = ratio(tp, gold);
        pc.f1 = ratio(2.0 * pc.precision * pc.recall, pc.precision + pc.recall);
        s.macro_precision += pc.precision / 3.0;
        s.macro_recall += pc.recall / 3.0;
        s.macro_f1 += pc.f1 / 3.0;
    }
    return s;
}

double binary_auc(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) throw std::invalid_argument("binary_auc: length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mann-Whitney U from midranks.
    double rank_sum = 0.0, n_pos = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (positive[order[k]]) {
                rank_sum += midrank;
                n_pos += 1.0;
            }
        }
        i = j;
    }
    const double n_neg = static_cast<double>(n) - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("binary_auc: needs both positives and negatives");
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

AucScores roc_auc_ovr(std::span<const double> scores, std::span<const Label> golds) {
    if (scores.size() != golds.size() * 3) {
        throw std::invalid_argument("roc_auc_ovr: " + std::to_string(scores.size()) + " scores for " +
                                    std::to_string(golds.size()) + " samples of 3 classes");
    }
    AucScores out;
    const std::size_t n = golds.size();
    std::vector<double> column(n);
    std::unique_ptr<bool[]> pos(new bool[n]);
    std::size_t defined = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t n_pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            column[i] = scores[i * 3 + c];
            pos[i] = label_index(golds[i], "roc_auc_ovr") == c;
            n_pos += pos[i] ? 1 : 0;
        }
        if (n_pos == 0 || n_pos == n) continue;
        out.per_class[c] = binary_auc(column, std::span<const bool>(pos.get(), n));
        out.defined[c] = true;
        out.macro += out.per_class[c];
        ++defined;
    }
    if (defined > 0) out.macro /= static_cast<double>(defined);
    return out;
}

double cohen_kappa(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cohen_kappa: annotator lengths differ");
    if (a.empty()) throw std::invalid_argument("cohen_kappa: no items");
    const double n = static_cast<double>(a.size());
    std::array<double, 3> ma{}, mb{};
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto x = label_index(a[i], "cohen_kappa"), y = label_index(b[i], "cohen_kappa");
        ma[x] += 1.0;
        mb[y] += 1.0;
        agree += x == y ? 1.0 : 0.0;
    }
    const double p_o = agree / n;
    double p_e = 0.0;
    for (std::size_t c = 0; c < 3; ++c) p_e += (ma[c] / n) * (mb[c] / n);
    if (p_e == 1.0) {
        throw std::invalid_argument("cohen_kappa: expected agreement is 1 (both annotators use a single label); kappa "
                                    "is undefined");
    }
    return (p_o - p_e) / (1.0 - p_e);
}

double fleiss_kappa(const std::vector<std::vector<Label>>& ratings) {
    if (ratings.empty()) throw std::invalid_argument("fleiss_kappa: no items");
    const std::size_t r = ratings.front().size();
    if (r < 2) throw std::invalid_argument("fleiss_kappa: needs at least 2 raters per item");
    const double n_items = static_cast<double>(ratings.size()), nr = static_cast<double>(r);
    std::array<double, 3> totals{};
    double p_bar = 0.0;
    for (const auto& row : ratings) {
        if (row.size() != r) throw std::invalid_argument("fleiss_kappa: items have different rater counts");
        std::array<double, 3> n_ij{};
        for (Label y : row) n_ij[label_index(y, "fleiss_kappa")] += 1.0;
        double agree = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            agree += n_ij[c] * (n_ij[c] - 1.0);
            totals[c] += n_ij[c];
        }
        p_bar += agree / (nr * (nr - 1.0));
    }
    p_bar /= n_items;
    double p_e = 0.0;
    for (double t : totals) {
        const double p = t / (n_items * nr);
        p_e += p * p;
    }
    if (p_e == 1.0) {
        throw std::invalid_argument("fleiss_kappa: expected agreement is 1 (every rating uses one label); kappa is "
                                    "undefined");
    }
    return (p_bar - p_e) / (1.0 - p_e);
}

std::vector<Label> argmax_labels(std::span<const double> probs) {
    if (probs.size() % 3 != 0) throw std::invalid_argument("argmax_labels: probabilities are not [n, 3]");
    std::vector<Label> out(probs.size() / 3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double* row = probs.data() + i * 3;
        out[i] = static_cast<Label>(std::max_element(row, row + 3) - row) + 1;
    }
    return out;
}

EvalReport evaluate(std::span<const double> probs, std::span<const Label> golds) {
    const auto preds = argmax_labels(probs);
    EvalReport r;
    r.confusion = confusion(preds, golds);
    const auto m = macro_scores(r.confusion);
    r.accuracy = m.accuracy;
    r.macro_precision = m.macro_precision;
    r.macro_recall = m.macro_recall;
    r.macro_f1 = m.macro_f1;
    r.per_class = m.per_class;
    const auto auc = roc_auc_ovr(probs, golds);
    r.roc_auc_macro = auc.macro;
    r.per_class_auc = auc.per_class;
    r.auc_defined = auc.defined;
    return r;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["accuracy"] = accuracy;
    j["macro_precision"] = macro_precision;
    j["macro_recall"] = macro_recall;
    j["macro_f1"] = macro_f1;
    j["roc_auc_macro"] = roc_auc_macro;
    nlohmann::ordered_json pc = nlohmann::ordered_json::object();
    auto undefined = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < 3; ++c) {
        const std::string key = std::to_string(c + 1);
        pc[key]["precision"] = per_class[c].precision;
        pc[key]["recall"] = per_class[c].recall;
        pc[key]["f1"] = per_class[c].f1;
        pc[key]["auc"] = per_class_auc[c];
        if (!auc_defined[c]) undefined.push_back(static_cast<int>(c + 1));
    }
    j["per_class"] = pc;
    j["auc_undefined_classes"] = undefined;
    auto cm = nlohmann::ordered_json::array();
    for (const auto& row : confusion.counts) cm.push_back(row);
    j["confusion"] = cm;
    return j.dump(2) + "\n";
}

}  // namespace stn
