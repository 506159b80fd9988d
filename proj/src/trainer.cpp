#include "stn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stn/errors.hpp"

namespace stn {

void TrainConfig::validate() const {
    if (!(lr_max > 0.0)) throw std::invalid_argument("train.lr_max must be positive");
    if (batch_size == 0) throw std::invalid_argument("train.batch_size must be at least 1");
    if (eval_batch_size == 0) throw std::invalid_argument("train.eval_batch_size must be at least 1");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be non-negative");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw std::invalid_argument("train.adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw std::invalid_argument("train.adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw std::invalid_argument("train.adam_eps must be positive");
    if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw std::invalid_argument("train.grad_clip_norm must be positive");
}

Dataset encode_dataset(std::span<const PostRecord> records, const Vocabulary& vocab, const EncodeOptions& options) {
    Dataset d;
    d.posts.reserve(records.size());
    d.labels.reserve(records.size());
    for (const auto& r : records) {
        d.posts.push_back(encode(r.text, vocab, options));
        d.labels.push_back(r.label);
    }
    return d;
}

AdamState AdamState::zeros_like(std::span<const Parameter> params) {
    AdamState s;
    for (const auto& p : params) {
        s.m.emplace_back(p.tensor.numel(), 0.0);
        s.v.emplace_back(p.tensor.numel(), 0.0);
    }
    return s;
}

bool adamw_step(std::span<const Parameter> params, AdamState& state, double lr, const TrainConfig& cfg) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adamw_step: optimizer state does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].size() != params[i].tensor.numel() || state.v[i].size() != params[i].tensor.numel()) {
            throw std::invalid_argument("adamw_step: moment size mismatch for " + params[i].name);
        }
        if (!params[i].tensor.has_grad()) continue;
        for (double g : params[i].tensor.grad()) {
            if (!std::isfinite(g)) return false;
        }
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, t);
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor theta = params[i].tensor;
        const bool has = theta.has_grad();
        const auto g = has ? theta.grad() : std::span<const double>{};
        auto w = theta.mutable_values();
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double gk = has ? g[k] : 0.0;
            m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * gk;
            v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * gk * gk;
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            w[k] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * w[k]);
        }
    }
    return true;
}

double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr_max, bool* clamped) {
    if (clamped) *clamped = false;
    if (total_steps == 0) return lr_max;
    if (step > total_steps) {
        if (clamped) *clamped = true;
        step = total_steps;
    }
    const double ratio = static_cast<double>(step) / static_cast<double>(total_steps);
    return lr_max * (1.0 + std::cos(std::numbers::pi * ratio)) / 2.0;
}

double clip_grad_norm(std::span<const Parameter> params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double factor = max_norm / norm;
        for (const auto& p : params) {
            if (!p.tensor.has_grad()) continue;
            for (double& g : p.tensor.impl().grad) g *= factor;
        }
    }
    return norm;
}

Snapshot take_snapshot(const ModelState& model, const AdamState& optimizer) {
    Snapshot s;
    for (const auto& p : model.parameters()) {
        const auto v = p.tensor.values();
        s.values.emplace_back(v.begin(), v.end());
    }
    s.optimizer = optimizer;
    return s;
}

void restore_snapshot(ModelState& model, const Snapshot& snap) {
    const auto params = model.parameters();
    if (params.size() != snap.values.size()) throw std::invalid_argument("restore_snapshot: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        auto dst = t.mutable_values();
        if (dst.size() != snap.values[i].size()) {
            throw std::invalid_argument("restore_snapshot: size mismatch for " + params[i].name);
        }
        std::copy(snap.values[i].begin(), snap.values[i].end(), dst.begin());
    }
}

std::vector<double> predict_probs(const ModelState& model, const Dataset& data, std::size_t batch_size) {
    NoGradGuard no_grad;
    Rng unused(0);
    std::vector<double> out;
    out.reserve(data.size() * 3);
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        rows.resize(std::min(batch_size, data.size() - start));
        std::iota(rows.begin(), rows.end(), start);
        const auto batch = make_batch(data.posts, rows);
        const auto fwd = model_forward(model, batch, false, unused);
        const auto p = fwd.probs.values();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

EvalReport evaluate_model(const ModelState& model, const Dataset& data, std::size_t batch_size) {
    if (data.size() == 0) throw DataError("cannot evaluate on an empty split");
    return evaluate(predict_probs(model, data, batch_size), data.labels);
}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string batch_diagnostics(const LossConfig& loss, double lr, std::span<const std::size_t> rows,
                              const ForwardOutput& fwd, double value) {
    std::ostringstream out;
    out << "loss=" << value << " kind=" << to_string(loss.kind) << " lr=" << lr << " rows=[";
    for (std::size_t i = 0; i < rows.size(); ++i) out << (i ? "," : "") << rows[i];
    out << "]";
    const auto w = fwd.w_context.values();
    out << " mean_w_context=" << std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    out << " probs_finite=" << (all_finite(fwd.probs.values()) ? "yes" : "no");
    out << " logits_finite=" << (all_finite(fwd.logits.values()) ? "yes" : "no");
    return out.str();
}

}  // namespace

TrainResult train(ModelState& model, const TrainData& data, const TrainConfig& cfg, const LossConfig& loss,
                  const EpochCallback& on_epoch) {
    cfg.validate();
    loss.validate();
    if (!data.train || data.train->size() == 0) throw DataError("training split is empty");
    if (!data.val || data.val->size() == 0) throw DataError("validation split is empty");

    const auto params = model.parameters();
    TrainResult result;
    result.alpha = resolve_alpha(loss, data.train->labels);
    AdamState opt = AdamState::zeros_like(params);
    result.optimizer = opt;
    if (cfg.epochs == 0) return result;

    const Dataset& tr = *data.train;
    const std::size_t n = tr.size();
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(per_epoch * cfg.epochs);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    std::optional<Snapshot> best;
    std::size_t since_best = 0;
    std::size_t nonfinite_run = 0;
    std::uint64_t schedule_step = 0;
    bool clamp_warned = false;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t loss_count = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch_size, n - start));
            std::vector<Label> labels(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) labels[i] = tr.labels[rows[i]];
            const auto batch = make_batch(tr.posts, rows);
            bool clamped = false;
            const double lr = cosine_lr(schedule_step++, total_steps, cfg.lr_max, &clamped);
            if (clamped && !clamp_warned) {
                std::cerr << "warning: lr schedule step past " << total_steps << "; clamped to the final value\n";
                clamp_warned = true;
            }
            rec.lr_last = lr;

            const auto fwd = model_forward(model, batch, true, rng);
            const Tensor objective = training_loss(loss, result.alpha, fwd.probs, labels, fwd.w_context);
            const double value = objective.item();
            if (!std::isfinite(value)) {
                const auto diag = batch_diagnostics(loss, lr, rows, fwd, value);
                if (++nonfinite_run >= 2) {
                    throw NumericError("non-finite loss on two consecutive batches (epoch " + std::to_string(epoch) +
                                       "): " + diag);
                }
                std::cerr << "warning: skipping batch with non-finite loss: " << diag << "\n";
                ++rec.rejected_steps;
                continue;
            }
            nonfinite_run = 0;
            loss_sum += value;
            ++loss_count;

            for (const auto& p : params) p.tensor.impl().grad.clear();
            objective.backward();
            if (cfg.grad_clip_norm) clip_grad_norm(params, *cfg.grad_clip_norm);
            if (!adamw_step(params, opt, lr, cfg)) {
                std::cerr << "warning: optimizer step rejected (non-finite gradient) at epoch " << epoch
                          << ", lr=" << lr << "\n";
                ++rec.rejected_steps;
            }
        }
        rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        rec.val = evaluate_model(model, *data.val, cfg.eval_batch_size);
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (!best || rec.val.macro_f1 > result.best_val_macro_f1) {
            best = take_snapshot(model, opt);
            result.best_epoch = epoch;
            result.best_val_macro_f1 = rec.val.macro_f1;
            since_best = 0;
        } else if (cfg.early_stop_patience && ++since_best >= *cfg.early_stop_patience) {
            break;
        }
    }

    restore_snapshot(model, *best);
    result.optimizer = best->optimizer;
    if (data.test && data.test->size() > 0) result.test = evaluate_model(model, *data.test, cfg.eval_batch_size);
    return result;
}

std::string history_to_json(const TrainResult& result) {
    nlohmann::ordered_json j;
    j["best_epoch"] = result.best_epoch;
    j["best_val_macro_f1"] = result.best_val_macro_f1;
    j["alpha"] = result.alpha;
    auto epochs = nlohmann::ordered_json::array();
    for (const auto& e : result.history) {
        nlohmann::ordered_json r;
        r["epoch"] = e.epoch;
        r["train_loss"] = e.train_loss;
        r["lr_last"] = e.lr_last;
        r["rejected_steps"] = e.rejected_steps;
        r["val"] = nlohmann::ordered_json::parse(e.val.to_json());
        epochs.push_back(r);
    }
    j["epochs"] = epochs;
    if (result.test) j["test"] = nlohmann::ordered_json::parse(result.test->to_json());
    return j.dump(2) + "\n";
}

std::vector<AblationRun> ablation_runs(const ModelConfig& base_model, const LossConfig& base_loss) {
    std::vector<AblationRun> runs;
    runs.push_back({"full", base_model, base_loss});
    auto no_cue = base_model;
    no_cue.cue_mode = CueMode::uniform;
    runs.push_back({"no_cue_extractor", no_cue, base_loss});
    auto no_phrase = base_model;
    no_phrase.phrase_mode = PhraseMode::mean_pool;
    runs.push_back({"no_phrase_encoder", no_phrase, base_loss});
    auto ce = base_loss;
    ce.kind = LossKind::cross_entropy;
    runs.push_back({"no_cafl", base_model, ce});
    return runs;
}

AblationReport ablate(const Dataset& train_set, const Dataset& val, const Dataset& test, const ModelConfig& base_model,
                      const TrainConfig& base_train, const LossConfig& base_loss, std::span<const std::uint64_t> seeds,
                      const AblationCallback& on_run) {
    if (seeds.empty()) throw std::invalid_argument("ablate: at least one seed is required");
    if (test.size() == 0) throw DataError("ablate: test split is empty");
    AblationReport report;
    report.seeds.assign(seeds.begin(), seeds.end());
    for (const auto& run : ablation_runs(base_model, base_loss)) {
        report.configs.push_back(run.name);
        std::vector<double> f1, rec1, acc;
        for (std::uint64_t seed : seeds) {
            Rng init_rng(seed);
            ModelState model = ModelState::init(run.model, init_rng);
            TrainConfig tc = base_train;
            tc.seed = seed;
            const auto result = train(model, {&train_set, &val, &test}, tc, run.loss);
            f1.push_back(result.test->macro_f1);
            rec1.push_back(result.test->per_class[0].recall);
            acc.push_back(result.test->accuracy);
            if (on_run) on_run(run.name, seed, *result.test);
        }
        const double k = static_cast<double>(seeds.size());
        report.mean_macro_f1.push_back(std::accumulate(f1.begin(), f1.end(), 0.0) / k);
        report.mean_class1_recall.push_back(std::accumulate(rec1.begin(), rec1.end(), 0.0) / k);
        report.macro_f1.push_back(std::move(f1));
        report.class1_recall.push_back(std::move(rec1));
        report.accuracy.push_back(std::move(acc));
    }
    return report;
}

std::string AblationReport::to_json() const {
    nlohmann::ordered_json j;
    j["seeds"] = seeds;
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < configs.size(); ++c) {
        nlohmann::ordered_json r;
        r["config"] = configs[c];
        r["macro_f1"] = macro_f1[c];
        r["mean_macro_f1"] = mean_macro_f1[c];
        r["class1_recall"] = class1_recall[c];
        r["mean_class1_recall"] = mean_class1_recall[c];
        r["accuracy"] = accuracy[c];
        rows.push_back(r);
    }
    j["rows"] = rows;
    return j.dump(2) + "\n";
}

std::string AblationReport::to_table() const {
    std::ostringstream out;
    char buf[64];
    out << "config";
    for (auto s : seeds) out << "\tseed_" << s;
    out << "\tmean\n";
    for (std::size_t c = 0; c < configs.size(); ++c) {
        out << configs[c];
        for (double v : macro_f1[c]) {
            std::snprintf(buf, sizeof buf, "\t%.4f", v);
            out << buf;
        }
        std::snprintf(buf, sizeof buf, "\t%.4f\n", mean_macro_f1[c]);
        out << buf;
    }
    return out.str();
}

}  // namespace stn
