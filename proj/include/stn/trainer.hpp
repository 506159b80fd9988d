#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stn/corpus.hpp"
#include "stn/losses.hpp"
#include "stn/metrics.hpp"
#include "stn/model.hpp"

namespace stn {

struct TrainConfig {
    double lr_max = 2e-5;
    std::size_t batch_size = 32;
    std::size_t epochs = 10;
    std::uint64_t seed = 1;
    double weight_decay = 0.01;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<double> grad_clip_norm = 1.0;
    std::optional<std::size_t> early_stop_patience;
    std::size_t eval_batch_size = 128;

    void validate() const;
};

struct Dataset {
    std::vector<TokenizedPost> posts;
    std::vector<Label> labels;

    std::size_t size() const { return posts.size(); }
};

Dataset encode_dataset(std::span<const PostRecord> records, const Vocabulary& vocab, const EncodeOptions& options);

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(std::span<const Parameter> params);
};

/// Decoupled AdamW on every parameter's gradient (missing gradients count as
/// zero). Returns false, changing nothing, when any gradient is non-finite.
bool adamw_step(std::span<const Parameter> params, AdamState& state, double lr, const TrainConfig& cfg);

/// lr_max (1 + cos(pi t / T)) / 2; t > T is clamped to T and flagged.
double cosine_lr(std::uint64_t step, std::uint64_t total_steps, double lr_max, bool* clamped = nullptr);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<const Parameter> params, double max_norm);

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double lr_last = 0.0;
    std::size_t rejected_steps = 0;
    EvalReport val;
};

/// Copy of parameter values (and optimizer state) taken at one point of training.
struct Snapshot {
    std::vector<std::vector<double>> values;
    AdamState optimizer;
};

Snapshot take_snapshot(const ModelState& model, const AdamState& optimizer);
void restore_snapshot(ModelState& model, const Snapshot& snap);

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;  // 0 when no epoch ran
    double best_val_macro_f1 = 0.0;
    AdamState optimizer;  // at the best epoch
    std::optional<EvalReport> test;
    ClassWeights alpha{1.0, 1.0, 1.0};
};

struct TrainData {
    const Dataset* train = nullptr;
    const Dataset* val = nullptr;
    const Dataset* test = nullptr;  // optional
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Runs the epochs, keeps the best validation macro-F1 weights in `model`
/// on return and evaluates them once on the test split when given.
TrainResult train(ModelState& model, const TrainData& data, const TrainConfig& cfg, const LossConfig& loss,
                  const EpochCallback& on_epoch = {});

/// Eval-mode probabilities, row-major [n, 3].
std::vector<double> predict_probs(const ModelState& model, const Dataset& data, std::size_t batch_size = 128);
EvalReport evaluate_model(const ModelState& model, const Dataset& data, std::size_t batch_size = 128);

std::string history_to_json(const TrainResult& result);

struct AblationRun {
    std::string name;
    ModelConfig model;
    LossConfig loss;
};

/// full, no_cue_extractor, no_phrase_encoder, no_cafl, derived from the base.
std::vector<AblationRun> ablation_runs(const ModelConfig& base_model, const LossConfig& base_loss);

struct AblationReport {
    std::vector<std::string> configs;
    std::vector<std::uint64_t> seeds;
    // [config][seed]
    std::vector<std::vector<double>> macro_f1;
    std::vector<std::vector<double>> class1_recall;
    std::vector<std::vector<double>> accuracy;
    std::vector<double> mean_macro_f1;
    std::vector<double> mean_class1_recall;

    std::string to_json() const;
    /// Plain-text table: one row per configuration, one column per seed, then the mean.
    std::string to_table() const;
};

using AblationCallback = std::function<void(const std::string& config, std::uint64_t seed, const EvalReport& test)>;

/// Each configuration is trained once per seed (model init, batching and
/// dropout all keyed by the seed) and scored on the test split.
AblationReport ablate(const Dataset& train, const Dataset& val, const Dataset& test, const ModelConfig& base_model,
                      const TrainConfig& base_train, const LossConfig& base_loss, std::span<const std::uint64_t> seeds,
                      const AblationCallback& on_run = {});

}  // namespace stn
