#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stn/corpus.hpp"
#include "stn/losses.hpp"
#include "stn/model.hpp"
#include "stn/tokenizer.hpp"
#include "stn/trainer.hpp"

namespace stn {

enum class KeyKind { uint, real, boolean, string, real_list, uint_list, string_list, opt_real, opt_uint, opt_real_list };

struct ConfigKey {
    std::string name;  // dotted
    KeyKind kind;
    std::string help;
};

/// Every recognised configuration key, in dump order.
const std::vector<ConfigKey>& config_keys();

/// Nested JSON document holding every key. Sections: tokenizer, encoder, cue,
/// phrase, head, loss, cafl, synthetic, split, train, ablation, paths.
class RunConfig {
public:
    /// All defaults.
    RunConfig();

    /// Defaults overlaid with the file's values; unknown keys or mistyped
    /// values throw ConfigError.
    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_json(const nlohmann::ordered_json& j);

    /// Sets one dotted key from command-line text. Strings are taken verbatim;
    /// lists and optionals accept JSON ("[1,2,3]", "null").
    void set(std::string_view key, std::string_view text);
    void set_json(std::string_view key, const nlohmann::ordered_json& value);

    const nlohmann::ordered_json& at(std::string_view key) const;
    const nlohmann::ordered_json& document() const { return doc_; }
    std::string dump() const { return doc_.dump(2) + "\n"; }

    EncodeOptions encode_options() const;
    std::size_t vocab_size() const;
    std::size_t min_tokens() const;
    ModelConfig model_config(std::size_t vocab_size) const;
    LossConfig loss_config() const;
    TrainConfig train_config() const;
    SyntheticSpec synthetic_spec() const;
    SplitRatios split_ratios() const;
    std::uint64_t split_seed() const;
    std::vector<std::uint64_t> ablation_seeds() const;
    std::string path(std::string_view name) const;

private:
    nlohmann::ordered_json doc_;
};

}  // namespace stn
