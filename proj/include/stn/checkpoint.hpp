#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "stn/model.hpp"
#include "stn/trainer.hpp"

namespace stn {

inline constexpr char kCheckpointMagic[] = "STXN1";
inline constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::ordered_json& j);

struct Checkpoint {
    ModelState model;
    AdamState optimizer;
    std::string tokenizer;  // vocabulary file reference
    nlohmann::ordered_json config;  // run configuration snapshot
};

/// Layout: "STXN1\n", metadata byte count and "\n", JSON metadata, then per
/// blob: u32 name length, name, u32 rank, u64 dims, raw little-endian doubles.
/// Blobs are "param/<name>", "adam.m/<name>" and "adam.v/<name>".
void save_checkpoint(const std::filesystem::path& path, const ModelState& model, const AdamState& optimizer,
                     const std::string& tokenizer, const nlohmann::ordered_json& config);
std::string serialize_checkpoint(const ModelState& model, const AdamState& optimizer, const std::string& tokenizer,
                                 const nlohmann::ordered_json& config);

/// Throws DataError on a malformed or inconsistent file.
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint parse_checkpoint(std::string_view bytes);

}  // namespace stn
