#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stn {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;
inline constexpr std::int32_t kBosId = 2;
inline constexpr std::int32_t kEosId = 3;
inline constexpr std::size_t kNumSpecials = 4;
// Byte b is token kNumSpecials + b.
inline constexpr std::size_t kByteVocab = kNumSpecials + 256;
inline constexpr std::size_t kDefaultMaxLen = 128;

struct Merge {
    std::int32_t left;
    std::int32_t right;
    std::int32_t result;
};

/// Byte-level BPE vocabulary: specials, the 256 byte tokens, then learned merges.
class Vocabulary {
public:
    /// Specials and bytes only; no merges.
    Vocabulary();

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::int32_t id) const;
    std::span<const std::string> tokens() const { return tokens_; }
    std::span<const Merge> merges() const { return merges_; }
    bool is_special(std::int32_t id) const { return id >= 0 && static_cast<std::size_t>(id) < kNumSpecials; }

    /// Appends the merge (left, right); returns the id of the merged token,
    /// which is reused when those bytes are already a token.
    std::int32_t add_merge(std::int32_t left, std::int32_t right);

    /// Merge priority for an adjacent pair, or -1 when the pair never merges.
    std::int64_t merge_rank(std::int32_t left, std::int32_t right) const;

    std::string serialize() const;
    static Vocabulary parse(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b);

private:
    std::vector<std::string> tokens_;
    std::vector<Merge> merges_;
    std::unordered_map<std::string, std::int32_t> ids_;
    std::unordered_map<std::uint64_t, std::size_t> rank_;
};

/// Learns merges greedily by adjacent-pair frequency (ties: lexicographically
/// smaller pair of byte strings) until the vocabulary holds vocab_size tokens
/// or no pair remains. Pairs never span two texts.
Vocabulary train_bpe(std::span<const std::string> texts, std::size_t vocab_size);

/// Fixed-length id/mask pair. mask[i] == 1 exactly for i < valid_len.
struct TokenizedPost {
    std::vector<std::int32_t> ids;
    std::vector<std::uint8_t> mask;
    std::size_t valid_len = 0;
};

struct EncodeOptions {
    std::size_t max_len = kDefaultMaxLen;
    bool add_bos_eos = false;
};

/// Token ids for text, unpadded and untruncated.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab);

/// Right-truncates or right-pads to max_len. Rejects blank text.
TokenizedPost encode(std::string_view text, const Vocabulary& vocab, const EncodeOptions& options = {});

/// Concatenated token bytes with specials dropped; invalid UTF-8 becomes U+FFFD.
std::string decode(std::span<const std::int32_t> ids, const Vocabulary& vocab);

}  // namespace stn
