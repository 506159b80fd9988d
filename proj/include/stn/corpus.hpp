#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stn/losses.hpp"
#include "stn/tokenizer.hpp"

namespace stn {

struct PostRecord {
    std::string text;
    Label label = 0;
    std::optional<std::string> id;

    bool operator==(const PostRecord&) const = default;
};

struct LineError {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct LoadResult {
    std::vector<PostRecord> records;
    std::vector<LineError> errors;

    bool ok() const { return errors.empty(); }
    /// "line N: message" per error, newline separated.
    std::string error_summary() const;
};

/// One JSON object per line with keys text (string), label (1..3), optional id.
/// Blank lines are skipped; CR before LF is ignored.
LoadResult parse_jsonl(std::string_view content);
LoadResult load_jsonl(const std::filesystem::path& path);

/// Throws DataError with the summary when any line is malformed.
std::vector<PostRecord> load_jsonl_strict(const std::filesystem::path& path);

std::string to_jsonl(std::span<const PostRecord> records);
void write_jsonl(const std::filesystem::path& path, std::span<const PostRecord> records);

struct FilterResult {
    std::vector<PostRecord> records;
    std::size_t dropped = 0;
};

/// Keeps records whose untruncated token count is at least min_tokens.
FilterResult filter_short(std::span<const PostRecord> records, const Vocabulary& vocab, std::size_t min_tokens = 5);

struct SplitRatios {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct Splits {
    std::vector<PostRecord> train;
    std::vector<PostRecord> val;
    std::vector<PostRecord> test;
};

/// Per class: shuffle by seed, val and test get floor(share), train the rest.
/// Classes with one or two members are rejected; absent classes are skipped.
/// Parts keep class order 1, 2, 3 and the shuffled order within each class.
Splits stratified_split(std::span<const PostRecord> records, std::uint64_t seed, const SplitRatios& ratios = {});

std::array<std::size_t, 3> class_counts(std::span<const PostRecord> records);
std::vector<Label> labels_of(std::span<const PostRecord> records);
std::vector<std::string> texts_of(std::span<const PostRecord> records);

struct SyntheticSpec {
    std::size_t n_total = 3067;
    std::array<double, 3> priors{0.0352, 0.9302, 0.0346};
    double ambiguity_rate = 0.05;
    // Per-position chance that a filler word is replaced by a random
    // first- or third-person marker, in every class.
    double marker_noise = 0.15;
    std::size_t min_words = 8;
    std::size_t max_words = 24;
    std::uint64_t seed = 3;

    std::vector<std::string> first_person;
    std::vector<std::string> third_person;
    std::vector<std::string> cues;
    std::vector<std::string> filler;

    /// Built-in lexicons with the defaults above.
    static SyntheticSpec defaults();
    void validate() const;
};

/// Class 1: a first-person marker directly followed by a transactional cue.
/// Class 3: the same with a third-person marker. Class 2: filler and stray
/// markers, plus one cue at a random spot with probability ambiguity_rate.
std::vector<PostRecord> gen_synthetic(const SyntheticSpec& spec);

}  // namespace stn
