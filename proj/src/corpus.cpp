#include "stn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stn/errors.hpp"

namespace stn {

std::string LoadResult::error_summary() const {
    std::ostringstream out;
    for (const auto& e : errors) out << "line " << e.line << ": " << e.message << "\n";
    return out.str();
}

namespace {

PostRecord parse_record(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("expected a JSON object");
    if (!j.contains("text")) throw std::invalid_argument("missing key 'text'");
    if (!j.contains("label")) throw std::invalid_argument("missing key 'label'");
    if (!j["text"].is_string()) throw std::invalid_argument("'text' must be a string");
    if (!j["label"].is_number_integer()) throw std::invalid_argument("'label' must be an integer");
    PostRecord r;
    r.text = j["text"].get<std::string>();
    const auto label = j["label"].get<std::int64_t>();
    if (label < 1 || label > 3) throw std::invalid_argument("label " + std::to_string(label) + " outside {1, 2, 3}");
    r.label = static_cast<Label>(label);
    if (r.text.empty()) throw std::invalid_argument("'text' is empty");
    if (j.contains("id")) {
        if (!j["id"].is_string()) throw std::invalid_argument("'id' must be a string");
        r.id = j["id"].get<std::string>();
    }
    return r;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

LoadResult parse_jsonl(std::string_view content) {
    LoadResult result;
    std::size_t line_no = 0, pos = 0;
    while (pos < content.size()) {
        std::size_t end = content.find('\n', pos);
        if (end == std::string_view::npos) end = content.size();
        std::string_view line = content.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
        try {
            result.records.push_back(parse_record(line));
        } catch (const std::exception& e) {
            result.errors.push_back({line_no, e.what()});
        }
    }
    return result;
}

LoadResult load_jsonl(const std::filesystem::path& path) { return parse_jsonl(read_file(path)); }

std::vector<PostRecord> load_jsonl_strict(const std::filesystem::path& path) {
    auto result = load_jsonl(path);
    if (!result.ok()) {
        throw DataError(path.string() + ": " + std::to_string(result.errors.size()) + " malformed line(s)\n" +
                        result.error_summary());
    }
    return std::move(result.records);
}

std::string to_jsonl(std::span<const PostRecord> records) {
    std::string out;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["text"] = r.text;
        j["label"] = r.label;
        if (r.id) j["id"] = *r.id;
        out += j.dump();
        out += '\n';
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const PostRecord> records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_jsonl(records);
    if (!out) throw DataError("write failed for " + path.string());
}

FilterResult filter_short(std::span<const PostRecord> records, const Vocabulary& vocab, std::size_t min_tokens) {
    FilterResult out;
    for (const auto& r : records) {
        if (tokenize(r.text, vocab).size() >= min_tokens) {
            out.records.push_back(r);
        } else {
            ++out.dropped;
        }
    }
    return out;
}

std::array<std::size_t, 3> class_counts(std::span<const PostRecord> records) {
    std::array<std::size_t, 3> counts{};
    for (const auto& r : records) {
        if (r.label < 1 || r.label > 3) throw DataError("label " + std::to_string(r.label) + " outside {1, 2, 3}");
        ++counts[static_cast<std::size_t>(r.label - 1)];
    }
    return counts;
}

std::vector<Label> labels_of(std::span<const PostRecord> records) {
    std::vector<Label> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label);
    return out;
}

std::vector<std::string> texts_of(std::span<const PostRecord> records) {
    std::vector<std::string> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.text);
    return out;
}

Splits stratified_split(std::span<const PostRecord> records, std::uint64_t seed, const SplitRatios& ratios) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
        std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
        throw std::invalid_argument("stratified_split: ratios must be non-negative and sum to 1");
    }
    std::array<std::vector<std::size_t>, 3> by_class;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const Label y = records[i].label;
        if (y < 1 || y > 3) throw DataError("label " + std::to_string(y) + " outside {1, 2, 3}");
        by_class[static_cast<std::size_t>(y - 1)].push_back(i);
    }
    for (std::size_t c = 0; c < 3; ++c) {
        // An absent class is fine; one or two members cannot fill three parts.
        if (!by_class[c].empty() && by_class[c].size() < 3) {
            throw DataError("stratified_split: class " + std::to_string(c + 1) + " has " +
                            std::to_string(by_class[c].size()) + " member(s); at least 3 are required");
        }
    }
    Rng rng(seed);
    Splits out;
    for (auto& idx : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        // The small epsilon keeps shares like 0.1 * 30 = 3.0000000000000004 from
        // misrounding in the other direction.
        const double n = static_cast<double>(idx.size());
        const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
        const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
        const std::size_t n_train = idx.size() - n_val - n_test;
        for (std::size_t k = 0; k < idx.size(); ++k) {
            auto& part = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
            part.push_back(records[idx[k]]);
        }
    }
    return out;
}

SyntheticSpec SyntheticSpec::defaults() {
    SyntheticSpec s;
    s.first_person = {"i", "me", "my", "mine", "myself", "we", "us", "our"};
    s.third_person = {"she", "her", "he", "him", "his", "they", "them", "their", "someone", "people"};
    s.cues = {"allowance", "sponsor", "paid", "monthly", "transfer", "gifts", "daddy", "arrangement", "budget", "cash"};
    s.filler = {"the",    "a",      "today",  "coffee", "weather", "city",   "train",  "movie",  "friends", "work",
                "music",  "night",  "dinner", "photo",  "weekend", "park",   "book",   "game",   "school",  "rain",
                "happy",  "tired",  "long",   "new",    "old",     "small",  "big",    "really", "just",    "very",
                "went",   "saw",    "made",   "got",    "walked",  "liked",  "played", "cooked", "read",    "watched",
                "and",    "but",    "so",     "then",   "with",    "at",     "in",     "on",     "after",   "before",
                "street", "market", "beach",  "office", "garden",  "bus",    "tea",    "bread",  "song",    "show"};
    return s;
}

void SyntheticSpec::validate() const {
    if (n_total == 0) throw std::invalid_argument("synthetic: n_total must be positive");
    double sum = 0.0;
    for (double p : priors) {
        if (!(p >= 0.0)) throw std::invalid_argument("synthetic: priors must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("synthetic: priors must sum to 1");
    if (!(ambiguity_rate >= 0.0 && ambiguity_rate <= 1.0)) {
        throw std::invalid_argument("synthetic: ambiguity_rate must lie in [0, 1]");
    }
    if (!(marker_noise >= 0.0 && marker_noise <= 1.0)) {
        throw std::invalid_argument("synthetic: marker_noise must lie in [0, 1]");
    }
    if (min_words < 5) throw std::invalid_argument("synthetic: min_words must be at least 5");
    if (max_words < min_words) throw std::invalid_argument("synthetic: max_words must be >= min_words");
    const std::pair<const char*, const std::vector<std::string>*> pools[] = {
        {"first_person", &first_person}, {"third_person", &third_person}, {"cues", &cues}, {"filler", &filler}};
    for (const auto& [name, pool] : pools) {
        if (pool->empty()) throw std::invalid_argument(std::string("synthetic: lexicon '") + name + "' is empty");
        for (const auto& w : *pool) {
            if (w.empty() || w.find_first_of(" \t\r\n") != std::string::npos) {
                throw std::invalid_argument(std::string("synthetic: lexicon '") + name +
                                            "' entries must be single non-empty words");
            }
        }
    }
    std::set<std::string> markers(first_person.begin(), first_person.end());
    markers.insert(third_person.begin(), third_person.end());
    for (const auto& w : cues) {
        if (markers.count(w)) throw std::invalid_argument("synthetic: cue '" + w + "' also appears as a marker");
    }
    for (const auto& w : first_person) {
        for (const auto& v : third_person) {
            if (w == v) throw std::invalid_argument("synthetic: '" + w + "' is both a first- and third-person marker");
        }
    }
    std::set<std::string> reserved = markers;
    reserved.insert(cues.begin(), cues.end());
    for (const auto& w : filler) {
        if (reserved.count(w)) throw std::invalid_argument("synthetic: filler word '" + w + "' overlaps a marker or cue");
    }
}

std::vector<PostRecord> gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    std::discrete_distribution<int> pick_class(spec.priors.begin(), spec.priors.end());
    std::uniform_int_distribution<std::size_t> pick_len(spec.min_words, spec.max_words);
    std::bernoulli_distribution noise(spec.marker_noise), ambiguous(spec.ambiguity_rate), coin(0.5);
    auto draw = [&](const std::vector<std::string>& pool) -> const std::string& {
        return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
    };

    std::vector<PostRecord> out;
    out.reserve(spec.n_total);
    for (std::size_t n = 0; n < spec.n_total; ++n) {
        const Label label = pick_class(rng) + 1;
        const std::size_t len = pick_len(rng);
        std::vector<std::string> words;
        words.reserve(len);
        for (std::size_t i = 0; i < len; ++i) {
            if (noise(rng)) {
                words.push_back(draw(coin(rng) ? spec.first_person : spec.third_person));
            } else {
                words.push_back(draw(spec.filler));
            }
        }
        if (label == 2) {
            if (ambiguous(rng)) {
                const auto at = std::uniform_int_distribution<std::size_t>(0, len - 1)(rng);
                words[at] = draw(spec.cues);
            }
        } else {
            const auto at = std::uniform_int_distribution<std::size_t>(0, len - 2)(rng);
            words[at] = draw(label == 1 ? spec.first_person : spec.third_person);
            words[at + 1] = draw(spec.cues);
        }
        PostRecord r;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) r.text += ' ';
            r.text += words[i];
        }
        r.label = label;
        r.id = "syn-" + std::to_string(n);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace stn
