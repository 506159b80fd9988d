#include "stn/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "stn/errors.hpp"

namespace stn {

namespace {

constexpr const char* kSpecialNames[kNumSpecials] = {"<pad>", "<unk>", "<bos>", "<eos>"};

std::uint64_t pair_key(std::int32_t left, std::int32_t right) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(left)) << 32) |
           static_cast<std::uint32_t>(right);
}

std::string to_hex(const std::string& bytes) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 15]);
    }
    return out;
}

int hex_digit(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
}

std::string from_hex(std::string_view hex, std::size_t line) {
    if (hex.empty() || hex.size() % 2 != 0) {
        throw DataError("vocabulary line " + std::to_string(line) + ": malformed hex token");
    }
    std::string out;
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        const int hi = hex_digit(hex[i]), lo = hex_digit(hex[i + 1]);
        if (hi < 0 || lo < 0) throw DataError("vocabulary line " + std::to_string(line) + ": malformed hex token");
        out.push_back(static_cast<char>(hi * 16 + lo));
    }
    return out;
}

// Length of the valid UTF-8 sequence starting at s[i], or 0.
std::size_t utf8_sequence(const std::string& s, std::size_t i) {
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
    const unsigned char c = byte(i);
    if (c < 0x80) return 1;
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
        len = 2;
        cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
        len = 3;
        cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
        len = 4;
        cp = c & 0x07;
    } else {
        return 0;
    }
    if (i + len > s.size()) return 0;
    for (std::size_t k = 1; k < len; ++k) {
        if ((byte(i + k) & 0xC0) != 0x80) return 0;
        cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    static constexpr std::uint32_t min_cp[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_cp[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
    return len;
}

}  // namespace

Vocabulary::Vocabulary() {
    for (const char* name : kSpecialNames) tokens_.emplace_back(name);
    for (int b = 0; b < 256; ++b) {
        tokens_.emplace_back(1, static_cast<char>(b));
        ids_.emplace(tokens_.back(), static_cast<std::int32_t>(tokens_.size() - 1));
    }
}

const std::string& Vocabulary::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                                std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::int32_t Vocabulary::add_merge(std::int32_t left, std::int32_t right) {
    if (is_special(left) || is_special(right)) throw std::invalid_argument("merge of a special token");
    std::string bytes = token(left) + token(right);
    std::int32_t result;
    if (auto it = ids_.find(bytes); it != ids_.end()) {
        result = it->second;
    } else {
        tokens_.push_back(bytes);
        result = static_cast<std::int32_t>(tokens_.size() - 1);
        ids_.emplace(std::move(bytes), result);
    }
    if (!rank_.emplace(pair_key(left, right), merges_.size()).second) {
        throw std::invalid_argument("duplicate merge " + std::to_string(left) + " " + std::to_string(right));
    }
    merges_.push_back({left, right, result});
    return result;
}

std::int64_t Vocabulary::merge_rank(std::int32_t left, std::int32_t right) const {
    auto it = rank_.find(pair_key(left, right));
    return it == rank_.end() ? -1 : static_cast<std::int64_t>(it->second);
}

std::string Vocabulary::serialize() const {
    std::ostringstream os;
    os << "bpe-vocab v1 " << tokens_.size() << '\n';
    for (const auto& t : tokens_) os << to_hex(t) << '\n';
    os << "#merges\n";
    for (const auto& m : merges_) os << m.left << ' ' << m.right << '\n';
    return os.str();
}

Vocabulary Vocabulary::parse(std::string_view text) {
    std::vector<std::string> lines;
    {
        std::string cur;
        for (char c : text) {
            if (c == '\n') {
                if (!cur.empty() && cur.back() == '\r') cur.pop_back();
                lines.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) lines.push_back(std::move(cur));
    }
    std::size_t declared = 0;
    {
        std::istringstream header(lines.empty() ? std::string() : lines[0]);
        std::string magic, version;
        if (!(header >> magic >> version >> declared) || magic != "bpe-vocab" || version != "v1") {
            throw DataError("vocabulary: missing 'bpe-vocab v1 <size>' header");
        }
    }
    if (declared < kByteVocab || lines.size() < declared + 2) throw DataError("vocabulary: truncated token list");
    Vocabulary vocab;
    for (std::size_t i = 0; i < kByteVocab; ++i) {
        if (from_hex(lines[i + 1], i + 2) != vocab.tokens_[i]) {
            throw DataError("vocabulary line " + std::to_string(i + 2) + ": unexpected special or byte token");
        }
    }
    std::vector<std::string> learned;
    for (std::size_t i = kByteVocab; i < declared; ++i) learned.push_back(from_hex(lines[i + 1], i + 2));
    if (lines[declared + 1] != "#merges") throw DataError("vocabulary: missing #merges sentinel");
    for (std::size_t i = declared + 2; i < lines.size(); ++i) {
        std::istringstream ls(lines[i]);
        std::int32_t left = 0, right = 0;
        std::string rest;
        if (!(ls >> left >> right) || (ls >> rest)) {
            throw DataError("vocabulary line " + std::to_string(i + 1) + ": expected 'left right'");
        }
        if (left < 0 || right < 0 || static_cast<std::size_t>(left) >= vocab.size() ||
            static_cast<std::size_t>(right) >= vocab.size() || vocab.is_special(left) || vocab.is_special(right)) {
            throw DataError("vocabulary line " + std::to_string(i + 1) + ": merge refers to an unknown token");
        }
        const std::int32_t result = vocab.add_merge(left, right);
        const std::size_t slot = static_cast<std::size_t>(result);
        if (slot >= kByteVocab && (slot - kByteVocab >= learned.size() || learned[slot - kByteVocab] != vocab.token(result))) {
            throw DataError("vocabulary line " + std::to_string(i + 1) + ": merge output disagrees with token list");
        }
    }
    if (vocab.size() != declared) throw DataError("vocabulary: merges do not produce the declared token list");
    return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary to " + path.string());
    out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

bool operator==(const Vocabulary& a, const Vocabulary& b) {
    if (a.tokens_ != b.tokens_ || a.merges_.size() != b.merges_.size()) return false;
    for (std::size_t i = 0; i < a.merges_.size(); ++i) {
        const auto& x = a.merges_[i];
        const auto& y = b.merges_[i];
        if (x.left != y.left || x.right != y.right || x.result != y.result) return false;
    }
    return true;
}

Vocabulary train_bpe(std::span<const std::string> texts, std::size_t vocab_size) {
    if (texts.empty()) throw std::invalid_argument("train_bpe: empty corpus");
    if (vocab_size < kByteVocab) {
        throw std::invalid_argument("train_bpe: vocab_size must be at least " + std::to_string(kByteVocab));
    }
    Vocabulary vocab;

    // Doubly linked symbol list over all texts; -1 terminates each text.
    std::vector<std::int32_t> sym;
    std::vector<std::int64_t> prev, next;
    for (const auto& text : texts) {
        const auto start = static_cast<std::int64_t>(sym.size());
        for (std::size_t i = 0; i < text.size(); ++i) {
            const auto pos = static_cast<std::int64_t>(sym.size());
            sym.push_back(static_cast<std::int32_t>(kNumSpecials + static_cast<unsigned char>(text[i])));
            prev.push_back(pos == start ? -1 : pos - 1);
            next.push_back(i + 1 == text.size() ? -1 : pos + 1);
        }
    }

    std::unordered_map<std::uint64_t, std::int64_t> counts;
    std::unordered_map<std::uint64_t, std::vector<std::int64_t>> where;

    // Highest count first, then the lexicographically smaller pair of byte strings.
    const auto before = [&vocab](const std::pair<std::int64_t, std::uint64_t>& a,
                                 const std::pair<std::int64_t, std::uint64_t>& b) {
        if (a.first != b.first) return a.first > b.first;
        const auto al = static_cast<std::int32_t>(a.second >> 32), ar = static_cast<std::int32_t>(a.second & 0xffffffffu);
        const auto bl = static_cast<std::int32_t>(b.second >> 32), br = static_cast<std::int32_t>(b.second & 0xffffffffu);
        if (int c = vocab.token(al).compare(vocab.token(bl)); c != 0) return c < 0;
        if (int c = vocab.token(ar).compare(vocab.token(br)); c != 0) return c < 0;
        return a.second < b.second;
    };
    std::set<std::pair<std::int64_t, std::uint64_t>, decltype(before)> queue(before);

    const auto bump = [&](std::int32_t left, std::int32_t right, std::int64_t delta, std::int64_t pos) {
        const auto key = pair_key(left, right);
        auto& c = counts[key];
        if (c > 0) queue.erase({c, key});
        c += delta;
        if (c > 0) queue.insert({c, key});
        if (delta > 0) where[key].push_back(pos);
    };

    for (std::size_t i = 0; i < sym.size(); ++i) {
        if (next[i] >= 0) bump(sym[i], sym[static_cast<std::size_t>(next[i])], 1, static_cast<std::int64_t>(i));
    }

    while (vocab.size() < vocab_size && !queue.empty()) {
        const auto key = queue.begin()->second;
        const auto left = static_cast<std::int32_t>(key >> 32);
        const auto right = static_cast<std::int32_t>(key & 0xffffffffu);
        const std::int32_t merged = vocab.add_merge(left, right);

        auto positions = std::move(where[key]);
        where.erase(key);
        std::sort(positions.begin(), positions.end());
        positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
        for (const auto pos : positions) {
            const auto i = static_cast<std::size_t>(pos);
            if (sym[i] != left || next[i] < 0) continue;
            const auto j = static_cast<std::size_t>(next[i]);
            if (sym[j] != right) continue;
            if (prev[i] >= 0) bump(sym[static_cast<std::size_t>(prev[i])], left, -1, -1);
            bump(left, right, -1, -1);
            if (next[j] >= 0) bump(right, sym[static_cast<std::size_t>(next[j])], -1, -1);

            sym[i] = merged;
            sym[j] = -2;
            next[i] = next[j];
            if (next[j] >= 0) prev[static_cast<std::size_t>(next[j])] = pos;

            if (prev[i] >= 0) bump(sym[static_cast<std::size_t>(prev[i])], merged, 1, prev[i]);
            if (next[i] >= 0) bump(merged, sym[static_cast<std::size_t>(next[i])], 1, pos);
        }
        // The sweep consumes every occurrence; the count is zero here.
        if (auto it = counts.find(key); it != counts.end() && it->second > 0) queue.erase({it->second, key});
        counts.erase(key);
    }
    return vocab;
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab) {
    std::vector<std::int32_t> ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(static_cast<std::int32_t>(kNumSpecials + c));
    while (ids.size() > 1) {
        std::int64_t best = -1;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
            const auto r = vocab.merge_rank(ids[i], ids[i + 1]);
            if (r >= 0 && (best < 0 || r < best)) best = r;
        }
        if (best < 0) break;
        const Merge& m = vocab.merges()[static_cast<std::size_t>(best)];
        std::size_t out = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i + 1 < ids.size() && ids[i] == m.left && ids[i + 1] == m.right) {
                ids[out++] = m.result;
                ++i;
            } else {
                ids[out++] = ids[i];
            }
        }
        ids.resize(out);
    }
    return ids;
}

TokenizedPost encode(std::string_view text, const Vocabulary& vocab, const EncodeOptions& options) {
    if (options.max_len == 0) throw std::invalid_argument("encode: max_len must be positive");
    if (std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); })) {
        throw std::invalid_argument("encode: empty text");
    }
    std::vector<std::int32_t> content = tokenize(text, vocab);
    std::vector<std::int32_t> seq;
    if (options.add_bos_eos) seq.push_back(kBosId);
    seq.insert(seq.end(), content.begin(), content.end());
    if (options.add_bos_eos) seq.push_back(kEosId);

    TokenizedPost post;
    post.valid_len = std::min(seq.size(), options.max_len);
    post.ids.assign(options.max_len, kPadId);
    post.mask.assign(options.max_len, 0);
    for (std::size_t i = 0; i < post.valid_len; ++i) {
        post.ids[i] = seq[i];
        post.mask[i] = 1;
    }
    return post;
}

std::string decode(std::span<const std::int32_t> ids, const Vocabulary& vocab) {
    std::string bytes;
    for (auto id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab.size()) {
            throw std::out_of_range("decode: id " + std::to_string(id) + " outside vocabulary of size " +
                                    std::to_string(vocab.size()));
        }
        if (!vocab.is_special(id)) bytes += vocab.token(id);
    }
    std::string out;
    out.reserve(bytes.size());
    for (std::size_t i = 0; i < bytes.size();) {
        const std::size_t len = utf8_sequence(bytes, i);
        if (len == 0) {
            out += "\xEF\xBF\xBD";
            ++i;
        } else {
            out.append(bytes, i, len);
            i += len;
        }
    }
    return out;
}

}  // namespace stn
