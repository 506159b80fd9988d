#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>

#include "stn/batch.hpp"
#include "stn/errors.hpp"
#include "stn/tokenizer.hpp"

using namespace stn;

namespace {

// Reference BPE: recount every adjacent pair over the whole corpus after
// each merge and pick (max count, then smallest bytes).
std::vector<std::pair<std::string, std::string>> brute_force_merges(const std::vector<std::string>& texts,
                                                                     std::size_t n_merges) {
    std::vector<std::vector<std::string>> seqs;
    for (const auto& t : texts) {
        std::vector<std::string> s;
        for (char c : t) s.emplace_back(1, c);
        seqs.push_back(s);
    }
    std::vector<std::pair<std::string, std::string>> merges;
    for (std::size_t m = 0; m < n_merges; ++m) {
        std::map<std::pair<std::string, std::string>, long> counts;
        for (const auto& s : seqs) {
            for (std::size_t i = 0; i + 1 < s.size(); ++i) ++counts[{s[i], s[i + 1]}];
        }
        if (counts.empty()) break;
        auto best = counts.begin();
        for (auto it = counts.begin(); it != counts.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        const auto pair = best->first;
        merges.push_back(pair);
        for (auto& s : seqs) {
            std::vector<std::string> out;
            for (std::size_t i = 0; i < s.size(); ++i) {
                if (i + 1 < s.size() && s[i] == pair.first && s[i + 1] == pair.second) {
                    out.push_back(pair.first + pair.second);
                    ++i;
                } else {
                    out.push_back(s[i]);
                }
            }
            s = out;
        }
    }
    return merges;
}

}  // namespace

TEST(Vocabulary, SpecialsAndBytes) {
    Vocabulary v;
    EXPECT_EQ(v.size(), 260u);
    EXPECT_EQ(v.token(kPadId), "<pad>");
    EXPECT_EQ(v.token(kEosId), "<eos>");
    EXPECT_EQ(v.token(4 + 'a'), "a");
    EXPECT_TRUE(v.is_special(3));
    EXPECT_FALSE(v.is_special(4));
}

TEST(TrainBpe, FirstMergeIsMostFrequentPair) {
    const std::vector<std::string> texts{"aaab", "aaab"};
    const auto v = train_bpe(texts, 261);
    ASSERT_EQ(v.merges().size(), 1u);
    EXPECT_EQ(v.token(v.merges()[0].result), "aa");
    EXPECT_EQ(v.size(), 261u);
}

TEST(TrainBpe, NoBudgetMeansNoMerges) {
    const std::vector<std::string> texts{"hello world"};
    EXPECT_EQ(train_bpe(texts, 260).merges().size(), 0u);
    EXPECT_THROW(train_bpe(texts, 259), std::invalid_argument);
    EXPECT_THROW(train_bpe({}, 300), std::invalid_argument);
}

TEST(TrainBpe, MatchesBruteForceOracle) {
    std::mt19937_64 rng(21);
    const std::string alphabet = "abcd #";
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> texts;
        std::uniform_int_distribution<int> len(1, 30), ch(0, static_cast<int>(alphabet.size()) - 1);
        for (int i = 0; i < 8; ++i) {
            std::string t;
            for (int k = len(rng); k > 0; --k) t += alphabet[static_cast<std::size_t>(ch(rng))];
            texts.push_back(t);
        }
        const auto v = train_bpe(texts, 260 + 25);
        const auto expected = brute_force_merges(texts, 25);
        ASSERT_EQ(v.merges().size(), expected.size()) << "trial " << trial;
        for (std::size_t m = 0; m < expected.size(); ++m) {
            EXPECT_EQ(v.token(v.merges()[m].left), expected[m].first) << "trial " << trial << " merge " << m;
            EXPECT_EQ(v.token(v.merges()[m].right), expected[m].second) << "trial " << trial << " merge " << m;
        }
    }
}

TEST(TrainBpe, Deterministic) {
    const std::vector<std::string> texts{"the cat sat on the mat", "the hat"};
    EXPECT_TRUE(train_bpe(texts, 290) == train_bpe(texts, 290));
}

TEST(Encode, FixedLengthAndPrefixMask) {
    const std::vector<std::string> texts{"hashtag #sd and emoji \xF0\x9F\x98\x80"};
    const auto v = train_bpe(texts, 280);
    const auto p = encode("hashtag #sd", v);
    EXPECT_EQ(p.ids.size(), 128u);
    EXPECT_EQ(p.mask.size(), 128u);
    for (std::size_t i = 0; i < 128; ++i) {
        EXPECT_EQ(p.mask[i], i < p.valid_len ? 1 : 0);
        if (i >= p.valid_len) EXPECT_EQ(p.ids[i], kPadId);
    }
}

TEST(Encode, FiveByteTextHasValidLenFive) {
    Vocabulary v;
    const auto p = encode("abcde", v);
    EXPECT_EQ(p.valid_len, 5u);
    EXPECT_EQ(p.mask[4], 1);
    EXPECT_EQ(p.mask[5], 0);
}

TEST(Encode, TruncatesOnTheRight) {
    Vocabulary v;
    const std::string text(300, 'x');
    const auto p = encode(text, v, {.max_len = 16});
    EXPECT_EQ(p.valid_len, 16u);
    EXPECT_EQ(p.ids.size(), 16u);
}

TEST(Encode, RejectsBlankText) {
    Vocabulary v;
    EXPECT_THROW(encode("", v), std::invalid_argument);
    EXPECT_THROW(encode("  \t\n", v), std::invalid_argument);
}

TEST(Encode, BosEosFlag) {
    Vocabulary v;
    const auto p = encode("ab", v, {.max_len = 8, .add_bos_eos = true});
    EXPECT_EQ(p.valid_len, 4u);
    EXPECT_EQ(p.ids[0], kBosId);
    EXPECT_EQ(p.ids[3], kEosId);
}

TEST(Encode, NeverProducesUnknownForUnseenBytes) {
    const auto v = train_bpe(std::vector<std::string>{"plain ascii"}, 270);
    const std::string odd = "\xE4\xBD\xA0\xE5\xA5\xBD \x01\xFF";
    for (auto id : tokenize(odd, v)) EXPECT_NE(id, kUnkId);
}

TEST(Decode, RoundTripAndSpecials) {
    const auto v = train_bpe(std::vector<std::string>{"hashtag #sd hashtag #sd", "aaab"}, 290);
    const auto p = encode("hashtag #sd", v);
    EXPECT_EQ(decode(std::span(p.ids).first(p.valid_len), v), "hashtag #sd");
    EXPECT_EQ(decode(p.ids, v), "hashtag #sd");
    EXPECT_EQ(decode(std::vector<std::int32_t>{kPadId, kPadId}, v), "");
    EXPECT_THROW(decode(std::vector<std::int32_t>{static_cast<std::int32_t>(v.size())}, v), std::out_of_range);
}

TEST(Decode, TrainedMergeDecodesToItsBytes) {
    const auto v = train_bpe(std::vector<std::string>{"aaab", "aaab"}, 261);
    EXPECT_EQ(decode(std::vector<std::int32_t>{v.merges()[0].result}, v), "aa");
}

TEST(Decode, InvalidUtf8BecomesReplacementCharacter) {
    Vocabulary v;
    const std::vector<std::int32_t> ids{4 + 'a', 4 + 0xFF, 4 + 'b'};
    EXPECT_EQ(decode(ids, v), "a\xEF\xBF\xBD" "b");
}

TEST(VocabularyFile, BitExactRoundTrip) {
    const auto v = train_bpe(std::vector<std::string>{"the quick brown fox \xF0\x9F\x98\x80", "jumps over\nthe lazy dog"}, 300);
    const auto text = v.serialize();
    EXPECT_EQ(text.rfind("bpe-vocab v1 " + std::to_string(v.size()) + "\n", 0), 0u);
    const auto back = Vocabulary::parse(text);
    EXPECT_TRUE(back == v);
    EXPECT_EQ(back.serialize(), text);

    std::string crlf;
    for (char c : text) {
        if (c == '\n') crlf += '\r';
        crlf += c;
    }
    EXPECT_TRUE(Vocabulary::parse(crlf) == v);

    const auto path = std::filesystem::temp_directory_path() / "stn_vocab_roundtrip.txt";
    v.save(path);
    EXPECT_TRUE(Vocabulary::load(path) == v);
    std::filesystem::remove(path);
}

TEST(VocabularyFile, RejectsMalformedInput) {
    EXPECT_THROW(Vocabulary::parse("not a vocab\n"), DataError);
    auto text = train_bpe(std::vector<std::string>{"abab"}, 262).serialize();
    EXPECT_THROW(Vocabulary::parse(text.substr(0, text.size() / 2)), DataError);
}

TEST(Tokenize, Deterministic) {
    const auto v = train_bpe(std::vector<std::string>{"sugar daddy allowance", "my allowance"}, 300);
    EXPECT_EQ(tokenize("allowance for my sugar", v), tokenize("allowance for my sugar", v));
}

TEST(Batch, TrimsToLongestValidPrefix) {
    Vocabulary v;
    std::vector<TokenizedPost> posts{encode("abc", v), encode("abcdef", v), encode("a", v)};
    const auto b = make_batch(posts);
    EXPECT_EQ(b.batch, 3u);
    EXPECT_EQ(b.length, 6u);
    EXPECT_EQ(b.valid_len(0), 3u);
    EXPECT_EQ(b.valid_len(2), 1u);
    const std::vector<std::size_t> rows{2, 0};
    const auto sub = make_batch(posts, rows);
    EXPECT_EQ(sub.length, 3u);
    EXPECT_EQ(sub.ids[0], posts[2].ids[0]);
    EXPECT_EQ(make_batch(posts, false).length, 128u);
}
