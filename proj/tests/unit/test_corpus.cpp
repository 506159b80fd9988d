#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "stn/corpus.hpp"
#include "stn/errors.hpp"

using namespace stn;

namespace {

std::vector<PostRecord> with_counts(std::array<std::size_t, 3> counts) {
    std::vector<PostRecord> out;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            out.push_back({"post " + std::to_string(c) + "-" + std::to_string(i), c + 1, std::to_string(out.size())});
        }
    }
    return out;
}

std::set<std::string> ids(const std::vector<PostRecord>& r) {
    std::set<std::string> s;
    for (const auto& x : r) s.insert(*x.id);
    return s;
}

bool contains_word(const std::string& text, const std::vector<std::string>& lex) {
    std::istringstream in(text);
    std::string w;
    while (in >> w) {
        if (std::find(lex.begin(), lex.end(), w) != lex.end()) return true;
    }
    return false;
}

}  // namespace

TEST(Jsonl, ParsesInOrder) {
    const auto r = parse_jsonl("{\"text\":\"a b\",\"label\":1}\n{\"text\":\"c\",\"label\":3,\"id\":\"x\"}\n");
    ASSERT_TRUE(r.ok());
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.records[0].text, "a b");
    EXPECT_EQ(r.records[1].label, 3);
    EXPECT_EQ(*r.records[1].id, "x");
    EXPECT_FALSE(r.records[0].id);
}

TEST(Jsonl, ErrorsNameTheLine) {
    const auto r = parse_jsonl("{\"text\":\"a\",\"label\":1}\n{\"text\":\"b\",\"label\":4}\n\n{\"label\":2}\nnot json\n");
    EXPECT_EQ(r.records.size(), 1u);
    ASSERT_EQ(r.errors.size(), 3u);
    EXPECT_EQ(r.errors[0].line, 2u);
    EXPECT_EQ(r.errors[1].line, 4u);
    EXPECT_EQ(r.errors[2].line, 5u);
    EXPECT_NE(r.error_summary().find("line 2"), std::string::npos);
    EXPECT_FALSE(parse_jsonl("{\"text\":\"\",\"label\":1}\n").ok());
}

TEST(Jsonl, CrlfMatchesLf) {
    const std::string lf = "{\"text\":\"a b\",\"label\":1}\n{\"text\":\"c\",\"label\":2}\n";
    std::string crlf;
    for (char ch : lf) {
        if (ch == '\n') crlf += '\r';
        crlf += ch;
    }
    EXPECT_EQ(parse_jsonl(lf).records, parse_jsonl(crlf).records);
}

TEST(Jsonl, FileRoundTripAndStrictLoad) {
    const auto dir = std::filesystem::temp_directory_path() / "stn_corpus_test";
    std::filesystem::create_directories(dir);
    const auto records = with_counts({2, 2, 1});
    write_jsonl(dir / "c.jsonl", records);
    EXPECT_EQ(load_jsonl_strict(dir / "c.jsonl"), records);
    std::ofstream(dir / "bad.jsonl") << "{\"text\":\"a\",\"label\":9}\n";
    EXPECT_THROW(load_jsonl_strict(dir / "bad.jsonl"), DataError);
    EXPECT_THROW(load_jsonl_strict(dir / "missing.jsonl"), DataError);
    std::filesystem::remove_all(dir);
}

TEST(Filter, BoundaryAndOrder) {
    const Vocabulary bytes;  // one token per byte
    const std::vector<PostRecord> r{{"abcd", 1, "a"}, {"abcde", 2, "b"}, {"xy", 2, "c"}, {"abcdefg", 3, "d"}};
    const auto f = filter_short(r, bytes, 5);
    ASSERT_EQ(f.records.size(), 2u);
    EXPECT_EQ(*f.records[0].id, "b");
    EXPECT_EQ(*f.records[1].id, "d");
    EXPECT_EQ(f.dropped, 2u);
}

TEST(Split, TableCountsFloorArithmetic) {
    const auto s = stratified_split(with_counts({108, 2853, 106}), 7);
    EXPECT_EQ(class_counts(s.train), (std::array<std::size_t, 3>{88, 2283, 86}));
    EXPECT_EQ(class_counts(s.val), (std::array<std::size_t, 3>{10, 285, 10}));
    EXPECT_EQ(class_counts(s.test), (std::array<std::size_t, 3>{10, 285, 10}));
}

TEST(Split, SingleClassHundred) {
    const auto s = stratified_split(with_counts({0, 100, 0}), 1);
    EXPECT_EQ(s.train.size(), 80u);
    EXPECT_EQ(s.val.size(), 10u);
    EXPECT_EQ(s.test.size(), 10u);
}

TEST(Split, DisjointCoveringDeterministic) {
    const auto all = with_counts({31, 200, 17});
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto s = stratified_split(all, seed);
        const auto a = ids(s.train), b = ids(s.val), c = ids(s.test);
        EXPECT_EQ(a.size() + b.size() + c.size(), all.size());
        std::set<std::string> u = a;
        u.insert(b.begin(), b.end());
        u.insert(c.begin(), c.end());
        EXPECT_EQ(u.size(), all.size());
        const auto again = stratified_split(all, seed);
        EXPECT_EQ(again.train, s.train);
        EXPECT_EQ(again.test, s.test);
    }
    EXPECT_NE(stratified_split(all, 1).test, stratified_split(all, 2).test);
}

TEST(Split, RejectsTinyClassAndBadRatios) {
    try {
        stratified_split(with_counts({2, 50, 10}), 1);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos) << e.what();
    }
    EXPECT_THROW(stratified_split(with_counts({10, 10, 10}), 1, {0.5, 0.1, 0.1}), std::invalid_argument);
}

TEST(Synthetic, CountsAndLexicalStructure) {
    const auto spec = SyntheticSpec::defaults();
    const auto r = gen_synthetic(spec);
    ASSERT_EQ(r.size(), spec.n_total);
    const auto counts = class_counts(r);
    // Within three standard deviations of the multinomial expectation.
    for (int c = 0; c < 3; ++c) {
        const double e = spec.priors[c] * static_cast<double>(spec.n_total);
        EXPECT_LT(std::abs(static_cast<double>(counts[c]) - e), 3.0 * std::sqrt(e * (1 - spec.priors[c])));
    }
    std::size_t class2_cues = 0;
    for (const auto& p : r) {
        std::istringstream in(p.text);
        std::size_t words = 0;
        for (std::string w; in >> w;) ++words;
        EXPECT_GE(words, spec.min_words);
        const bool cue = contains_word(p.text, spec.cues);
        if (p.label == 1) EXPECT_TRUE(cue && contains_word(p.text, spec.first_person)) << p.text;
        if (p.label == 3) EXPECT_TRUE(cue && contains_word(p.text, spec.third_person)) << p.text;
        if (p.label == 2 && cue) ++class2_cues;
    }
    const double rate = static_cast<double>(class2_cues) / static_cast<double>(counts[1]);
    EXPECT_NEAR(rate, spec.ambiguity_rate, 0.015);
    EXPECT_EQ(gen_synthetic(spec), r);
}

TEST(Synthetic, ValidationRejectsOverlapAndBadPriors) {
    auto s = SyntheticSpec::defaults();
    s.cues.push_back("my");
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = SyntheticSpec::defaults();
    s.priors = {0.5, 0.5, 0.1};
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = SyntheticSpec::defaults();
    s.min_words = 4;
    EXPECT_THROW(s.validate(), std::invalid_argument);
}
