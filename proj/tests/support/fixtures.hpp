#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stn/corpus.hpp"
#include "stn/tokenizer.hpp"
#include "stn/trainer.hpp"

namespace stn::testing {

/// Balanced, cue-unambiguous synthetic corpus with its vocabulary and encoding.
struct SmallCorpus {
    std::vector<PostRecord> records;
    Vocabulary vocab;
    EncodeOptions options;
    Dataset data;
};

inline SmallCorpus separable_corpus(std::size_t n, std::uint64_t seed, std::size_t vocab_size = 300,
                                    std::size_t max_len = 64) {
    auto spec = SyntheticSpec::defaults();
    spec.n_total = n;
    spec.priors = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    spec.ambiguity_rate = 0.0;
    spec.seed = seed;
    SmallCorpus c;
    c.records = gen_synthetic(spec);
    const auto texts = texts_of(c.records);
    c.vocab = train_bpe(texts, vocab_size);
    c.options.max_len = max_len;
    c.data = encode_dataset(c.records, c.vocab, c.options);
    return c;
}

inline ModelConfig small_model(std::size_t vocab_size, std::size_t d_model = 16, std::size_t layers = 1) {
    ModelConfig m;
    m.encoder.vocab_size = vocab_size;
    m.encoder.max_len = 64;
    m.encoder.d_model = d_model;
    m.encoder.n_heads = 2;
    m.encoder.n_layers = layers;
    m.encoder.ffn_dim = 2 * d_model;
    m.encoder.dropout = 0.1;
    m.gru_hidden = 8;
    m.head_hidden = 8;
    m.head_dropout = 0.1;
    return m;
}

}  // namespace stn::testing
